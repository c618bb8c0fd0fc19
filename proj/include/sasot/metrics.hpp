#pragma once

#include <map>
#include <string>
#include <vector>

namespace sasot::metrics {

struct EditCounts {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int ref_len = 0;

  int total() const { return substitutions + deletions + insertions; }
};

struct WerResult {
  double rate = 0.0;
  EditCounts counts;
  // Empty reference with non-empty hypothesis: rate = insertions / 1.
  bool degenerate = false;
};

// Minimal S+D+I alignment. Backtrace ties prefer substitution over deletion
// over insertion.
EditCounts edit_distance(const std::vector<std::string>& ref,
                         const std::vector<std::string>& hyp);

WerResult wer(const std::vector<std::string>& ref,
              const std::vector<std::string>& hyp);

struct AssignmentScore {
  std::map<int, int> channel_to_speaker;
  double rate = 0.0;
};

struct CpwerReport {
  std::map<int, int> best_permutation;  // channel index -> speaker id
  double best_rate = 0.0;
  std::vector<AssignmentScore> per_permutation;
  std::map<int, EditCounts> per_speaker;  // under the best assignment
  bool degenerate = false;                // total reference length was zero
};

// Exhaustive minimum over all bijective channel-to-speaker assignments.
// Channels are padded/truncated with empty lists to the speaker count;
// at most 4 speakers (the search is exhaustive).
CpwerReport cpwer(const std::map<int, std::vector<std::string>>& refs,
                  const std::vector<std::vector<std::string>>& hyp_channels);

}  // namespace sasot::metrics
