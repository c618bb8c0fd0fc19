#include "sasot/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace sasot::metrics {

EditCounts edit_distance(const std::vector<std::string>& ref,
                         const std::vector<std::string>& hyp) {
  const int n = static_cast<int>(ref.size());
  const int m = static_cast<int>(hyp.size());
  std::vector<std::vector<int>> cost(n + 1, std::vector<int>(m + 1, 0));
  for (int i = 0; i <= n; ++i) cost[i][0] = i;
  for (int j = 0; j <= m; ++j) cost[0][j] = j;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      const int sub = cost[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int del = cost[i - 1][j] + 1;
      const int ins = cost[i][j - 1] + 1;
      cost[i][j] = std::min({sub, del, ins});
    }
  }

  EditCounts counts;
  counts.ref_len = n;
  int i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const int sub_cost = ref[i - 1] == hyp[j - 1] ? 0 : 1;
      if (cost[i][j] == cost[i - 1][j - 1] + sub_cost) {
        counts.substitutions += sub_cost;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && cost[i][j] == cost[i - 1][j] + 1) {
      ++counts.deletions;
      --i;
      continue;
    }
    ++counts.insertions;
    --j;
  }
  return counts;
}

WerResult wer(const std::vector<std::string>& ref,
              const std::vector<std::string>& hyp) {
  WerResult result;
  result.counts = edit_distance(ref, hyp);
  if (ref.empty()) {
    result.degenerate = !hyp.empty();
    result.rate = static_cast<double>(result.counts.total());  // I / 1
    return result;
  }
  result.rate =
      static_cast<double>(result.counts.total()) / result.counts.ref_len;
  return result;
}

CpwerReport cpwer(const std::map<int, std::vector<std::string>>& refs,
                  const std::vector<std::vector<std::string>>& hyp_channels) {
  if (refs.empty())
    throw std::invalid_argument("cpwer: at least one reference speaker required");
  if (refs.size() > 4)
    throw std::invalid_argument(
        "unsupported-speaker-count: exhaustive assignment search is bounded "
        "at 4 speakers, got " +
        std::to_string(refs.size()));

  std::vector<int> speakers;
  speakers.reserve(refs.size());
  int total_ref = 0;
  for (const auto& [spk, words] : refs) {
    speakers.push_back(spk);
    total_ref += static_cast<int>(words.size());
  }

  // Pad or truncate the channel list to the speaker count.
  std::vector<std::vector<std::string>> channels = hyp_channels;
  channels.resize(speakers.size());

  CpwerReport report;
  report.degenerate = total_ref == 0;
  const double denom = total_ref > 0 ? total_ref : 1.0;

  std::vector<int> perm(channels.size());
  std::iota(perm.begin(), perm.end(), 0);
  bool first = true;
  do {
    // perm[k] is the channel assigned to speakers[k]
    AssignmentScore score;
    int total_edits = 0;
    std::map<int, EditCounts> per_speaker;
    for (std::size_t k = 0; k < speakers.size(); ++k) {
      const EditCounts counts =
          edit_distance(refs.at(speakers[k]), channels[perm[k]]);
      total_edits += counts.total();
      per_speaker[speakers[k]] = counts;
      score.channel_to_speaker[perm[k]] = speakers[k];
    }
    score.rate = total_edits / denom;
    if (first || score.rate < report.best_rate) {
      report.best_rate = score.rate;
      report.best_permutation = score.channel_to_speaker;
      report.per_speaker = per_speaker;
      first = false;
    }
    report.per_permutation.push_back(std::move(score));
  } while (std::next_permutation(perm.begin(), perm.end()));

  return report;
}

}  // namespace sasot::metrics
