#pragma once

// Shared fixtures and independent oracles for the unit and acceptance suites.
// The oracles here deliberately do not reuse the library's algorithms: the
// edit distance is a plain recursion, the cpWER search a naive permutation
// loop, and the CTC reference enumerates every alignment path.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "sasot/labels.hpp"
#include "sasot/matrix.hpp"
#include "sasot/rng.hpp"

namespace testutil {

inline const std::vector<std::string>& small_vocab() {
  static const std::vector<std::string> words = {"a", "b", "c", "d",
                                                 "e", "f", "g", "h"};
  return words;
}

inline sasot::labels::SpeakerTranscript random_transcript(sasot::Rng& rng,
                                                          int speaker,
                                                          int max_words = 6) {
  sasot::labels::SpeakerTranscript t;
  t.speaker = speaker;
  const int n = 1 + rng.uniform_int(max_words);
  double time = rng.uniform(0.0, 0.3);
  for (int i = 0; i < n; ++i) {
    sasot::labels::TimedWord w;
    w.text = small_vocab()[rng.uniform_int(
        static_cast<int>(small_vocab().size()))];
    w.emit_time = time;
    w.speaker = speaker;
    t.words.push_back(std::move(w));
    time += 0.05 + rng.uniform(0.0, 0.5);
  }
  return t;
}

inline std::vector<sasot::labels::SpeakerTranscript> random_transcript_pair(
    sasot::Rng& rng) {
  return {random_transcript(rng, 0), random_transcript(rng, 1)};
}

// The transcripts behind the serialized label
// "hello how <cc> I <cc> are <cc> am <cc> you <cc> fine".
inline std::vector<sasot::labels::SpeakerTranscript> fig1_transcripts() {
  sasot::labels::SpeakerTranscript s0{
      0,
      {{"hello", 0.1, 0}, {"how", 0.5, 0}, {"are", 0.9, 0}, {"you", 1.3, 0}}};
  sasot::labels::SpeakerTranscript s1{
      1, {{"I", 0.7, 1}, {"am", 1.1, 1}, {"fine", 1.5, 1}}};
  return {s0, s1};
}

inline const char* fig1_label_text() {
  return "hello how <cc> I <cc> are <cc> am <cc> you <cc> fine";
}

// --- independent oracles ----------------------------------------------------

// Plain recursion, exponential on purpose (inputs stay <= ~8 tokens).
inline int naive_edit_total(const std::vector<std::string>& ref,
                            const std::vector<std::string>& hyp,
                            std::size_t i = 0, std::size_t j = 0) {
  if (i == ref.size()) return static_cast<int>(hyp.size() - j);
  if (j == hyp.size()) return static_cast<int>(ref.size() - i);
  int best = naive_edit_total(ref, hyp, i + 1, j + 1) +
             (ref[i] == hyp[j] ? 0 : 1);
  best = std::min(best, naive_edit_total(ref, hyp, i + 1, j) + 1);
  best = std::min(best, naive_edit_total(ref, hyp, i, j + 1) + 1);
  return best;
}

// Naive permutation loop over channel-to-speaker assignments.
inline double naive_cpwer(
    const std::map<int, std::vector<std::string>>& refs,
    std::vector<std::vector<std::string>> channels) {
  std::vector<int> speakers;
  int total_ref = 0;
  for (const auto& [spk, words] : refs) {
    speakers.push_back(spk);
    total_ref += static_cast<int>(words.size());
  }
  channels.resize(speakers.size());
  std::vector<int> idx(speakers.size());
  std::iota(idx.begin(), idx.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    int edits = 0;
    for (std::size_t k = 0; k < speakers.size(); ++k)
      edits += naive_edit_total(refs.at(speakers[k]), channels[idx[k]]);
    best = std::min(best, edits / static_cast<double>(std::max(total_ref, 1)));
  } while (std::next_permutation(idx.begin(), idx.end()));
  return best;
}

// Sum of every alignment path's probability, -log'd. Blank is the last
// column of frame_logits.
inline double ctc_bruteforce(const sasot::Matrix& frame_logits,
                             const std::vector<int>& targets) {
  const int frames = frame_logits.rows();
  const int alphabet = frame_logits.cols();
  const int blank = alphabet - 1;

  sasot::Matrix probs(frames, alphabet);
  for (int t = 0; t < frames; ++t) {
    double max_logit = frame_logits(t, 0);
    for (int j = 1; j < alphabet; ++j)
      max_logit = std::max(max_logit, frame_logits(t, j));
    double z = 0.0;
    for (int j = 0; j < alphabet; ++j)
      z += std::exp(frame_logits(t, j) - max_logit);
    for (int j = 0; j < alphabet; ++j)
      probs(t, j) = std::exp(frame_logits(t, j) - max_logit) / z;
  }

  double total = 0.0;
  std::vector<int> path(frames, 0);
  while (true) {
    std::vector<int> collapsed;
    for (int t = 0; t < frames; ++t) {
      if (t > 0 && path[t] == path[t - 1]) continue;
      if (path[t] != blank) collapsed.push_back(path[t]);
    }
    if (collapsed == targets) {
      double prob = 1.0;
      for (int t = 0; t < frames; ++t) prob *= probs(t, path[t]);
      total += prob;
    }
    int pos = frames - 1;
    while (pos >= 0 && path[pos] == alphabet - 1) path[pos--] = 0;
    if (pos < 0) break;
    ++path[pos];
  }
  return total > 0.0 ? -std::log(total)
                     : std::numeric_limits<double>::infinity();
}

// --- misc helpers -----------------------------------------------------------

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("sasot-" + tag + "-" + std::to_string(counter()++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path path_;
};

inline double max_abs_diff(const sasot::Matrix& a, const sasot::Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

inline double grad_rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({1e-3, std::abs(analytic), std::abs(numeric)});
}

template <typename Objective>
inline double central_diff(Objective&& objective, double& slot,
                           double h = 1e-6) {
  const double saved = slot;
  slot = saved + h;
  const double up = objective();
  slot = saved - h;
  const double down = objective();
  slot = saved;
  return (up - down) / (2.0 * h);
}

}  // namespace testutil
