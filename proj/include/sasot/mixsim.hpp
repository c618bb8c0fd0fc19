#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sasot/labels.hpp"
#include "sasot/matrix.hpp"
#include "sasot/rng.hpp"

namespace sasot::mixsim {

// A single-speaker utterance with word-level alignment; word times are
// relative to the signal start.
struct AlignedUtterance {
  std::string utt_id;
  int speaker = 0;  // global speaker id
  std::vector<double> signal;
  int sample_rate = 0;
  std::vector<labels::TimedWord> words;  // speaker field mirrors the utterance
  std::vector<double> word_ends;         // aligned with words

  double duration() const {
    return sample_rate > 0
               ? static_cast<double>(signal.size()) / sample_rate
               : 0.0;
  }
};

// Two shifted signals summed (or one passed through), with the serialized
// label. Label provenance uses the source role (0 = first utterance,
// 1 = shifted utterance), which is what the virtual output channels are.
struct MixtureSample {
  std::vector<double> signal;
  std::vector<AlignedUtterance> sources;  // 1 if unmixed, else 2
  int sample_rate = 0;
  double shift = 0.0;  // seconds applied to the second source
  labels::TsotLabel label;
  bool is_overlapped = false;
};

// JSONL, one utterance per line:
//   {"utt_id": str, "speaker": int, "sample_rate": int,
//    "signal": [float] | "signal_ref": path | "duration": seconds,
//    "words": [{"text": str, "start": float, "end": float}]}
// signal_ref points at raw little-endian float64 samples relative to the
// manifest's directory; "duration" synthesizes a deterministic noise signal
// seeded from the utt_id. Errors carry the 1-based line number.
std::vector<AlignedUtterance> load_alignments(const std::string& path);

// Add b into a's timeline starting at round(shift * rate); the label is the
// serialization of both transcripts with b's times offset by the shift.
MixtureSample simulate_mixture(const AlignedUtterance& a,
                               const AlignedUtterance& b, double shift);

MixtureSample unmixed_sample(const AlignedUtterance& a);

// Seeded sample stream: the base utterance cycles through the corpus; with
// probability p it is paired with a uniformly chosen other utterance at a
// shift uniform in [0, duration of the base). Single generator, consume from
// one logical consumer at a time.
class MixtureStream {
 public:
  MixtureStream(std::vector<AlignedUtterance> utterances, double p,
                std::uint64_t seed);

  MixtureSample next();

 private:
  std::vector<AlignedUtterance> utterances_;
  double p_;
  Rng rng_;
  std::size_t cursor_ = 0;
};

std::vector<MixtureSample> build_dataset(
    const std::vector<AlignedUtterance>& utterances, double p,
    std::uint64_t seed, int n);

struct FeatureConfig {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  int downsample = 4;  // one of {2, 4, 8}
  int dim = 8;         // energy bands per frame
};

// Framed band-energy features: log1p of the mean squared sample over dim
// contiguous chunks of each window, then groups of `downsample` consecutive
// frames averaged (trailing partial group dropped).
Matrix synthesize_features(const std::vector<double>& signal, int sample_rate,
                           const FeatureConfig& cfg);
Matrix synthesize_features(const MixtureSample& sample,
                           const FeatureConfig& cfg);

// Mixture manifest record as written by write_manifest / the simulate
// command, reloadable for scoring and the demo forward pass.
struct ManifestRecord {
  std::string utt_id;
  int sample_rate = 0;
  std::vector<double> signal;
  labels::TsotLabel label;
  double shift = 0.0;
  bool is_overlapped = false;
  std::vector<std::string> source_ids;
  std::vector<int> source_speakers;  // global ids, indexed by channel role
  std::vector<labels::TimedWord> words;  // merged, speaker = channel role
};

std::string manifest_line(const MixtureSample& sample,
                          const std::string& utt_id);
void write_manifest(const std::string& path,
                    const std::vector<MixtureSample>& samples,
                    const std::string& id_prefix = "mix");
std::vector<ManifestRecord> load_manifest(const std::string& path);

}  // namespace sasot::mixsim
