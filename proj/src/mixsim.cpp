#include "sasot/mixsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace sasot::mixsim {

namespace {

using nlohmann::json;

[[noreturn]] void line_error(std::size_t line_no, const std::string& what) {
  throw std::runtime_error("line " + std::to_string(line_no) + ": " + what);
}

std::vector<double> read_raw_f64(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open signal file " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() % sizeof(double) != 0)
    throw std::runtime_error("signal file " + path.string() +
                             " is not a whole number of float64 samples");
  std::vector<double> samples(bytes.size() / sizeof(double));
  std::memcpy(samples.data(), bytes.data(), bytes.size());
  return samples;
}

std::vector<double> synthesize_signal(const std::string& utt_id, double seconds,
                                      int sample_rate) {
  const auto count =
      static_cast<std::size_t>(std::llround(seconds * sample_rate));
  Rng rng(fnv1a64(utt_id));
  std::vector<double> signal(count);
  for (double& s : signal) s = rng.uniform(-0.5, 0.5);
  return signal;
}

AlignedUtterance parse_utterance(const json& j, std::size_t line_no,
                                 const std::filesystem::path& base_dir) {
  if (!j.is_object()) line_error(line_no, "expected a JSON object");
  AlignedUtterance utt;
  try {
    utt.utt_id = j.at("utt_id").get<std::string>();
    utt.speaker = j.at("speaker").get<int>();
    utt.sample_rate = j.at("sample_rate").get<int>();
  } catch (const json::exception& e) {
    line_error(line_no, std::string("schema violation: ") + e.what());
  }
  if (utt.sample_rate <= 0) line_error(line_no, "sample_rate must be positive");
  if (utt.speaker < 0) line_error(line_no, "speaker must be non-negative");

  if (j.contains("signal")) {
    if (!j["signal"].is_array())
      line_error(line_no, "field 'signal' must be an array of numbers");
    utt.signal = j["signal"].get<std::vector<double>>();
  } else if (j.contains("signal_ref")) {
    try {
      utt.signal = read_raw_f64(base_dir / j["signal_ref"].get<std::string>());
    } catch (const std::exception& e) {
      line_error(line_no, e.what());
    }
  } else if (j.contains("duration")) {
    utt.signal = synthesize_signal(utt.utt_id, j["duration"].get<double>(),
                                   utt.sample_rate);
  } else {
    line_error(line_no, "one of 'signal', 'signal_ref', 'duration' required");
  }

  if (!j.contains("words") || !j["words"].is_array())
    line_error(line_no, "field 'words' must be an array");
  const double duration = utt.duration();
  double prev_start = -1.0;
  for (const json& jw : j["words"]) {
    labels::TimedWord word;
    double end = 0.0;
    try {
      word.text = jw.at("text").get<std::string>();
      word.emit_time = jw.at("start").get<double>();
      end = jw.at("end").get<double>();
    } catch (const json::exception& e) {
      line_error(line_no, std::string("bad word entry: ") + e.what());
    }
    word.speaker = utt.speaker;
    if (word.text.empty() || labels::is_reserved_symbol(word.text))
      line_error(line_no, "word text '" + word.text + "' is empty or reserved");
    if (word.emit_time < 0.0 || end < word.emit_time)
      line_error(line_no, "word '" + word.text + "' has invalid times");
    if (end > duration + 1e-9)
      line_error(line_no, "word '" + word.text + "' ends at " +
                              std::to_string(end) + "s, beyond the " +
                              std::to_string(duration) + "s signal");
    if (word.emit_time <= prev_start && !utt.words.empty())
      line_error(line_no, "words not sorted strictly by start time");
    prev_start = word.emit_time;
    utt.words.push_back(std::move(word));
    utt.word_ends.push_back(end);
  }
  return utt;
}

}  // namespace

std::vector<AlignedUtterance> load_alignments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open alignment file " + path);
  const std::filesystem::path base_dir =
      std::filesystem::path(path).parent_path();

  std::vector<AlignedUtterance> utterances;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      line_error(line_no, std::string("parse error: ") + e.what());
    }
    utterances.push_back(parse_utterance(j, line_no, base_dir));
  }
  return utterances;
}

MixtureSample simulate_mixture(const AlignedUtterance& a,
                               const AlignedUtterance& b, double shift) {
  if (a.sample_rate != b.sample_rate)
    throw std::invalid_argument(
        "incompatible-sources: sample rates " + std::to_string(a.sample_rate) +
        " vs " + std::to_string(b.sample_rate));
  if (shift < 0.0)
    throw std::invalid_argument("invalid-shift: shift must be non-negative");

  MixtureSample sample;
  sample.sample_rate = a.sample_rate;
  sample.shift = shift;
  sample.is_overlapped = true;
  sample.sources = {a, b};

  const auto offset =
      static_cast<std::size_t>(std::llround(shift * a.sample_rate));
  sample.signal.assign(std::max(a.signal.size(), offset + b.signal.size()),
                       0.0);
  for (std::size_t i = 0; i < a.signal.size(); ++i)
    sample.signal[i] += a.signal[i];
  for (std::size_t i = 0; i < b.signal.size(); ++i)
    sample.signal[offset + i] += b.signal[i];

  // Serialize over virtual channel roles: 0 for a, 1 for the shifted b.
  labels::SpeakerTranscript ta{0, a.words};
  for (auto& w : ta.words) w.speaker = 0;
  labels::SpeakerTranscript tb{1, b.words};
  for (auto& w : tb.words) {
    w.speaker = 1;
    w.emit_time += shift;
  }
  sample.label = labels::serialize_tsot({ta, tb});
  return sample;
}

MixtureSample unmixed_sample(const AlignedUtterance& a) {
  MixtureSample sample;
  sample.sample_rate = a.sample_rate;
  sample.signal = a.signal;
  sample.sources = {a};
  labels::SpeakerTranscript t{0, a.words};
  for (auto& w : t.words) w.speaker = 0;
  sample.label = labels::serialize_tsot({t});
  return sample;
}

MixtureStream::MixtureStream(std::vector<AlignedUtterance> utterances,
                             double p, std::uint64_t seed)
    : utterances_(std::move(utterances)), p_(p), rng_(seed) {
  if (p_ < 0.0 || p_ > 1.0)
    throw std::invalid_argument("invalid-probability: p outside [0, 1]");
  if (utterances_.empty())
    throw std::invalid_argument("insufficient-corpus: no utterances");
  if (p_ > 0.0 && utterances_.size() < 2)
    throw std::invalid_argument(
        "insufficient-corpus: overlap requires at least 2 utterances");
}

MixtureSample MixtureStream::next() {
  const std::size_t base_idx = cursor_ % utterances_.size();
  ++cursor_;
  const AlignedUtterance& base = utterances_[base_idx];
  if (!rng_.bernoulli(p_)) return unmixed_sample(base);

  int partner = rng_.uniform_int(static_cast<int>(utterances_.size()) - 1);
  if (partner >= static_cast<int>(base_idx)) ++partner;
  const double shift = rng_.uniform(0.0, base.duration());
  return simulate_mixture(base, utterances_[partner], shift);
}

std::vector<MixtureSample> build_dataset(
    const std::vector<AlignedUtterance>& utterances, double p,
    std::uint64_t seed, int n) {
  if (n < 1) throw std::invalid_argument("invalid-count: n must be >= 1");
  MixtureStream stream(utterances, p, seed);
  std::vector<MixtureSample> samples;
  samples.reserve(n);
  for (int i = 0; i < n; ++i) samples.push_back(stream.next());
  return samples;
}

Matrix synthesize_features(const std::vector<double>& signal, int sample_rate,
                           const FeatureConfig& cfg) {
  if (signal.empty())
    throw std::invalid_argument("empty-input: signal has no samples");
  if (sample_rate <= 0)
    throw std::invalid_argument("invalid-rate: sample_rate must be positive");
  if (cfg.hop_ms <= 0.0)
    throw std::invalid_argument("invalid-hop: hop_ms must be positive");
  if (cfg.dim < 1)
    throw std::invalid_argument("invalid-dim: feature dim must be >= 1");
  if (cfg.downsample != 2 && cfg.downsample != 4 && cfg.downsample != 8)
    throw std::invalid_argument("invalid-downsample: expected one of {2,4,8}");

  const auto window = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(cfg.frame_ms / 1000.0 * sample_rate)));
  const auto hop = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(cfg.hop_ms / 1000.0 * sample_rate)));
  const std::size_t raw_frames = (signal.size() + hop - 1) / hop;

  Matrix raw(static_cast<int>(raw_frames), cfg.dim);
  for (std::size_t r = 0; r < raw_frames; ++r) {
    const std::size_t start = r * hop;
    for (int b = 0; b < cfg.dim; ++b) {
      const std::size_t lo = start + b * window / cfg.dim;
      const std::size_t hi = start + (b + 1) * window / cfg.dim;
      double energy = 0.0;
      std::size_t count = 0;
      for (std::size_t s = lo; s < hi; ++s) {
        const double x = s < signal.size() ? signal[s] : 0.0;
        energy += x * x;
        ++count;
      }
      raw(static_cast<int>(r), b) =
          count > 0 ? std::log1p(energy / count) : 0.0;
    }
  }

  const int out_frames = static_cast<int>(raw_frames) / cfg.downsample;
  Matrix out(out_frames, cfg.dim);
  for (int g = 0; g < out_frames; ++g)
    for (int b = 0; b < cfg.dim; ++b) {
      double sum = 0.0;
      for (int k = 0; k < cfg.downsample; ++k)
        sum += raw(g * cfg.downsample + k, b);
      out(g, b) = sum / cfg.downsample;
    }
  return out;
}

Matrix synthesize_features(const MixtureSample& sample,
                           const FeatureConfig& cfg) {
  return synthesize_features(sample.signal, sample.sample_rate, cfg);
}

std::string manifest_line(const MixtureSample& sample,
                          const std::string& utt_id) {
  json j;
  j["utt_id"] = utt_id;
  j["sample_rate"] = sample.sample_rate;
  j["signal"] = sample.signal;
  j["shift"] = sample.shift;
  j["is_overlapped"] = sample.is_overlapped;
  j["label"] = labels::join_tokens(sample.label.tokens);

  json sources = json::array();
  json speakers = json::array();
  for (const AlignedUtterance& src : sample.sources) {
    sources.push_back(src.utt_id);
    speakers.push_back(src.speaker);
  }
  j["sources"] = sources;
  j["speakers"] = speakers;

  json words = json::array();
  for (std::size_t role = 0; role < sample.sources.size(); ++role) {
    const AlignedUtterance& src = sample.sources[role];
    const double offset = role == 0 ? 0.0 : sample.shift;
    for (std::size_t i = 0; i < src.words.size(); ++i) {
      words.push_back({{"text", src.words[i].text},
                       {"start", src.words[i].emit_time + offset},
                       {"end", src.word_ends[i] + offset},
                       {"speaker", static_cast<int>(role)}});
    }
  }
  std::sort(words.begin(), words.end(), [](const json& a, const json& b) {
    if (a["start"] != b["start"])
      return a["start"].get<double>() < b["start"].get<double>();
    return a["speaker"].get<int>() < b["speaker"].get<int>();
  });
  j["words"] = words;
  return j.dump();
}

void write_manifest(const std::string& path,
                    const std::vector<MixtureSample>& samples,
                    const std::string& id_prefix) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file " + path);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::ostringstream id;
    id << id_prefix << "-" << i;
    out << manifest_line(samples[i], id.str()) << '\n';
  }
}

std::vector<ManifestRecord> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  std::vector<ManifestRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ManifestRecord rec;
      rec.utt_id = j.at("utt_id").get<std::string>();
      rec.sample_rate = j.at("sample_rate").get<int>();
      rec.signal = j.at("signal").get<std::vector<double>>();
      rec.label = labels::tsot_from_tokens(
          labels::split_tokens(j.at("label").get<std::string>()));
      rec.shift = j.at("shift").get<double>();
      rec.is_overlapped = j.at("is_overlapped").get<bool>();
      rec.source_ids = j.at("sources").get<std::vector<std::string>>();
      rec.source_speakers = j.at("speakers").get<std::vector<int>>();
      if (j.contains("words")) {
        for (const json& jw : j["words"]) {
          labels::TimedWord w;
          w.text = jw.at("text").get<std::string>();
          w.emit_time = jw.at("start").get<double>();
          w.speaker = jw.at("speaker").get<int>();
          rec.words.push_back(std::move(w));
        }
      }
      records.push_back(std::move(rec));
    } catch (const json::exception& e) {
      line_error(line_no, std::string("bad manifest record: ") + e.what());
    }
  }
  return records;
}

}  // namespace sasot::mixsim
