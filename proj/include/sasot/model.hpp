#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sasot/cif.hpp"
#include "sasot/labels.hpp"
#include "sasot/matrix.hpp"

namespace sasot::model {

struct AmsConfig {
  double scale = 30.0;
  double margin = 0.2;
};

struct ModelConfig {
  int feature_dim = 8;
  int model_dim = 32;
  int speaker_embed_dim = 256;
  int speaker_id_embed_dim = 32;
  std::vector<std::string> vocab;  // must include the reserved symbols
  int speaker_count = 2;
  std::array<double, 4> lambdas{0.5, 1.0, 0.1, 1.0};  // ctc, qua, ams, sat
  AmsConfig ams;
  int heads = 4;
  int downsample = 4;  // encoder temporal downsampling
  std::uint64_t seed = 0;
  cif::CifConfig cif;

  void validate() const;
};

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

struct LossRecord {
  double ce = 0.0;
  double ctc = 0.0;
  double qua = 0.0;
  double ams = 0.0;
  double sat = 0.0;
  double joint = 0.0;
};

struct ForwardTrace {
  Matrix h_asr;               // T' x d
  std::vector<double> alpha;  // raw estimator output, length T'
  Matrix c;                   // N x d token acoustic embeddings
  std::vector<int> boundaries;
  Matrix h_spk;               // T' x d
  Matrix m;                   // N x d pooled speaker frames
  Matrix e;                   // N x speaker_embed_dim
  Matrix speaker_posteriors;  // N x speaker_count
  Matrix logits;              // N x vocab
  LossRecord losses;
};

enum class EncoderKind { Asr, Speaker };
enum class DecodeMode { TeacherForced, Greedy };

// Unweighted mean of the frames between consecutive acoustic boundaries
// (inclusive): token 0 covers frames [0 .. boundaries[0]], token n covers
// [boundaries[n-1]+1 .. boundaries[n]]. A repeated boundary (a tail fired on
// an already-used frame) reuses that single frame.
Matrix token_average_pool(const Matrix& h_spk,
                          const std::vector<int>& boundaries);

double ce_loss(const Matrix& logits, const std::vector<int>& targets);

// Standard CTC forward score; blank is the last logit column. Returns +inf
// when no valid alignment exists (target too long for the frame count).
double ctc_forward_loss(const Matrix& frame_logits,
                        const std::vector<int>& targets);

// -log( e^{s(cos_y - m)} / (e^{s(cos_y - m)} + sum_{j!=y} e^{s cos_j}) )
// with class weights and the embedding normalized internally.
double amsoftmax_loss(const Matrix& class_weights,
                      std::span<const double> embedding, int target,
                      double scale, double margin);

struct LossTerms {
  double ce = 0.0;
  double ctc = 0.0;
  double qua = 0.0;
  double ams = 0.0;
  double sat = 0.0;
};

double joint_loss(const LossTerms& terms, const std::array<double, 4>& lambdas);

// Stand-in pipeline around the real mechanisms (CIF, SAA, losses): encoders
// are seeded random projections with tanh and temporal downsampling, the
// weight estimator a linear map with sigmoid. Parameters are immutable after
// construction; forwards are pure.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  Matrix encode(const Matrix& features, EncoderKind which) const;
  std::vector<double> estimate_weights(const Matrix& h_asr) const;

  struct SpeakerStep {
    std::vector<double> posterior;  // sums to 1
    std::vector<double> embedding;  // speaker_embed_dim
  };
  // prev_speaker_id == speaker_count and the start symbols play the role of
  // "nothing emitted yet" at position 0.
  SpeakerStep speaker_decoder_step(std::span<const double> m_n,
                                   int prev_speaker_id,
                                   int prev_token_id) const;

  std::vector<double> sef_fuse(std::span<const double> token_embedding,
                               std::span<const double> e_n) const;

  struct DecodeResult {
    Matrix logits;               // N x vocab
    std::vector<int> token_ids;  // teacher ids or greedy argmax emissions
  };
  DecodeResult asr_decode(const Matrix& c, const Matrix& e, DecodeMode mode,
                          bool use_saa, std::string_view start_symbol,
                          const std::vector<int>& teacher_ids = {}) const;

  // Teacher-forced pass computing every loss term of the joint objective.
  // speaker_targets has one class id per label position; <cc> positions are
  // skipped by the AMsoftmax term.
  ForwardTrace forward(const Matrix& features, const labels::TsotLabel& label,
                       const std::vector<int>& speaker_targets,
                       bool use_saa) const;

  // Averages a teacher-forced cross-entropy pass per masked label, started
  // with <s1s>/<s2s>.
  double sat_loss(const Matrix& c, const Matrix& e,
                  const labels::TsotLabel& label, bool use_saa) const;

  struct GreedyResult {
    std::vector<int> token_ids;
    std::vector<int> speaker_ids;
    Matrix e;
    Matrix logits;
  };
  // Fully predicted path: the speaker decoder runs on its own argmax
  // emissions and the similarity matrix comes from predicted embeddings.
  GreedyResult greedy_decode(const Matrix& features, bool use_saa) const;

  int token_id(std::string_view token) const;
  const std::string& token(int id) const { return cfg_.vocab.at(id); }

  const std::map<std::string, Matrix>& params() const { return params_; }
  Matrix& param(const std::string& name);

  void save(const std::string& path) const;
  static Model load(const std::string& path);

  // Per-token speaker-class targets from label provenance: channel roles map
  // through role_to_class; <cc> positions inherit the previous token's class.
  static std::vector<int> speaker_targets_from_label(
      const labels::TsotLabel& label, const std::vector<int>& role_to_class);

 private:
  const Matrix& p(const std::string& name) const { return params_.at(name); }

  ModelConfig cfg_;
  std::map<std::string, Matrix> params_;
  std::unordered_map<std::string, int> vocab_index_;
};

}  // namespace sasot::model
