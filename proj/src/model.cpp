#include "sasot/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "sasot/attention.hpp"
#include "sasot/rng.hpp"

namespace sasot::model {

namespace {

using nlohmann::json;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// log softmax of one row, max-subtracted
std::vector<double> log_softmax(std::span<const double> logits) {
  double max_logit = kNegInf;
  for (double v : logits) max_logit = std::max(max_logit, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - max_logit);
  const double log_z = std::log(z) + max_logit;
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_z;
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (feature_dim < 1 || model_dim < 1 || speaker_embed_dim < 1 ||
      speaker_id_embed_dim < 1)
    throw std::invalid_argument("invalid-config: dimensions must be >= 1");
  if (speaker_count < 1)
    throw std::invalid_argument("invalid-config: speaker_count must be >= 1");
  if (heads < 1 || model_dim % heads != 0)
    throw std::invalid_argument(
        "invalid-config: heads must divide model_dim");
  if (downsample < 1)
    throw std::invalid_argument("invalid-config: downsample must be >= 1");
  if (vocab.empty())
    throw std::invalid_argument("invalid-config: empty vocabulary");
  for (std::string_view sym :
       {labels::kChannelChangeSym, labels::kMaskSym, labels::kSosSym,
        labels::kS1Sym, labels::kS2Sym})
    if (std::find(vocab.begin(), vocab.end(), sym) == vocab.end())
      throw std::invalid_argument("invalid-config: vocabulary is missing " +
                                  std::string(sym));
}

Matrix token_average_pool(const Matrix& h_spk,
                          const std::vector<int>& boundaries) {
  const int n_tokens = static_cast<int>(boundaries.size());
  Matrix m(n_tokens, h_spk.cols());
  int prev = -1;
  for (int n = 0; n < n_tokens; ++n) {
    const int boundary = boundaries[n];
    if (boundary < prev || boundary >= h_spk.rows())
      throw std::invalid_argument(
          "invalid-boundaries: must be non-decreasing and within the frame "
          "count");
    const int first = std::min(prev + 1, boundary);  // repeated boundary
                                                     // reuses its frame
    const int count = boundary - first + 1;
    for (int t = first; t <= boundary; ++t)
      for (int j = 0; j < h_spk.cols(); ++j) m(n, j) += h_spk(t, j);
    for (int j = 0; j < h_spk.cols(); ++j) m(n, j) /= count;
    prev = boundary;
  }
  return m;
}

double ce_loss(const Matrix& logits, const std::vector<int>& targets) {
  if (static_cast<int>(targets.size()) != logits.rows())
    throw std::invalid_argument("shape-error: targets vs logits rows");
  if (logits.rows() == 0) return 0.0;
  double total = 0.0;
  for (int n = 0; n < logits.rows(); ++n) {
    const int target = targets[n];
    if (target < 0 || target >= logits.cols())
      throw std::invalid_argument("invalid-target: token id out of range");
    total -= log_softmax(logits.row(n))[target];
  }
  return total / logits.rows();
}

double ctc_forward_loss(const Matrix& frame_logits,
                        const std::vector<int>& targets) {
  const int frames = frame_logits.rows();
  const int blank = frame_logits.cols() - 1;
  if (frame_logits.cols() < 2)
    throw std::invalid_argument("shape-error: need at least one label+blank");
  for (int t : targets)
    if (t < 0 || t >= blank)
      throw std::invalid_argument("invalid-target: token id out of range");
  if (frames < 1) return std::numeric_limits<double>::infinity();

  Matrix log_probs(frames, frame_logits.cols());
  for (int t = 0; t < frames; ++t) {
    const auto row = log_softmax(frame_logits.row(t));
    for (int j = 0; j < frame_logits.cols(); ++j) log_probs(t, j) = row[j];
  }

  const int ext = 2 * static_cast<int>(targets.size()) + 1;
  auto ext_label = [&](int s) {
    return s % 2 == 0 ? blank : targets[s / 2];
  };

  std::vector<double> prev(ext, kNegInf), cur(ext, kNegInf);
  prev[0] = log_probs(0, blank);
  if (ext > 1) prev[1] = log_probs(0, ext_label(1));
  for (int t = 1; t < frames; ++t) {
    for (int s = 0; s < ext; ++s) {
      double acc = prev[s];
      if (s >= 1) acc = log_add(acc, prev[s - 1]);
      if (s >= 2 && ext_label(s) != blank && ext_label(s) != ext_label(s - 2))
        acc = log_add(acc, prev[s - 2]);
      cur[s] = acc == kNegInf ? kNegInf : acc + log_probs(t, ext_label(s));
    }
    std::swap(prev, cur);
  }

  double total = prev[ext - 1];
  if (ext > 1) total = log_add(total, prev[ext - 2]);
  if (total == kNegInf) return std::numeric_limits<double>::infinity();
  return -total;
}

double amsoftmax_loss(const Matrix& class_weights,
                      std::span<const double> embedding, int target,
                      double scale, double margin) {
  const int classes = class_weights.rows();
  if (target < 0 || target >= classes)
    throw std::invalid_argument("invalid-target: speaker id out of range");
  if (static_cast<int>(embedding.size()) != class_weights.cols())
    throw std::invalid_argument("shape-error: embedding width vs weights");

  const double e_norm = std::sqrt(dot(embedding, embedding));
  if (e_norm == 0.0)
    throw std::domain_error("normalize-degenerate: zero embedding");

  std::vector<double> logits(classes);
  for (int j = 0; j < classes; ++j) {
    const double w_norm =
        std::sqrt(dot(class_weights.row(j), class_weights.row(j)));
    if (w_norm == 0.0)
      throw std::domain_error("normalize-degenerate: zero class weight row");
    const double cosine =
        dot(class_weights.row(j), embedding) / (w_norm * e_norm);
    logits[j] = scale * (j == target ? cosine - margin : cosine);
  }
  return -log_softmax(logits)[target];
}

double joint_loss(const LossTerms& terms,
                  const std::array<double, 4>& lambdas) {
  const std::array<std::pair<const char*, double>, 5> named = {
      {{"ce", terms.ce},
       {"ctc", terms.ctc},
       {"qua", terms.qua},
       {"ams", terms.ams},
       {"sat", terms.sat}}};
  for (const auto& [name, value] : named)
    if (!std::isfinite(value))
      throw std::domain_error("joint-loss: non-finite term '" +
                              std::string(name) + "'");
  return terms.ce + lambdas[0] * terms.ctc + lambdas[1] * terms.qua +
         lambdas[2] * terms.ams + lambdas[3] * terms.sat;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (std::size_t i = 0; i < cfg_.vocab.size(); ++i)
    vocab_index_[cfg_.vocab[i]] = static_cast<int>(i);
  if (vocab_index_.size() != cfg_.vocab.size())
    throw std::invalid_argument("invalid-config: duplicate vocabulary token");

  const int d = cfg_.model_dim;
  const int f = cfg_.feature_dim;
  const int v = static_cast<int>(cfg_.vocab.size());
  const int se = cfg_.speaker_embed_dim;
  const int si = cfg_.speaker_id_embed_dim;
  const int sc = cfg_.speaker_count;

  auto init = [&](const std::string& name, int rows, int cols) {
    Matrix m(rows, cols);
    Rng rng(cfg_.seed ^ fnv1a64(name));
    const double stddev = 1.0 / std::sqrt(static_cast<double>(rows));
    for (double& x : m.data()) x = stddev * rng.normal();
    params_.emplace(name, std::move(m));
  };

  init("enc_asr_w", f, d);
  init("enc_asr_b", 1, d);
  init("enc_spk_w", f, d);
  init("enc_spk_b", 1, d);
  init("west_w", d, 1);
  init("west_b", 1, 1);
  init("tok_embed", v, d);
  init("spk_id_embed", sc + 1, si);  // last row = start-of-sequence id
  init("spkdec_w1", d + si + d, se);
  init("spkdec_b1", 1, se);
  init("spkdec_w2", se, sc);
  init("spkdec_b2", 1, sc);
  init("sef_w", d + se, d);
  init("sef_b", 1, d);
  init("dec_wq", d, d);
  init("dec_wk", d, d);
  init("dec_wv", d, d);
  init("dec_wo", d, d);
  init("out_w", d, v);
  init("out_b", 1, v);
  init("ctc_w", d, v + 1);
  init("ctc_b", 1, v + 1);
  init("ams_w", sc, se);
}

int Model::token_id(std::string_view token) const {
  const auto it = vocab_index_.find(std::string(token));
  if (it == vocab_index_.end())
    throw std::invalid_argument("unknown-token: '" + std::string(token) +
                                "' not in vocabulary");
  return it->second;
}

Matrix& Model::param(const std::string& name) { return params_.at(name); }

Matrix Model::encode(const Matrix& features, EncoderKind which) const {
  if (features.rows() < 1)
    throw std::invalid_argument("empty-input: no feature frames");
  if (features.cols() != cfg_.feature_dim)
    throw std::invalid_argument("shape-error: feature dim mismatch");
  const std::string prefix =
      which == EncoderKind::Asr ? "enc_asr" : "enc_spk";
  const Matrix& w = p(prefix + "_w");
  const Matrix& b = p(prefix + "_b");

  Matrix hidden = matmul(features, w);
  for (int t = 0; t < hidden.rows(); ++t)
    for (int j = 0; j < hidden.cols(); ++j)
      hidden(t, j) = std::tanh(hidden(t, j) + b(0, j));

  const int ds = cfg_.downsample;
  const int out_frames = std::max(1, hidden.rows() / ds);
  Matrix out(out_frames, hidden.cols());
  for (int g = 0; g < out_frames; ++g) {
    const int lo = g * ds;
    const int hi = out_frames == 1 ? hidden.rows() : lo + ds;
    for (int t = lo; t < hi; ++t)
      for (int j = 0; j < hidden.cols(); ++j) out(g, j) += hidden(t, j);
    for (int j = 0; j < hidden.cols(); ++j) out(g, j) /= (hi - lo);
  }
  return out;
}

std::vector<double> Model::estimate_weights(const Matrix& h_asr) const {
  const Matrix& w = p("west_w");
  const Matrix& b = p("west_b");
  std::vector<double> alpha(h_asr.rows());
  for (int t = 0; t < h_asr.rows(); ++t) {
    double z = b(0, 0);
    for (int j = 0; j < h_asr.cols(); ++j) z += h_asr(t, j) * w(j, 0);
    alpha[t] = 1.0 / (1.0 + std::exp(-z));
  }
  return alpha;
}

Model::SpeakerStep Model::speaker_decoder_step(std::span<const double> m_n,
                                               int prev_speaker_id,
                                               int prev_token_id) const {
  const int d = cfg_.model_dim;
  const int si = cfg_.speaker_id_embed_dim;
  if (static_cast<int>(m_n.size()) != d)
    throw std::invalid_argument("shape-error: m_n width");
  if (prev_speaker_id < 0 || prev_speaker_id > cfg_.speaker_count)
    throw std::invalid_argument("invalid-id: prev_speaker_id out of range");
  if (prev_token_id < 0 ||
      prev_token_id >= static_cast<int>(cfg_.vocab.size()))
    throw std::invalid_argument("invalid-id: prev_token_id out of range");

  std::vector<double> input;
  input.reserve(d + si + d);
  input.insert(input.end(), m_n.begin(), m_n.end());
  const auto spk_row = p("spk_id_embed").row(prev_speaker_id);
  input.insert(input.end(), spk_row.begin(), spk_row.end());
  const auto tok_row = p("tok_embed").row(prev_token_id);
  input.insert(input.end(), tok_row.begin(), tok_row.end());

  const Matrix& w1 = p("spkdec_w1");
  const Matrix& b1 = p("spkdec_b1");
  SpeakerStep step;
  step.embedding.assign(cfg_.speaker_embed_dim, 0.0);
  for (int j = 0; j < cfg_.speaker_embed_dim; ++j) {
    double z = b1(0, j);
    for (std::size_t i = 0; i < input.size(); ++i)
      z += input[i] * w1(static_cast<int>(i), j);
    step.embedding[j] = std::max(0.0, z);  // ReLU hidden layer is e_n
  }

  const Matrix& w2 = p("spkdec_w2");
  const Matrix& b2 = p("spkdec_b2");
  std::vector<double> logits(cfg_.speaker_count);
  for (int j = 0; j < cfg_.speaker_count; ++j) {
    double z = b2(0, j);
    for (int i = 0; i < cfg_.speaker_embed_dim; ++i)
      z += step.embedding[i] * w2(i, j);
    logits[j] = z;
  }
  const auto log_post = log_softmax(logits);
  step.posterior.resize(cfg_.speaker_count);
  for (int j = 0; j < cfg_.speaker_count; ++j)
    step.posterior[j] = std::exp(log_post[j]);
  return step;
}

std::vector<double> Model::sef_fuse(std::span<const double> token_embedding,
                                    std::span<const double> e_n) const {
  const int d = cfg_.model_dim;
  if (static_cast<int>(token_embedding.size()) != d ||
      static_cast<int>(e_n.size()) != cfg_.speaker_embed_dim)
    throw std::invalid_argument("shape-error: sef_fuse input widths");
  const Matrix& w = p("sef_w");
  const Matrix& b = p("sef_b");
  std::vector<double> out(d);
  for (int j = 0; j < d; ++j) {
    double z = b(0, j);
    for (int i = 0; i < d; ++i) z += token_embedding[i] * w(i, j);
    for (int i = 0; i < cfg_.speaker_embed_dim; ++i)
      z += e_n[i] * w(d + i, j);
    out[j] = z;
  }
  return out;
}

namespace {

// One causal self-attention block applied per head slice, then a projection,
// residual connection and tanh.
Matrix decoder_block(const Matrix& x, const Matrix& wq, const Matrix& wk,
                     const Matrix& wv, const Matrix& wo, int heads,
                     const std::optional<Matrix>& sim) {
  const int n = x.rows();
  const int d = x.cols();
  const int head_dim = d / heads;
  const Matrix q = matmul(x, wq);
  const Matrix k = matmul(x, wk);
  const Matrix v = matmul(x, wv);

  Matrix attended(n, d);
  for (int h = 0; h < heads; ++h) {
    attention::AttentionInputs inp;
    inp.q = Matrix(n, head_dim);
    inp.k = Matrix(n, head_dim);
    inp.v = Matrix(n, head_dim);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < head_dim; ++j) {
        inp.q(i, j) = q(i, h * head_dim + j);
        inp.k(i, j) = k(i, h * head_dim + j);
        inp.v(i, j) = v(i, h * head_dim + j);
      }
    inp.causal_mask = true;
    inp.sim = sim;
    const attention::AttentionOutput out =
        sim.has_value() ? attention::speaker_aware_attention(inp)
                        : attention::scaled_dot_attention(inp);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < head_dim; ++j)
        attended(i, h * head_dim + j) = out.o(i, j);
  }

  Matrix hidden = matmul(attended, wo);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      hidden(i, j) = std::tanh(x(i, j) + hidden(i, j));
  return hidden;
}

}  // namespace

Model::DecodeResult Model::asr_decode(const Matrix& c, const Matrix& e,
                                      DecodeMode mode, bool use_saa,
                                      std::string_view start_symbol,
                                      const std::vector<int>& teacher_ids) const {
  const int n_tokens = c.rows();
  const int d = cfg_.model_dim;
  const int v = static_cast<int>(cfg_.vocab.size());
  if (c.cols() != d)
    throw std::invalid_argument("shape-error: c width vs model_dim");
  if (e.rows() != n_tokens || e.cols() != cfg_.speaker_embed_dim)
    throw std::invalid_argument("shape-error: e must be N x speaker_embed_dim");
  if (mode == DecodeMode::TeacherForced &&
      static_cast<int>(teacher_ids.size()) != n_tokens)
    throw std::invalid_argument(
        "shape-error: teacher labels length must equal the token count");

  const int start_id = token_id(start_symbol);
  std::optional<Matrix> sim;
  if (use_saa) sim = attention::cosine_similarity_matrix(e);

  const Matrix& tok_embed = p("tok_embed");
  const Matrix& out_w = p("out_w");
  const Matrix& out_b = p("out_b");

  DecodeResult result;
  result.logits = Matrix(n_tokens, v);

  Matrix x(n_tokens, d);
  std::vector<int> emitted;
  for (int n = 0; n < n_tokens; ++n) {
    const int prev = n == 0 ? start_id
                            : (mode == DecodeMode::TeacherForced
                                   ? teacher_ids[n - 1]
                                   : emitted[n - 1]);
    const auto fused = sef_fuse(tok_embed.row(prev), e.row(n));
    for (int j = 0; j < d; ++j) x(n, j) = fused[j] + c(n, j);

    if (mode == DecodeMode::Greedy) {
      // causal pass over the prefix; only the newest row is needed
      Matrix xp(n + 1, d);
      for (int i = 0; i <= n; ++i)
        for (int j = 0; j < d; ++j) xp(i, j) = x(i, j);
      std::optional<Matrix> simp;
      if (sim) {
        simp = Matrix(n + 1, n + 1);
        for (int i = 0; i <= n; ++i)
          for (int j = 0; j <= n; ++j) (*simp)(i, j) = (*sim)(i, j);
      }
      const Matrix hidden = decoder_block(xp, p("dec_wq"), p("dec_wk"),
                                          p("dec_wv"), p("dec_wo"),
                                          cfg_.heads, simp);
      int best = 0;
      double best_score = kNegInf;
      for (int j = 0; j < v; ++j) {
        double z = out_b(0, j);
        for (int i = 0; i < d; ++i) z += hidden(n, i) * out_w(i, j);
        result.logits(n, j) = z;
        if (z > best_score) {
          best_score = z;
          best = j;
        }
      }
      emitted.push_back(best);
    }
  }

  if (mode == DecodeMode::TeacherForced) {
    const Matrix hidden = decoder_block(x, p("dec_wq"), p("dec_wk"),
                                        p("dec_wv"), p("dec_wo"), cfg_.heads,
                                        sim);
    Matrix logits = matmul(hidden, out_w);
    for (int n = 0; n < n_tokens; ++n)
      for (int j = 0; j < v; ++j) logits(n, j) += out_b(0, j);
    result.logits = std::move(logits);
    result.token_ids = teacher_ids;
  } else {
    result.token_ids = std::move(emitted);
  }
  return result;
}

std::vector<int> Model::speaker_targets_from_label(
    const labels::TsotLabel& label, const std::vector<int>& role_to_class) {
  std::vector<int> targets;
  targets.reserve(label.provenance.size());
  int prev = 0;
  for (int p : label.provenance) {
    int cls;
    if (p == labels::kChannelChange) {
      cls = prev;
    } else {
      if (p < 0 || p >= static_cast<int>(role_to_class.size()))
        throw std::invalid_argument("invalid-provenance: channel role " +
                                    std::to_string(p) + " has no class");
      cls = role_to_class[p];
    }
    targets.push_back(cls);
    prev = cls;
  }
  return targets;
}

double Model::sat_loss(const Matrix& c, const Matrix& e,
                       const labels::TsotLabel& label, bool use_saa) const {
  const std::vector<int> speakers = labels::channel_speakers(label);
  double total = 0.0;
  for (int spk : speakers) {
    const labels::MaskedLabel masked = labels::make_masked_label(label, spk);
    std::vector<int> ids;
    ids.reserve(masked.tokens.size());
    for (const std::string& tok : masked.tokens) ids.push_back(token_id(tok));
    const DecodeResult pass = asr_decode(c, e, DecodeMode::TeacherForced,
                                         use_saa, masked.start_symbol, ids);
    total += ce_loss(pass.logits, ids);
  }
  return total / static_cast<double>(speakers.size());
}

ForwardTrace Model::forward(const Matrix& features,
                            const labels::TsotLabel& label,
                            const std::vector<int>& speaker_targets,
                            bool use_saa) const {
  const int n_tokens = static_cast<int>(label.tokens.size());
  if (n_tokens < 1)
    throw std::invalid_argument("invalid-label: empty token sequence");
  if (label.provenance.size() != label.tokens.size())
    throw std::invalid_argument(
        "invalid-label: provenance length vs token length");
  if (static_cast<int>(speaker_targets.size()) != n_tokens)
    throw std::invalid_argument(
        "shape-error: speaker_targets length vs label length");

  ForwardTrace trace;
  trace.h_asr = encode(features, EncoderKind::Asr);
  trace.h_spk = encode(features, EncoderKind::Speaker);
  trace.alpha = estimate_weights(trace.h_asr);

  const std::vector<double> scaled = cif::scale_alpha(trace.alpha, n_tokens);
  const cif::FireResult fire = cif::cif_forward(trace.h_asr, scaled, cfg_.cif);
  if (fire.embeddings.rows() != n_tokens)
    throw std::runtime_error("cif fired " +
                             std::to_string(fire.embeddings.rows()) +
                             " tokens for a length-" +
                             std::to_string(n_tokens) + " label");
  trace.c = fire.embeddings;
  trace.boundaries = fire.boundaries;
  trace.m = token_average_pool(trace.h_spk, trace.boundaries);

  std::vector<int> label_ids;
  label_ids.reserve(n_tokens);
  for (const std::string& tok : label.tokens) label_ids.push_back(token_id(tok));

  // Teacher-forced speaker branch: previous speaker/token ids come from the
  // targets; position 0 uses the start ids.
  trace.e = Matrix(n_tokens, cfg_.speaker_embed_dim);
  trace.speaker_posteriors = Matrix(n_tokens, cfg_.speaker_count);
  const int sos = token_id(labels::kSosSym);
  for (int n = 0; n < n_tokens; ++n) {
    const int prev_spk = n == 0 ? cfg_.speaker_count : speaker_targets[n - 1];
    const int prev_tok = n == 0 ? sos : label_ids[n - 1];
    const SpeakerStep step =
        speaker_decoder_step(trace.m.row(n), prev_spk, prev_tok);
    for (int j = 0; j < cfg_.speaker_embed_dim; ++j)
      trace.e(n, j) = step.embedding[j];
    for (int j = 0; j < cfg_.speaker_count; ++j)
      trace.speaker_posteriors(n, j) = step.posterior[j];
  }

  const DecodeResult dec =
      asr_decode(trace.c, trace.e, DecodeMode::TeacherForced, use_saa,
                 labels::kSosSym, label_ids);
  trace.logits = dec.logits;

  LossTerms terms;
  terms.ce = ce_loss(trace.logits, label_ids);

  Matrix frame_logits = matmul(trace.h_asr, p("ctc_w"));
  for (int t = 0; t < frame_logits.rows(); ++t)
    for (int j = 0; j < frame_logits.cols(); ++j)
      frame_logits(t, j) += p("ctc_b")(0, j);
  terms.ctc = ctc_forward_loss(frame_logits, label_ids);

  terms.qua = cif::quantity_loss(trace.alpha, n_tokens);

  double ams_total = 0.0;
  int ams_count = 0;
  for (int n = 0; n < n_tokens; ++n) {
    if (label.provenance[n] == labels::kChannelChange) continue;
    ams_total += amsoftmax_loss(p("ams_w"), trace.e.row(n),
                                speaker_targets[n], cfg_.ams.scale,
                                cfg_.ams.margin);
    ++ams_count;
  }
  terms.ams = ams_count > 0 ? ams_total / ams_count : 0.0;

  terms.sat = sat_loss(trace.c, trace.e, label, use_saa);

  trace.losses.ce = terms.ce;
  trace.losses.ctc = terms.ctc;
  trace.losses.qua = terms.qua;
  trace.losses.ams = terms.ams;
  trace.losses.sat = terms.sat;
  trace.losses.joint = joint_loss(terms, cfg_.lambdas);
  return trace;
}

Model::GreedyResult Model::greedy_decode(const Matrix& features,
                                         bool use_saa) const {
  const Matrix h_asr = encode(features, EncoderKind::Asr);
  const Matrix h_spk = encode(features, EncoderKind::Speaker);
  const std::vector<double> alpha = estimate_weights(h_asr);

  // Inference path: raw weights decide the token count.
  const cif::FireResult fire = cif::cif_forward(h_asr, alpha, cfg_.cif);
  const int n_tokens = fire.embeddings.rows();
  GreedyResult result;
  result.e = Matrix(n_tokens, cfg_.speaker_embed_dim);
  result.logits = Matrix(n_tokens, static_cast<int>(cfg_.vocab.size()));
  if (n_tokens == 0) return result;

  const Matrix m = token_average_pool(h_spk, fire.boundaries);
  const Matrix& tok_embed = p("tok_embed");
  const int d = cfg_.model_dim;
  const int sos = token_id(labels::kSosSym);

  Matrix x(n_tokens, d);
  for (int n = 0; n < n_tokens; ++n) {
    const int prev_spk =
        n == 0 ? cfg_.speaker_count : result.speaker_ids[n - 1];
    const int prev_tok = n == 0 ? sos : result.token_ids[n - 1];
    const SpeakerStep step = speaker_decoder_step(m.row(n), prev_spk, prev_tok);
    for (int j = 0; j < cfg_.speaker_embed_dim; ++j)
      result.e(n, j) = step.embedding[j];
    result.speaker_ids.push_back(static_cast<int>(
        std::max_element(step.posterior.begin(), step.posterior.end()) -
        step.posterior.begin()));

    const auto fused = sef_fuse(tok_embed.row(prev_tok), result.e.row(n));
    for (int j = 0; j < d; ++j) x(n, j) = fused[j] + fire.embeddings(n, j);

    Matrix xp(n + 1, d);
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j < d; ++j) xp(i, j) = x(i, j);
    std::optional<Matrix> sim;
    if (use_saa) {
      Matrix prefix(n + 1, cfg_.speaker_embed_dim);
      for (int i = 0; i <= n; ++i)
        for (int j = 0; j < cfg_.speaker_embed_dim; ++j)
          prefix(i, j) = result.e(i, j);
      sim = attention::cosine_similarity_matrix(prefix);
    }
    const Matrix hidden = decoder_block(xp, p("dec_wq"), p("dec_wk"),
                                        p("dec_wv"), p("dec_wo"), cfg_.heads,
                                        sim);
    int best = 0;
    double best_score = kNegInf;
    for (int j = 0; j < static_cast<int>(cfg_.vocab.size()); ++j) {
      double z = p("out_b")(0, j);
      for (int i = 0; i < d; ++i) z += hidden(n, i) * p("out_w")(i, j);
      result.logits(n, j) = z;
      if (z > best_score) {
        best_score = z;
        best = j;
      }
    }
    result.token_ids.push_back(best);
  }
  return result;
}

json config_to_json(const ModelConfig& cfg) {
  return json{{"feature_dim", cfg.feature_dim},
              {"model_dim", cfg.model_dim},
              {"speaker_embed_dim", cfg.speaker_embed_dim},
              {"speaker_id_embed_dim", cfg.speaker_id_embed_dim},
              {"vocab", cfg.vocab},
              {"speaker_count", cfg.speaker_count},
              {"lambdas", cfg.lambdas},
              {"ams_scale", cfg.ams.scale},
              {"ams_margin", cfg.ams.margin},
              {"heads", cfg.heads},
              {"downsample", cfg.downsample},
              {"seed", cfg.seed},
              {"beta", cfg.cif.beta},
              {"tail_threshold", cfg.cif.tail_threshold}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.feature_dim = j.at("feature_dim").get<int>();
  cfg.model_dim = j.at("model_dim").get<int>();
  cfg.speaker_embed_dim = j.at("speaker_embed_dim").get<int>();
  cfg.speaker_id_embed_dim = j.at("speaker_id_embed_dim").get<int>();
  cfg.vocab = j.at("vocab").get<std::vector<std::string>>();
  cfg.speaker_count = j.at("speaker_count").get<int>();
  cfg.lambdas = j.at("lambdas").get<std::array<double, 4>>();
  cfg.ams.scale = j.at("ams_scale").get<double>();
  cfg.ams.margin = j.at("ams_margin").get<double>();
  cfg.heads = j.at("heads").get<int>();
  cfg.downsample = j.at("downsample").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.cif.beta = j.at("beta").get<double>();
  cfg.cif.tail_threshold = j.at("tail_threshold").get<double>();
  return cfg;
}

void Model::save(const std::string& path) const {
  json j;
  j["format"] = "sasot-params-v1";
  j["config"] = config_to_json(cfg_);
  json params = json::object();
  for (const auto& [name, matrix] : params_)
    params[name] = {{"rows", matrix.rows()},
                    {"cols", matrix.cols()},
                    {"data", matrix.data()}};
  j["params"] = params;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump() << '\n';
}

Model Model::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open parameter file " + path);
  json j;
  in >> j;
  if (j.value("format", "") != "sasot-params-v1")
    throw std::runtime_error("unrecognized parameter file format");
  Model model(config_from_json(j.at("config")));
  for (auto& [name, matrix] : model.params_) {
    const json& pj = j.at("params").at(name);
    if (pj.at("rows").get<int>() != matrix.rows() ||
        pj.at("cols").get<int>() != matrix.cols())
      throw std::runtime_error("parameter shape mismatch for " + name);
    matrix.data() = pj.at("data").get<std::vector<double>>();
  }
  return model;
}

}  // namespace sasot::model
