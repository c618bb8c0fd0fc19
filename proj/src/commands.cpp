#include "sasot/commands.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sasot/attention.hpp"
#include "sasot/cif.hpp"
#include "sasot/labels.hpp"
#include "sasot/metrics.hpp"
#include "sasot/mixsim.hpp"
#include "sasot/model.hpp"
#include "sasot/rng.hpp"

namespace sasot::cli {

namespace {

using nlohmann::json;

// Write to the named file, or stdout when the name is empty or "-".
class OutputTarget {
 public:
  explicit OutputTarget(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw std::runtime_error("cannot open output file " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input file " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos)
      lines.push_back(line);
  }
  return lines;
}

json parse_line(const std::string& line, std::size_t line_no) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw std::runtime_error("line " + std::to_string(line_no) +
                             ": parse error: " + e.what());
  }
}

}  // namespace

int cmd_simulate(const SimulateArgs& args) {
  return run_guarded([&] {
    const auto utterances = mixsim::load_alignments(args.alignments);
    const auto samples =
        mixsim::build_dataset(utterances, args.p, args.seed, args.n);
    mixsim::write_manifest(args.out, samples);
    return kExitOk;
  });
}

int cmd_serialize(const SerializeArgs& args) {
  return run_guarded([&] {
    OutputTarget out(args.out);
    std::size_t line_no = 0;
    for (const std::string& line : read_lines(args.input)) {
      const json j = parse_line(line, ++line_no);
      std::vector<labels::SpeakerTranscript> transcripts;
      for (const json& jt : j.at("transcripts")) {
        labels::SpeakerTranscript t;
        t.speaker = jt.at("speaker").get<int>();
        for (const json& jw : jt.at("words")) {
          labels::TimedWord w;
          w.text = jw.at("text").get<std::string>();
          w.emit_time = jw.at("start").get<double>();
          w.speaker = t.speaker;
          t.words.push_back(std::move(w));
        }
        transcripts.push_back(std::move(t));
      }
      const labels::TsotLabel label = labels::serialize_tsot(transcripts);
      out.stream() << json{{"utt_id", j.value("utt_id", "")},
                           {"label", labels::join_tokens(label.tokens)}}
                          .dump()
                   << '\n';
    }
    return kExitOk;
  });
}

int cmd_mask(const MaskArgs& args) {
  return run_guarded([&] {
    OutputTarget out(args.out);
    std::size_t line_no = 0;
    for (const std::string& line : read_lines(args.input)) {
      const json j = parse_line(line, ++line_no);
      const labels::TsotLabel label = labels::tsot_from_tokens(
          labels::split_tokens(j.at("label").get<std::string>()));
      json masked = json::array();
      for (int channel : labels::channel_speakers(label)) {
        const labels::MaskedLabel m = labels::make_masked_label(label, channel);
        masked.push_back({{"channel", channel},
                          {"start_symbol", m.start_symbol},
                          {"label", labels::join_tokens(m.tokens)}});
      }
      out.stream() << json{{"utt_id", j.value("utt_id", "")},
                           {"masked", masked}}
                          .dump()
                   << '\n';
    }
    return kExitOk;
  });
}

int cmd_score(const ScoreArgs& args) {
  return run_guarded([&] {
    json utterances = json::array();
    long long total_edits = 0;
    long long total_ref = 0;
    std::size_t line_no = 0;
    for (const std::string& line : read_lines(args.input)) {
      const json j = parse_line(line, ++line_no);
      std::map<int, std::vector<std::string>> refs;
      for (const auto& [key, value] : j.at("refs").items())
        refs[std::stoi(key)] =
            labels::split_tokens(value.get<std::string>());
      const auto channels = labels::split_channels(
          labels::split_tokens(j.at("hyp").get<std::string>()));
      const metrics::CpwerReport report =
          metrics::cpwer(refs, {channels.first, channels.second});

      int edits = 0;
      int ref_len = 0;
      json per_speaker = json::object();
      for (const auto& [spk, counts] : report.per_speaker) {
        edits += counts.total();
        ref_len += counts.ref_len;
        per_speaker[std::to_string(spk)] = {
            {"sub", counts.substitutions},
            {"del", counts.deletions},
            {"ins", counts.insertions},
            {"ref_len", counts.ref_len}};
      }
      total_edits += edits;
      total_ref += ref_len;

      json best_perm = json::object();
      for (const auto& [channel, spk] : report.best_permutation)
        best_perm[std::to_string(channel)] = spk;
      utterances.push_back({{"utt_id", j.value("utt_id", "")},
                            {"cpwer", report.best_rate},
                            {"best_permutation", best_perm},
                            {"per_speaker", per_speaker},
                            {"errors", edits},
                            {"ref_len", ref_len}});
    }

    json result;
    result["utterances"] = utterances;
    result["overall"] = {
        {"cpwer", total_ref > 0 ? static_cast<double>(total_edits) / total_ref
                                : static_cast<double>(total_edits)},
        {"errors", total_edits},
        {"ref_len", total_ref}};
    OutputTarget out(args.out);
    out.stream() << result.dump(2) << '\n';
    return kExitOk;
  });
}

int cmd_demo_forward(const DemoForwardArgs& args) {
  return run_guarded([&] {
    const auto records = mixsim::load_manifest(args.manifest);

    model::ModelConfig cfg;
    if (!args.config.empty()) {
      std::ifstream in(args.config);
      if (!in)
        throw std::runtime_error("cannot open config file " + args.config);
      json j;
      in >> j;
      cfg = model::config_from_json(j);
    } else {
      // Derive a vocabulary and speaker inventory from the manifest.
      std::set<std::string> words;
      int max_speaker = 1;
      for (const auto& rec : records) {
        for (const auto& tok : rec.label.tokens)
          if (tok != labels::kChannelChangeSym) words.insert(tok);
        for (int spk : rec.source_speakers)
          max_speaker = std::max(max_speaker, spk);
      }
      cfg.vocab.assign(words.begin(), words.end());
      for (std::string_view sym :
           {labels::kChannelChangeSym, labels::kMaskSym, labels::kSosSym,
            labels::kS1Sym, labels::kS2Sym})
        cfg.vocab.emplace_back(sym);
      std::sort(cfg.vocab.begin(), cfg.vocab.end());
      cfg.speaker_count = max_speaker + 1;
    }
    cfg.seed = args.seed;
    cfg.downsample = args.downsample;
    cfg.cif.beta = args.beta;
    cfg.cif.tail_threshold = args.tail_threshold;
    if (args.lambdas.size() != 4)
      throw std::runtime_error("expected exactly 4 lambda values");
    std::copy(args.lambdas.begin(), args.lambdas.end(), cfg.lambdas.begin());

    const model::Model mdl(cfg);
    mixsim::FeatureConfig fcfg;
    fcfg.dim = cfg.feature_dim;

    OutputTarget out(args.out);
    int failures = 0;
    int processed = 0;
    for (const auto& rec : records) {
      if (args.max_records > 0 && processed >= args.max_records) break;
      ++processed;
      json summary{{"utt_id", rec.utt_id}};
      try {
        const Matrix features =
            mixsim::synthesize_features(rec.signal, rec.sample_rate, fcfg);
        const auto speaker_targets = model::Model::speaker_targets_from_label(
            rec.label, rec.source_speakers);
        const model::ForwardTrace trace =
            mdl.forward(features, rec.label, speaker_targets, args.use_saa);
        const auto greedy = mdl.greedy_decode(features, args.use_saa);
        std::vector<std::string> greedy_tokens;
        for (int id : greedy.token_ids) greedy_tokens.push_back(mdl.token(id));

        summary["frames"] = features.rows();
        summary["encoded_frames"] = trace.h_asr.rows();
        summary["tokens"] = trace.c.rows();
        summary["use_saa"] = args.use_saa;
        summary["losses"] = {{"ce", trace.losses.ce},
                             {"ctc", trace.losses.ctc},
                             {"qua", trace.losses.qua},
                             {"ams", trace.losses.ams},
                             {"sat", trace.losses.sat},
                             {"joint", trace.losses.joint}};
        summary["greedy"] = labels::join_tokens(greedy_tokens);
      } catch (const std::exception& e) {
        summary["error"] = e.what();
        ++failures;
      }
      out.stream() << summary.dump() << '\n';
    }
    if (failures > 0) {
      std::cerr << "error: " << failures << " of " << processed
                << " records failed\n";
      return kExitData;
    }
    return kExitOk;
  });
}

namespace {

struct GradcheckOutcome {
  double max_rel_err = 0.0;
  int instances = 0;
};

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({1e-3, std::abs(analytic), std::abs(numeric)});
}

// Central differences with step h over a flat view of the inputs.
template <typename Objective>
double central_diff(Objective&& objective, double& slot, double h = 1e-6) {
  const double saved = slot;
  slot = saved + h;
  const double up = objective();
  slot = saved - h;
  const double down = objective();
  slot = saved;
  return (up - down) / (2.0 * h);
}

GradcheckOutcome gradcheck_saa(std::uint64_t seed, int trials) {
  GradcheckOutcome outcome;
  Rng rng(seed);
  for (int trial = 0; trial < trials; ++trial) {
    const int n = 4, dk = 3, dv = 3;
    attention::AttentionInputs inp;
    inp.q = Matrix(n, dk);
    inp.k = Matrix(n, dk);
    inp.v = Matrix(n, dv);
    for (double& x : inp.q.data()) x = rng.normal();
    for (double& x : inp.k.data()) x = rng.normal();
    for (double& x : inp.v.data()) x = rng.normal();
    inp.causal_mask = trial % 2 == 1;

    Matrix embeddings(n, 3);
    for (double& x : embeddings.data()) x = rng.normal();
    Matrix sim = attention::cosine_similarity_matrix(embeddings);
    for (double& x : sim.data()) x *= 0.99;  // headroom for the probe step
    inp.sim = sim;

    Matrix upstream(n, dv);
    for (double& x : upstream.data()) x = rng.normal();

    const attention::AttentionGrads grads =
        attention::saa_backward(inp, upstream);
    const auto objective = [&] {
      const attention::AttentionOutput out =
          attention::speaker_aware_attention(inp);
      double total = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < dv; ++j) total += upstream(i, j) * out.o(i, j);
      return total;
    };

    const std::array<std::pair<Matrix*, const Matrix*>, 4> pairs = {
        {{&inp.q, &grads.grad_q},
         {&inp.k, &grads.grad_k},
         {&inp.v, &grads.grad_v},
         {&*inp.sim, &grads.grad_sim}}};
    for (const auto& [input, grad] : pairs) {
      for (std::size_t idx = 0; idx < input->data().size(); ++idx) {
        const double numeric = central_diff(objective, input->data()[idx]);
        outcome.max_rel_err = std::max(
            outcome.max_rel_err, rel_err(grad->data()[idx], numeric));
      }
    }
    ++outcome.instances;
  }
  return outcome;
}

GradcheckOutcome gradcheck_cif(std::uint64_t seed, int trials,
                               const cif::CifConfig& cfg) {
  GradcheckOutcome outcome;
  Rng rng(seed);
  const double margin = 1e-3;
  int attempts = 0;
  while (outcome.instances < trials && attempts < trials * 100) {
    ++attempts;
    const int frames = 5, dim = 3;
    std::vector<double> alpha(frames);
    for (double& a : alpha) a = rng.uniform(0.2, 0.9);

    // stay away from firing ties and the tail switch
    double acc = 0.0;
    bool near_tie = false;
    for (double a : alpha) {
      acc += a;
      const double nearest = std::round(acc / cfg.beta) * cfg.beta;
      if (std::abs(acc - nearest) < margin) near_tie = true;
    }
    const double residual = acc - std::floor(acc / cfg.beta) * cfg.beta;
    if (std::abs(residual - cfg.tail_threshold * cfg.beta) < margin)
      near_tie = true;
    if (near_tie) continue;

    Matrix h(frames, dim);
    for (double& x : h.data()) x = rng.normal();
    const cif::FireResult fire = cif::cif_forward(h, alpha, cfg);
    Matrix upstream(fire.embeddings.rows(), dim);
    for (double& x : upstream.data()) x = rng.normal();

    const cif::CifGrads grads = cif::cif_backward(h, alpha, cfg, upstream);
    const auto objective = [&] {
      const cif::FireResult f = cif::cif_forward(h, alpha, cfg);
      double total = 0.0;
      for (int i = 0; i < f.embeddings.rows(); ++i)
        for (int j = 0; j < dim; ++j)
          total += upstream(i, j) * f.embeddings(i, j);
      return total;
    };

    for (std::size_t idx = 0; idx < h.data().size(); ++idx) {
      const double numeric = central_diff(objective, h.data()[idx]);
      outcome.max_rel_err = std::max(outcome.max_rel_err,
                                     rel_err(grads.grad_h.data()[idx], numeric));
    }
    for (int t = 0; t < frames; ++t) {
      const double numeric = central_diff(objective, alpha[t]);
      outcome.max_rel_err =
          std::max(outcome.max_rel_err, rel_err(grads.grad_alpha[t], numeric));
    }
    ++outcome.instances;
  }
  if (outcome.instances < trials)
    throw std::runtime_error("gradcheck could not draw enough tie-free cases");
  return outcome;
}

GradcheckOutcome gradcheck_quantity(std::uint64_t seed, int trials) {
  GradcheckOutcome outcome;
  Rng rng(seed);
  int attempts = 0;
  while (outcome.instances < trials && attempts < trials * 100) {
    ++attempts;
    const int frames = 6;
    std::vector<double> alpha(frames);
    for (double& a : alpha) a = rng.uniform(0.05, 0.95);
    const int n_target = 1 + rng.uniform_int(4);
    const double sum = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    if (std::abs(sum - n_target) < 1e-3) continue;  // kink of |.|

    const double analytic = sum > n_target ? 1.0 : -1.0;
    const auto objective = [&] { return cif::quantity_loss(alpha, n_target); };
    for (int t = 0; t < frames; ++t) {
      const double numeric = central_diff(objective, alpha[t]);
      outcome.max_rel_err =
          std::max(outcome.max_rel_err, rel_err(analytic, numeric));
    }
    ++outcome.instances;
  }
  if (outcome.instances < trials)
    throw std::runtime_error("gradcheck could not draw enough kink-free cases");
  return outcome;
}

}  // namespace

int cmd_gradcheck(const GradcheckArgs& args) {
  return run_guarded([&]() -> int {
    std::vector<std::string> targets = args.targets;
    if (targets.empty()) targets = {"saa", "cif", "quantity"};
    cif::CifConfig cif_cfg{args.beta, args.tail_threshold};

    OutputTarget out(args.out);
    bool all_pass = true;
    for (const std::string& target : targets) {
      GradcheckOutcome outcome;
      if (target == "saa") {
        outcome = gradcheck_saa(args.seed, args.trials);
      } else if (target == "cif") {
        outcome = gradcheck_cif(args.seed, args.trials, cif_cfg);
      } else if (target == "quantity") {
        outcome = gradcheck_quantity(args.seed, args.trials);
      } else {
        std::cerr << "error: unknown gradcheck target '" << target << "'\n";
        return kExitUsage;
      }
      const bool pass = outcome.max_rel_err < args.tolerance;
      all_pass = all_pass && pass;
      out.stream() << json{{"target", target},
                           {"instances", outcome.instances},
                           {"max_rel_err", outcome.max_rel_err},
                           {"tolerance", args.tolerance},
                           {"pass", pass}}
                          .dump()
                   << '\n';
    }
    return all_pass ? kExitOk : kExitCheckFailed;
  });
}

}  // namespace sasot::cli
