// Command-line surface for scripted experiments: mixture simulation, label
// serialization and masking, cpWER scoring, a demo forward pass and gradient
// checks. Exit codes: 0 success, 1 usage error, 2 data error, 3 check failure.

#include <CLI11.hpp>

#include "sasot/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"speaker-aware serialized output training toolkit"};
  app.require_subcommand(1);

  sasot::cli::SimulateArgs sim;
  CLI::App* simulate =
      app.add_subcommand("simulate", "simulate overlapped mixtures from an "
                                     "alignment JSONL and write a manifest");
  simulate->add_option("--alignments", sim.alignments,
                       "alignment JSONL (one utterance per line)")
      ->required();
  simulate->add_option("--out", sim.out, "output manifest path")->required();
  simulate->add_option("--p", sim.p, "overlap probability")
      ->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--seed", sim.seed, "random seed");
  simulate->add_option("--n", sim.n, "number of samples")
      ->check(CLI::PositiveNumber);

  sasot::cli::SerializeArgs ser;
  CLI::App* serialize = app.add_subcommand(
      "serialize", "merge per-speaker timed transcripts into t-SOT labels");
  serialize->add_option("--input", ser.input, "transcript JSONL")->required();
  serialize->add_option("--out", ser.out, "output path (default stdout)");

  sasot::cli::MaskArgs mask;
  CLI::App* mask_cmd = app.add_subcommand(
      "mask", "produce masked labels for each channel of a t-SOT label");
  mask_cmd->add_option("--input", mask.input, "label JSONL")->required();
  mask_cmd->add_option("--out", mask.out, "output path (default stdout)");

  sasot::cli::ScoreArgs score;
  CLI::App* score_cmd =
      app.add_subcommand("score", "cpWER of t-SOT hypotheses against "
                                  "per-speaker references");
  score_cmd->add_option("--input", score.input, "scoring JSONL")->required();
  score_cmd->add_option("--out", score.out, "report path (default stdout)");

  sasot::cli::DemoForwardArgs demo;
  CLI::App* demo_cmd = app.add_subcommand(
      "demo-forward", "teacher-forced forward pass with all losses plus a "
                      "greedy decode over a mixture manifest");
  demo_cmd->add_option("--manifest", demo.manifest, "mixture manifest JSONL")
      ->required();
  demo_cmd->add_option("--out", demo.out, "summary path (default stdout)");
  demo_cmd->add_option("--config", demo.config, "model config JSON");
  demo_cmd->add_option("--seed", demo.seed, "parameter seed");
  demo_cmd->add_flag("--use-saa,!--no-saa", demo.use_saa,
                     "speaker-aware attention in the decoder (default on)");
  demo_cmd->add_option("--max-records", demo.max_records,
                       "process at most this many records (0 = all)");
  demo_cmd->add_option("--beta", demo.beta, "CIF firing threshold");
  demo_cmd->add_option("--tail-threshold", demo.tail_threshold,
                       "CIF tail firing fraction");
  demo_cmd->add_option("--downsample", demo.downsample,
                       "encoder temporal downsampling");
  demo_cmd->add_option("--lambdas", demo.lambdas,
                       "loss weights: ctc qua ams sat")
      ->expected(4);

  sasot::cli::GradcheckArgs grad;
  CLI::App* grad_cmd = app.add_subcommand(
      "gradcheck", "analytic gradients vs central finite differences");
  grad_cmd->add_option("--targets", grad.targets,
                       "subset of {saa, cif, quantity}; default all");
  grad_cmd->add_option("--seed", grad.seed, "random seed");
  grad_cmd->add_option("--trials", grad.trials, "instances per target")
      ->check(CLI::PositiveNumber);
  grad_cmd->add_option("--tolerance", grad.tolerance,
                       "max relative error allowed");
  grad_cmd->add_option("--out", grad.out, "report path (default stdout)");
  grad_cmd->add_option("--beta", grad.beta, "CIF firing threshold");
  grad_cmd->add_option("--tail-threshold", grad.tail_threshold,
                       "CIF tail firing fraction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? sasot::cli::kExitOk : sasot::cli::kExitUsage;
  }

  if (simulate->parsed()) return sasot::cli::cmd_simulate(sim);
  if (serialize->parsed()) return sasot::cli::cmd_serialize(ser);
  if (mask_cmd->parsed()) return sasot::cli::cmd_mask(mask);
  if (score_cmd->parsed()) return sasot::cli::cmd_score(score);
  if (demo_cmd->parsed()) return sasot::cli::cmd_demo_forward(demo);
  if (grad_cmd->parsed()) return sasot::cli::cmd_gradcheck(grad);
  return sasot::cli::kExitUsage;
}
