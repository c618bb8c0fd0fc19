#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sasot::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitCheckFailed = 3;

struct SimulateArgs {
  std::string alignments;
  std::string out;
  double p = 0.5;
  std::uint64_t seed = 0;
  int n = 10;
};
int cmd_simulate(const SimulateArgs& args);

struct SerializeArgs {
  std::string input;
  std::string out;  // empty = stdout
};
int cmd_serialize(const SerializeArgs& args);

struct MaskArgs {
  std::string input;
  std::string out;
};
int cmd_mask(const MaskArgs& args);

struct ScoreArgs {
  std::string input;
  std::string out;
};
int cmd_score(const ScoreArgs& args);

struct DemoForwardArgs {
  std::string manifest;
  std::string out;
  std::string config;  // optional model config JSON
  std::uint64_t seed = 0;
  bool use_saa = true;
  int max_records = 0;  // 0 = all
  double beta = 1.0;
  double tail_threshold = 0.5;
  int downsample = 4;
  std::vector<double> lambdas{0.5, 1.0, 0.1, 1.0};
};
int cmd_demo_forward(const DemoForwardArgs& args);

struct GradcheckArgs {
  std::vector<std::string> targets;  // subset of {saa, cif, quantity}
  std::uint64_t seed = 0;
  int trials = 50;
  double tolerance = 1e-5;
  std::string out;
  double beta = 1.0;
  double tail_threshold = 0.5;
};
int cmd_gradcheck(const GradcheckArgs& args);

}  // namespace sasot::cli
