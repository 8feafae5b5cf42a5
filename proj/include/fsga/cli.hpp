#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fsga::cli {

// Exit codes shared by all commands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;    // usage / config / missing-file errors
inline constexpr int kExitNumeric = 2;  // runtime numeric failure
inline constexpr int kExitGate = 3;     // testbed directional gate failed

struct EvalOptions {
  std::string checkpoint;
  std::string target_dir;
  std::string full_dir;  // optional: reference set for density/coverage + Frechet
  std::string out_path;  // report JSON; defaults next to the checkpoint
  std::string extractor = "fixed_random_conv";
  int m = 1000;          // generated sample count
  int target_limit = 1000;
  uint64_t seed = 0;
};

// Tunables of the packaged testbed experiment. The defaults are the
// presets the acceptance gate runs with.
struct TestbedPreset {
  int image_size = 32;
  int samples_per_mode = 500;
  double noise_level = 0.05;
  uint64_t pretrain_seed = 7;
  int pretrain_steps = 2500;
  int pretrain_batch = 8;
  double pretrain_lr = 1e-3;
  std::vector<int> target_modes = {0, 3, 5};
  int target_k = 10;
  double target_hue_degrees = 120.0;
  double lambda_full = 1e3;
  int adapt_iterations = 600;
  double adapt_lr = 5e-4;
  int eval_m = 1000;
  int correspondence_n = 256;
};

struct AblateReport {
  uint64_t seed = 0;
  double diversity_full = 0.0;
  double diversity_ablated = 0.0;
  double correspondence_full = 0.0;
  double correspondence_ablated = 0.0;
  double source_mode_coverage = 0.0;
  bool diversity_gate = false;       // full > ablated
  bool correspondence_gate = false;  // full > ablated
};

// Runs (or reuses) the shared pretrained source under out_dir/source, then
// adapts with and without the distance-consistency term and evaluates both.
AblateReport run_ablate_dist(const std::string& out_dir, uint64_t seed,
                             const TestbedPreset& preset = {});

int cmd_pretrain(const std::string& config_path, const std::vector<std::string>& overrides);
int cmd_adapt(const std::string& config_path, const std::vector<std::string>& overrides);
int cmd_sample(const std::string& checkpoint, int n, uint64_t seed, const std::string& out_path);
int cmd_correspond(const std::string& source_ckpt, const std::string& adapted_ckpt, int n,
                   uint64_t seed, const std::string& out_path);
int cmd_eval(const EvalOptions& opts);
int cmd_testbed(const std::string& scenario, uint64_t seed, const std::string& out_dir);

// Full argv dispatcher used by the fsga binary.
int dispatch(int argc, char** argv);

}  // namespace fsga::cli
