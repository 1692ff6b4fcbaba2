#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "udtsep/dsp.hpp"
#include "udtsep/model.hpp"
#include "udtsep/optim.hpp"

namespace udtsep {

// exit codes shared by every subcommand
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;    // bad config, paths, or inputs
inline constexpr int kExitNonFinite = 2; // training aborted on a non-finite loss
inline constexpr int kExitGradCheck = 3; // gradient verification failed

struct RunConfig {
  std::string mix_dir;
  std::string clean_dir;
  StftConfig stft;
  std::size_t width = 1024;
  double dropout_p = 0.3;
  bool batchnorm = true;
  bool add_noise = true;
  LossWeights weights;
  AdamConfig adam;
  std::size_t batch_size = 8;
  std::size_t crop_frames = 256;
  double clip_seconds = 2.0;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string checkpoint_out = "model.udtw";
  std::string loss_log = "loss.csv";
  std::string recipe_log;  // optional JSONL of mixture recipes
  std::string resume;      // optional checkpoint to continue from

  void apply_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  ModelConfig model_config() const;
};

// argv-style entry point used by main() and by tests
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

}  // namespace udtsep
