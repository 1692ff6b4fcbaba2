#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "udtsep/model.hpp"

namespace udtsep {

inline constexpr char kCheckpointMagic[4] = {'U', 'D', 'T', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  nlohmann::json hyper;
  // insertion-ordered records; shared blocks appear once
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>& find(const std::string& name) const;
};

// magic "UDTW", u32 version, hyperparameter JSON block, then per-tensor
// records (name, shape, little-endian float32 data), all atomically written
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& hyper,
                     const std::vector<std::pair<std::string, Tensor<float>>>& tensors);

CheckpointData load_checkpoint(const std::filesystem::path& path);

nlohmann::json model_hyper(const ModelConfig& cfg, const StftConfig& stft_cfg,
                           const std::string& mode, std::size_t step);

ModelConfig model_config_from_hyper(const nlohmann::json& hyper);
StftConfig stft_config_from_hyper(const nlohmann::json& hyper);

void save_model(const std::filesystem::path& path, const UdtModel<float>& model,
                const StftConfig& stft_cfg, std::size_t step);
void save_model(const std::filesystem::path& path, const SupervisedModel<float>& model,
                const StftConfig& stft_cfg, std::size_t step);

// Rebuilds a model that references shared blocks exactly once, then copies
// every stored record into place.
UdtModel<float> udt_from_checkpoint(const CheckpointData& ckpt);
SupervisedModel<float> supervised_from_checkpoint(const CheckpointData& ckpt);

}  // namespace udtsep
