#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/model.hpp"
#include "forge/schedule.hpp"

namespace forge {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'I', 'F', 'O', 'R', 'G', 'E', 'C', 'K'};

/// Self-describing metadata stored ahead of the tensors.
struct CheckpointInfo {
  std::uint32_t version = kCheckpointVersion;
  int diffusion_steps = kDefaultDiffusionSteps;
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;
  DenoiserConfig model;
  std::size_t parameter_count = 0;
  std::size_t tensor_count = 0;
  /// Training hyperparameters (no file paths); empty object when unknown.
  nlohmann::json training = nlohmann::json::object();

  NoiseSchedule schedule() const { return NoiseSchedule(diffusion_steps, beta_start, beta_end); }
  nlohmann::json to_json() const;
};

struct Checkpoint {
  CheckpointInfo info;
  Denoiser<float> model;
  NoiseSchedule schedule;
};

std::vector<std::uint8_t> serialize_checkpoint(const Denoiser<float>& model, const NoiseSchedule& schedule,
                                               const nlohmann::json& training = nlohmann::json::object());
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes atomically: the file appears under `path` only once complete.
void save_checkpoint(const std::filesystem::path& path, const Denoiser<float>& model, const NoiseSchedule& schedule,
                     const nlohmann::json& training = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Validates the whole file but returns only the metadata.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Throws ChannelMismatchError when the checkpoint was trained on a different channel count.
void require_channels(const CheckpointInfo& info, int channels);

}  // namespace forge
