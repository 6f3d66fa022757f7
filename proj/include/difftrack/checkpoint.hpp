#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "difftrack/model.hpp"
#include "difftrack/trainer.hpp"

namespace difftrack {

/// Complete model and optimizer state. On disk: one line of JSON manifest
/// (format_version, config echo, tensor names, shapes and byte offsets)
/// followed by the tensors as little-endian float32, column-major.
struct Checkpoint {
  ModelConfig model;
  std::optional<TrainConfig> train;
  long step = 0;
  std::string config_hash;
  std::uint64_t seed = 0;
  ParamSet params;
  std::optional<ParamSet> adam_m;
  std::optional<ParamSet> adam_v;
  std::optional<ParamSet> ema;
};

Checkpoint make_checkpoint(const DiffusionTracker& model, const Trainer* trainer, const std::string& config_hash,
                           std::uint64_t seed);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws VersionError on an unsupported format and DataError on a
/// truncated or inconsistent file.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Model holding the checkpoint's weights (the EMA copy when asked for and present).
DiffusionTracker model_from_checkpoint(const Checkpoint& checkpoint, bool use_ema = false);

/// Loads weights and optimizer state into an existing model and trainer.
/// Throws VersionError when the model configuration or layout differs.
void resume_from_checkpoint(const Checkpoint& checkpoint, DiffusionTracker& model, Trainer& trainer);

}  // namespace difftrack
