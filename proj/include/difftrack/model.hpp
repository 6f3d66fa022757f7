#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "difftrack/denoiser.hpp"
#include "difftrack/diffusion.hpp"
#include "difftrack/encoder.hpp"
#include "difftrack/slate.hpp"

namespace difftrack {

enum class TrackingMode { kSingleTarget, kKnownOrigin, kUnknownOrigin };

TrackingMode parse_tracking_mode(const std::string& name);
std::string to_string(TrackingMode mode);

struct ModelConfig {
  DenoiserConfig denoiser;
  ScheduleConfig schedule = ScheduleConfig::scaled_default(100);
  TrackingMode mode = TrackingMode::kKnownOrigin;
  int agents = 3;
  /// Episode length used to scale time-since-detection into [0, 1].
  double dt_normalizer = 600.0;
  /// Side length of the world the model's coordinates are normalized against.
  double map_size = 2428.0;

  MapFrame frame() const noexcept { return MapFrame{map_size}; }

  EncoderMode encoder_mode() const noexcept {
    return mode == TrackingMode::kUnknownOrigin ? EncoderMode::kShared : EncoderMode::kPerAgent;
  }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Packs slates into the [2, slates * agents * horizon] layout the network uses.
ad::Matrix pack_slates(std::span<const TrajectorySlate> slates);
std::vector<TrajectorySlate> unpack_slates(const ad::Matrix& packed, int agents, int horizon);

/// Encoder + denoiser + noise schedule with one parameter set.
class DiffusionTracker {
 public:
  explicit DiffusionTracker(const ModelConfig& config, std::uint64_t init_seed = 0);

  const ModelConfig& config() const noexcept { return config_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }
  ParamSet& params() noexcept { return params_; }
  const ParamSet& params() const noexcept { return params_; }
  const Denoiser& denoiser() const noexcept { return denoiser_; }
  const DetectionEncoder& encoder() const noexcept { return encoder_; }

  /// Embeds a detection history according to the configured encoder mode.
  ConditionVector condition(const DetectionHistory& history) const;

  /// [cond_dim, histories * agents] conditioning for a training batch.
  ad::Var condition_batch(ad::Tape& tape, const ParamSet& params,
                          std::span<const DetectionHistory> histories) const;

  /// eps_theta for several slates that share one condition and step.
  std::vector<TrajectorySlate> predict_noise(std::span<const TrajectorySlate> slates, int step,
                                             const ConditionVector& cond) const;
  TrajectorySlate predict_noise(const TrajectorySlate& slate, int step,
                                const ConditionVector& cond) const;

 private:
  std::vector<std::vector<Detection>> sequences_for(const DetectionHistory& history) const;

  ModelConfig config_;
  NoiseSchedule schedule_;
  ParamSet params_;
  DetectionEncoder encoder_;
  Denoiser denoiser_;
};

}  // namespace difftrack
