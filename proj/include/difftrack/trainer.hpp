#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "difftrack/model.hpp"
#include "difftrack/sim.hpp"

namespace difftrack {

struct TrainingExample {
  DetectionHistory history;
  TrajectorySlate future;
};

/// Detections at or before `t_now` (dt = (t_now - t) / dt_normalizer, oldest
/// first) and the normalized ground truth over [t_now, t_now + horizon).
/// Throws RangeError when the window overruns the episode.
TrainingExample make_training_example(const sim::EpisodeRecord& episode, int t_now, int horizon,
                                      const MapFrame& frame, double dt_normalizer);

struct TrainConfig {
  int batch_size = 16;
  int epochs = 10;
  int max_steps = 0;  // 0: run every epoch
  double learning_rate = 2e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;  // global norm; 0 disables
  std::optional<double> ema_decay;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // steps; 0: only at the end

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct StepRecord {
  long step = 0;  // number of updates applied so far
  int epoch = 0;
  double loss = 0.0;
  double wall_seconds = 0.0;
};

/// Adam on a model's parameters. Parameters and optimizer moments are kept at
/// float32 precision after every update so a checkpoint holds the complete
/// training state.
class Trainer {
 public:
  Trainer(DiffusionTracker& model, const TrainConfig& config);

  const TrainConfig& config() const noexcept { return config_; }
  long step() const noexcept { return step_; }
  const ParamSet& adam_m() const noexcept { return m_; }
  const ParamSet& adam_v() const noexcept { return v_; }
  const std::optional<ParamSet>& ema() const noexcept { return ema_; }

  /// Denoising loss for explicit diffusion steps and noise, without updating.
  double loss(std::span<const TrainingExample> batch, std::span<const int> steps,
              std::span<const TrajectorySlate> noise) const;

  /// Draws a step and a noise slate per example from `rng`, takes one Adam
  /// step on the mean squared noise error and returns that loss.
  double train_step(std::span<const TrainingExample> batch, Rng& rng);

  /// Epoch loop over episodes: one random t_now per episode per epoch,
  /// shuffled into batches. Resumes mid-run when step() > 0.
  void fit(const std::vector<sim::EpisodeRecord>& episodes,
           const std::function<void(const StepRecord&)>& on_step = {});

  /// Restores optimizer state and step count (parameters live in the model).
  void restore(long step, const ParamSet& m, const ParamSet& v, std::optional<ParamSet> ema);

 private:
  struct Batch {
    std::vector<int> steps;
    std::vector<TrajectorySlate> noise;
  };
  ad::Var build_loss(ad::Tape& tape, std::span<const TrainingExample> batch, const Batch& draws) const;

  DiffusionTracker& model_;
  TrainConfig config_;
  ParamSet m_;
  ParamSet v_;
  std::optional<ParamSet> ema_;
  long step_ = 0;
};

}  // namespace difftrack
