#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "difftrack/sampler.hpp"
#include "difftrack/sim.hpp"
#include "difftrack/trainer.hpp"

namespace difftrack {

/// Mean Euclidean distance over samples, agents and timesteps, in the
/// slates' own units. Agents correspond by slate index.
double ade(std::span<const TrajectorySlate> samples, const TrajectorySlate& truth);

/// Smallest per-sample ADE; whole joint slates are compared.
double min_ade(std::span<const TrajectorySlate> samples, const TrajectorySlate& truth);

/// Fraction of sampled states strictly inside an obstacle of `map`
/// (samples are in normalized coordinates).
double collision_rate(std::span<const TrajectorySlate> samples, const sim::MapSpec& map);

/// Slate in map-size units (world / size), the scale reports use.
TrajectorySlate to_unit_scale(const TrajectorySlate& normalized);

/// Every state of agent a at its most recent detection in `history` (any
/// detection when ids are absent); the map center without one.
TrajectorySlate stationary_prediction(const DetectionHistory& history, int agents, int horizon);

/// Pins the detections made at the current timestep (dt == 0) to timestep
/// 0. Detections without an agent id are pinned only for one-agent slates.
InpaintMask current_detection_mask(const DetectionHistory& history, int agents);

struct EvalOptions {
  std::vector<int> horizons;  // empty: the model horizon only
  int n_samples = 30;
  int point_stride = 10;      // timesteps between evaluation points
  int max_points = 0;         // 0: all points
  bool require_detection = false;  // skip points before an episode's first detection
  bool inpaint_current = true;
  ConstraintSet constraints;  // grad_steps = 0 for unguided sampling
  std::uint64_t seed = 0;
};

struct HorizonStats {
  int horizon = 0;
  double ade = 0.0;
  double ade_std_err = 0.0;
  double min_ade = 0.0;
  double min_ade_std_err = 0.0;
  double baseline_ade = 0.0;  // stationary at the last detection
};

struct EvalReport {
  std::string mode;
  int n_samples = 0;
  int n_points = 0;
  std::vector<HorizonStats> per_horizon;
  std::optional<double> collision_rate;
  std::string config_hash;
  std::uint64_t seed = 0;

  const HorizonStats& at(int horizon) const;
};

/// Monte-Carlo samples (normalized coordinates) for one evaluation point.
struct PointSamples {
  std::string episode_id;
  int t_now = 0;
  std::string mode;  // tracking mode of the model that drew the samples
  bool guided = false;
  bool inpainted = false;
  std::vector<TrajectorySlate> samples;
};

/// Draws options.n_samples slates at every evaluation point (every
/// point_stride timesteps whose full model window fits in the episode).
/// Point p samples from substream p of options.seed.
std::vector<PointSamples> sample_points(const DiffusionTracker& model, const std::vector<sim::EpisodeRecord>& episodes,
                                        const EvalOptions& options);

/// Scores sample sets against the episodes they came from. Distances are in
/// map-size units; the collision rate is filled in when `map` is given.
/// Throws RangeError for horizons longer than the samples.
EvalReport score_points(std::span<const PointSamples> points, const std::vector<sim::EpisodeRecord>& episodes,
                        std::vector<int> horizons, const MapFrame& frame, const sim::MapSpec* map = nullptr);

/// sample_points followed by score_points.
EvalReport horizon_sweep(const DiffusionTracker& model, const std::vector<sim::EpisodeRecord>& episodes,
                         const EvalOptions& options, const sim::MapSpec* map = nullptr);

/// (episode index, t_now) for every evaluation point, in sweep order. With
/// `require_detection`, points with no detection at or before t_now are skipped.
std::vector<std::pair<std::size_t, int>> evaluation_points(const std::vector<sim::EpisodeRecord>& episodes,
                                                           int window, int stride, int max_points,
                                                           bool require_detection = false);

/// Obstacles of `map` in normalized coordinates.
std::vector<CircleObstacle> normalized_obstacles(const sim::MapSpec& map);

}  // namespace difftrack
