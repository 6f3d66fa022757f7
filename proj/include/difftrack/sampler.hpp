#pragma once

#include <functional>
#include <vector>

#include "difftrack/model.hpp"

namespace difftrack {

/// Circle in normalized coordinates.
struct CircleObstacle {
  Vec2 center{};
  double radius = 0.0;

  bool operator==(const CircleObstacle&) const = default;
};

/// Penalties applied to each step's predicted mean. Both objectives are
/// minimized with a fresh Adam state per diffusion step.
struct ConstraintSet {
  double motion_weight = 1.0;
  double obstacle_weight = 1.0;
  std::vector<CircleObstacle> obstacles;
  double margin = 0.02;  // hinge activates within radius + margin
  int grad_steps = 2;    // 0 disables guidance
  double step_size = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  bool enabled() const noexcept { return grad_steps > 0; }
  /// Throws ConfigError naming the offending field.
  void validate() const;
  bool operator==(const ConstraintSet&) const = default;
};

struct InpaintEntry {
  int agent = 0;
  int t = 0;
  double x = 0.0;
  double y = 0.0;

  bool operator==(const InpaintEntry&) const = default;
};

/// Known slate entries written back after every diffusion step.
struct InpaintMask {
  std::vector<InpaintEntry> entries;

  bool empty() const noexcept { return entries.empty(); }
  /// Throws RangeError when an entry falls outside an agents x horizon slate.
  void validate(int agents, int horizon) const;
  void apply(TrajectorySlate& slate) const;
  /// True when every entry holds exactly in `slate`.
  bool satisfied_by(const TrajectorySlate& slate) const;
};

struct ObjectiveValue {
  double value = 0.0;
  TrajectorySlate gradient;
};

/// Sum over agents of the Euclidean lengths of consecutive-state segments.
/// Zero-length segments contribute a zero subgradient.
ObjectiveValue motion_objective(const TrajectorySlate& slate);

/// Sum over states and obstacles of max(0, radius + margin - distance). A
/// state exactly at a center is pushed along +x.
ObjectiveValue obstacle_objective(const TrajectorySlate& slate, const ConstraintSet& constraints);

/// motion_weight * motion + obstacle_weight * obstacle (terms with zero
/// weight are skipped).
ObjectiveValue guidance_objective(const TrajectorySlate& slate, const ConstraintSet& constraints);

/// Runs constraints.grad_steps Adam updates on `mean`, descending the
/// combined objective. `trace`, when given, receives the objective before
/// each update and after the last one.
TrajectorySlate refine_mean(const TrajectorySlate& mean, const ConstraintSet& constraints,
                            std::vector<double>* trace = nullptr);

/// Called after every diffusion step with the chain index, the step just
/// reached (T-1 .. 0) and the slate.
using StepObserver = std::function<void(int chain, int step, const TrajectorySlate& slate)>;

/// Plain ancestral sampling from N(0, I) with no guidance or inpainting.
TrajectorySlate ancestral_sample(const DiffusionTracker& model, const ConditionVector& cond, Rng& rng);

/// Ancestral sampling with constraint refinement of every step's mean and
/// inpainting after every step. With guidance off and an empty mask the
/// result is bit-identical to ancestral_sample on the same stream.
/// Throws SamplingError if the chain becomes non-finite.
TrajectorySlate guided_sample(const DiffusionTracker& model, const ConditionVector& cond,
                              const ConstraintSet& constraints, const InpaintMask& mask, Rng& rng,
                              const StepObserver& observer = {});

/// `n_samples` chains evaluated as one network batch; chain k draws from
/// rng.substream(k), so chain 0 equals guided_sample on that substream.
std::vector<TrajectorySlate> monte_carlo_sample(const DiffusionTracker& model, const ConditionVector& cond,
                                                const ConstraintSet& constraints, const InpaintMask& mask,
                                                int n_samples, const Rng& rng,
                                                const StepObserver& observer = {});

}  // namespace difftrack
