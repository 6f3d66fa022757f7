#include "difftrack/sampler.hpp"

#include <cmath>
#include <span>

#include "difftrack/errors.hpp"
#include "difftrack/rng.hpp"

namespace difftrack {

void ConstraintSet::validate() const {
  if (motion_weight < 0.0) throw ConfigError("sample.motion_weight", "must be >= 0");
  if (obstacle_weight < 0.0) throw ConfigError("sample.obstacle_weight", "must be >= 0");
  if (margin < 0.0) throw ConfigError("sample.margin", "must be >= 0");
  if (grad_steps < 0) throw ConfigError("sample.grad_steps", "must be >= 0");
  if (!(step_size > 0.0)) throw ConfigError("sample.step_size", "must be positive");
  for (const CircleObstacle& o : obstacles) {
    if (o.radius < 0.0 || std::abs(o.center[0]) > 1.0 || std::abs(o.center[1]) > 1.0) {
      throw ConfigError("sample.obstacles", "obstacle outside the normalized map or with negative radius");
    }
  }
}

void InpaintMask::validate(int agents, int horizon) const {
  for (const InpaintEntry& e : entries) {
    if (e.agent < 0 || e.agent >= agents || e.t < 0 || e.t >= horizon) {
      throw RangeError("inpaint entry (agent " + std::to_string(e.agent) + ", t " + std::to_string(e.t) +
                       ") outside a " + std::to_string(agents) + "x" + std::to_string(horizon) + " slate");
    }
  }
}

void InpaintMask::apply(TrajectorySlate& slate) const {
  for (const InpaintEntry& e : entries) slate.set_state(e.agent, e.t, {e.x, e.y});
}

bool InpaintMask::satisfied_by(const TrajectorySlate& slate) const {
  for (const InpaintEntry& e : entries) {
    if (slate.at(e.agent, e.t, 0) != e.x || slate.at(e.agent, e.t, 1) != e.y) return false;
  }
  return true;
}

ObjectiveValue motion_objective(const TrajectorySlate& slate) {
  if (slate.horizon() < 2) throw DimensionError("motion_objective needs at least two timesteps");
  ObjectiveValue out{0.0, TrajectorySlate(slate.agents(), slate.horizon())};
  for (int a = 0; a < slate.agents(); ++a) {
    for (int t = 0; t + 1 < slate.horizon(); ++t) {
      const double dx = slate.at(a, t + 1, 0) - slate.at(a, t, 0);
      const double dy = slate.at(a, t + 1, 1) - slate.at(a, t, 1);
      const double len = std::hypot(dx, dy);
      out.value += len;
      if (len == 0.0) continue;
      out.gradient.at(a, t + 1, 0) += dx / len;
      out.gradient.at(a, t + 1, 1) += dy / len;
      out.gradient.at(a, t, 0) -= dx / len;
      out.gradient.at(a, t, 1) -= dy / len;
    }
  }
  return out;
}

ObjectiveValue obstacle_objective(const TrajectorySlate& slate, const ConstraintSet& constraints) {
  ObjectiveValue out{0.0, TrajectorySlate(slate.agents(), slate.horizon())};
  for (int a = 0; a < slate.agents(); ++a) {
    for (int t = 0; t < slate.horizon(); ++t) {
      for (const CircleObstacle& o : constraints.obstacles) {
        const double dx = slate.at(a, t, 0) - o.center[0];
        const double dy = slate.at(a, t, 1) - o.center[1];
        const double d = std::hypot(dx, dy);
        const double violation = o.radius + constraints.margin - d;
        if (violation <= 0.0) continue;
        out.value += violation;
        if (d == 0.0) {
          out.gradient.at(a, t, 0) -= 1.0;
        } else {
          out.gradient.at(a, t, 0) -= dx / d;
          out.gradient.at(a, t, 1) -= dy / d;
        }
      }
    }
  }
  return out;
}

ObjectiveValue guidance_objective(const TrajectorySlate& slate, const ConstraintSet& constraints) {
  ObjectiveValue out{0.0, TrajectorySlate(slate.agents(), slate.horizon())};
  auto accumulate = [&](const ObjectiveValue& term, double weight) {
    out.value += weight * term.value;
    auto g = out.gradient.values();
    auto tg = term.gradient.values();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += weight * tg[k];
  };
  if (constraints.motion_weight > 0.0 && slate.horizon() >= 2) {
    accumulate(motion_objective(slate), constraints.motion_weight);
  }
  if (constraints.obstacle_weight > 0.0 && !constraints.obstacles.empty()) {
    accumulate(obstacle_objective(slate, constraints), constraints.obstacle_weight);
  }
  return out;
}

TrajectorySlate refine_mean(const TrajectorySlate& mean, const ConstraintSet& constraints,
                            std::vector<double>* trace) {
  TrajectorySlate x = mean;
  if (!constraints.enabled()) return x;
  const std::size_t n = x.size();
  std::vector<double> m(n, 0.0), v(n, 0.0);
  const double b1 = constraints.adam_beta1, b2 = constraints.adam_beta2;
  for (int k = 1; k <= constraints.grad_steps; ++k) {
    const ObjectiveValue obj = guidance_objective(x, constraints);
    if (trace != nullptr) trace->push_back(obj.value);
    const double c1 = 1.0 - std::pow(b1, k), c2 = 1.0 - std::pow(b2, k);
    auto xv = x.values();
    auto g = obj.gradient.values();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      xv[i] -= constraints.step_size * (m[i] / c1) / (std::sqrt(v[i] / c2) + constraints.adam_eps);
    }
  }
  if (trace != nullptr) trace->push_back(guidance_objective(x, constraints).value);
  return x;
}

TrajectorySlate ancestral_sample(const DiffusionTracker& model, const ConditionVector& cond, Rng& rng) {
  const int agents = model.config().agents;
  const int horizon = model.config().denoiser.horizon;
  const NoiseSchedule& schedule = model.schedule();
  DiffusionState state{TrajectorySlate::standard_normal(agents, horizon, rng), schedule.num_steps};
  while (state.step > 0) {
    const TrajectorySlate eps_hat = model.predict_noise(state.slate, state.step, cond);
    const TrajectorySlate z =
        state.step > 1 ? TrajectorySlate::standard_normal(agents, horizon, rng) : TrajectorySlate(agents, horizon);
    state = denoise_step(state, eps_hat, schedule, z);
  }
  return state.slate;
}

namespace {

std::vector<TrajectorySlate> sample_chains(const DiffusionTracker& model, const ConditionVector& cond,
                                           const ConstraintSet& constraints, const InpaintMask& mask,
                                           std::span<Rng> rngs, const StepObserver& observer) {
  const int agents = model.config().agents;
  const int horizon = model.config().denoiser.horizon;
  const NoiseSchedule& schedule = model.schedule();
  constraints.validate();
  mask.validate(agents, horizon);

  std::vector<TrajectorySlate> slates;
  for (Rng& rng : rngs) slates.push_back(TrajectorySlate::standard_normal(agents, horizon, rng));
  for (int step = schedule.num_steps; step >= 1; --step) {
    const std::vector<TrajectorySlate> eps_hat = model.predict_noise(slates, step, cond);
    for (std::size_t c = 0; c < slates.size(); ++c) {
      const TrajectorySlate mean = refine_mean(posterior_mean(slates[c], step, eps_hat[c], schedule), constraints);
      const TrajectorySlate z =
          step > 1 ? TrajectorySlate::standard_normal(agents, horizon, rngs[c]) : TrajectorySlate(agents, horizon);
      slates[c] = add_step_noise(mean, step, z, schedule);
      mask.apply(slates[c]);
      if (!slates[c].all_finite()) {
        throw SamplingError(step, "chain " + std::to_string(c) + " became non-finite");
      }
      if (observer) observer(static_cast<int>(c), step - 1, slates[c]);
    }
  }
  return slates;
}

}  // namespace

TrajectorySlate guided_sample(const DiffusionTracker& model, const ConditionVector& cond,
                              const ConstraintSet& constraints, const InpaintMask& mask, Rng& rng,
                              const StepObserver& observer) {
  return sample_chains(model, cond, constraints, mask, std::span<Rng>(&rng, 1), observer).front();
}

std::vector<TrajectorySlate> monte_carlo_sample(const DiffusionTracker& model, const ConditionVector& cond,
                                                const ConstraintSet& constraints, const InpaintMask& mask,
                                                int n_samples, const Rng& rng, const StepObserver& observer) {
  if (n_samples < 1) throw PreconditionError("monte_carlo_sample: n_samples must be >= 1");
  std::vector<Rng> rngs;
  for (int k = 0; k < n_samples; ++k) rngs.push_back(rng.substream(static_cast<std::uint64_t>(k)));
  return sample_chains(model, cond, constraints, mask, rngs, observer);
}

}  // namespace difftrack
