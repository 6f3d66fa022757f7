#include "difftrack/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "difftrack/errors.hpp"

namespace difftrack {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "cosine") return ScheduleKind::kCosine;
  throw ConfigError("schedule.kind", "unknown schedule '" + name + "'");
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kLinear ? "linear" : "cosine";
}

void NoiseSchedule::validate() const {
  const auto n = static_cast<std::size_t>(num_steps);
  if (num_steps < 1) throw ConfigError("num_steps", "must be >= 1");
  if (betas.size() != n || alphas.size() != n || alpha_bars.size() != n || sigmas.size() != n) {
    throw ConfigError("betas", "table length differs from num_steps");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(betas[i] > 0.0 && betas[i] < 1.0)) throw ConfigError("betas", "beta outside (0, 1)");
    if (alphas[i] != 1.0 - betas[i]) throw ConfigError("alphas", "alpha != 1 - beta");
    if (!(alpha_bars[i] > 0.0 && alpha_bars[i] <= 1.0)) {
      throw ConfigError("alpha_bars", "alpha_bar outside (0, 1]");
    }
    if (i > 0 && !(alpha_bars[i] < alpha_bars[i - 1])) {
      throw ConfigError("alpha_bars", "alpha_bar not strictly decreasing");
    }
    if (!(sigmas[i] >= 0.0)) throw ConfigError("sigmas", "negative sigma");
  }
  if (sigmas[0] != 0.0) throw ConfigError("sigmas", "sigma_1 must be zero");
}

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
  NoiseSchedule s;
  s.num_steps = static_cast<int>(betas.size());
  s.betas = std::move(betas);
  s.alphas.resize(s.betas.size());
  s.alpha_bars.resize(s.betas.size());
  s.sigmas.resize(s.betas.size());
  double running = 1.0;
  for (std::size_t i = 0; i < s.betas.size(); ++i) {
    s.alphas[i] = 1.0 - s.betas[i];
    running *= s.alphas[i];
    s.alpha_bars[i] = running;
    s.sigmas[i] = i == 0 ? 0.0 : std::sqrt(s.betas[i]);
  }
  s.validate();
  return s;
}

NoiseSchedule build_schedule(int num_steps, ScheduleKind kind, double beta_min, double beta_max) {
  if (num_steps < 1) throw ConfigError("num_steps", "must be >= 1, got " + std::to_string(num_steps));
  if (!(beta_min > 0.0)) throw ConfigError("beta_min", "must be > 0");
  if (!(beta_max < 1.0)) throw ConfigError("beta_max", "must be < 1");
  if (!(beta_min <= beta_max)) throw ConfigError("beta_min", "must not exceed beta_max");

  std::vector<double> betas(static_cast<std::size_t>(num_steps));
  if (kind == ScheduleKind::kLinear) {
    for (int i = 0; i < num_steps; ++i) {
      const double frac = num_steps == 1 ? 0.0 : static_cast<double>(i) / (num_steps - 1);
      betas[i] = beta_min + frac * (beta_max - beta_min);
    }
  } else {
    // Cosine alpha_bar curve; betas are clipped into [beta_min, beta_max].
    constexpr double kOffset = 0.008;
    auto curve = [&](double t) {
      const double c = std::cos((t / num_steps + kOffset) / (1.0 + kOffset) * std::numbers::pi / 2);
      return c * c;
    };
    for (int i = 0; i < num_steps; ++i) {
      const double b = 1.0 - curve(i + 1.0) / curve(i);
      betas[i] = std::clamp(b, beta_min, beta_max);
    }
  }
  return schedule_from_betas(std::move(betas));
}

ScheduleConfig ScheduleConfig::scaled_default(int num_steps) {
  ScheduleConfig c;
  c.num_steps = num_steps;
  const double scale = 1000.0 / std::max(num_steps, 1);
  c.beta_max = std::min(0.02 * scale, 0.999);
  c.beta_min = std::min(1e-4 * scale, c.beta_max);
  return c;
}

namespace {

void require_step(int step, const NoiseSchedule& schedule) {
  if (step < 1 || step > schedule.num_steps) {
    throw PreconditionError("diffusion step " + std::to_string(step) + " outside [1, " +
                            std::to_string(schedule.num_steps) + "]");
  }
}

}  // namespace

TrajectorySlate forward_noise(const TrajectorySlate& tau0, int step, const TrajectorySlate& eps,
                              const NoiseSchedule& schedule) {
  require_same_shape(tau0, eps, "forward_noise");
  require_step(step, schedule);
  const double keep = std::sqrt(schedule.alpha_bar(step));
  const double noise = std::sqrt(1.0 - schedule.alpha_bar(step));
  TrajectorySlate out = tau0;
  auto o = out.values();
  auto e = eps.values();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = keep * o[k] + noise * e[k];
  return out;
}

TrajectorySlate posterior_mean(const TrajectorySlate& slate, int step,
                               const TrajectorySlate& eps_hat, const NoiseSchedule& schedule) {
  require_same_shape(slate, eps_hat, "posterior_mean");
  require_step(step, schedule);
  const double alpha = schedule.alpha(step);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  const double eps_coef = (1.0 - alpha) / std::sqrt(1.0 - schedule.alpha_bar(step));
  TrajectorySlate out = slate;
  auto o = out.values();
  auto e = eps_hat.values();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = inv_sqrt_alpha * (o[k] - eps_coef * e[k]);
  return out;
}

TrajectorySlate add_step_noise(const TrajectorySlate& mean, int step, const TrajectorySlate& z,
                               const NoiseSchedule& schedule) {
  require_same_shape(mean, z, "add_step_noise");
  const double sigma = schedule.sigma(step);
  TrajectorySlate out = mean;
  if (sigma == 0.0) return out;
  auto o = out.values();
  auto zv = z.values();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] += sigma * zv[k];
  return out;
}

DiffusionState denoise_step(const DiffusionState& state, const TrajectorySlate& eps_hat,
                            const NoiseSchedule& schedule, const TrajectorySlate& z) {
  if (state.step == 0) throw PreconditionError("denoise_step: state is already at step 0");
  const TrajectorySlate mean = posterior_mean(state.slate, state.step, eps_hat, schedule);
  return {add_step_noise(mean, state.step, z, schedule), state.step - 1};
}

double training_loss(const TrajectorySlate& eps_true, const TrajectorySlate& eps_pred) {
  require_same_shape(eps_true, eps_pred, "training_loss");
  auto a = eps_true.values();
  auto b = eps_pred.values();
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

}  // namespace difftrack
