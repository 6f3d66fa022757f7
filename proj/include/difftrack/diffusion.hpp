#pragma once

#include <string>
#include <vector>

#include "difftrack/slate.hpp"

namespace difftrack {

enum class ScheduleKind { kLinear, kCosine };

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

/// Per-step tables for a T-step DDPM, indexed by diffusion step i in [1, T].
/// Storage is zero-based: betas[i - 1] is beta_i.
struct NoiseSchedule {
  int num_steps = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
  std::vector<double> sigmas;

  double beta(int step) const { return betas.at(step - 1); }
  double alpha(int step) const { return alphas.at(step - 1); }
  double alpha_bar(int step) const { return alpha_bars.at(step - 1); }
  double sigma(int step) const { return sigmas.at(step - 1); }

  /// Checks every schedule invariant; throws ConfigError on violation.
  void validate() const;
};

/// Derives alphas, cumulative products and sampling scales from betas.
/// sigma_i = sqrt(beta_i) with sigma_1 forced to zero.
NoiseSchedule schedule_from_betas(std::vector<double> betas);

NoiseSchedule build_schedule(int num_steps, ScheduleKind kind, double beta_min, double beta_max);

/// DDPM's linear 1e-4..0.02 range rescaled from 1000 steps to `num_steps`,
/// so the terminal alpha_bar stays close to zero for short chains.
struct ScheduleConfig {
  int num_steps = 100;
  ScheduleKind kind = ScheduleKind::kLinear;
  double beta_min = 1e-3;
  double beta_max = 0.2;

  static ScheduleConfig scaled_default(int num_steps);
  NoiseSchedule build() const { return build_schedule(num_steps, kind, beta_min, beta_max); }
  bool operator==(const ScheduleConfig&) const = default;
};

struct DiffusionState {
  TrajectorySlate slate;
  int step = 0;
};

/// sqrt(alpha_bar_i) * tau0 + sqrt(1 - alpha_bar_i) * eps.
TrajectorySlate forward_noise(const TrajectorySlate& tau0, int step, const TrajectorySlate& eps,
                              const NoiseSchedule& schedule);

/// Mean of p(tau^{i-1} | tau^i) given the noise estimate:
/// (tau^i - (1 - alpha_i) / sqrt(1 - alpha_bar_i) * eps_hat) / sqrt(alpha_i).
TrajectorySlate posterior_mean(const TrajectorySlate& slate, int step,
                               const TrajectorySlate& eps_hat, const NoiseSchedule& schedule);

/// mean + sigma_i * z, elementwise. Shared by the plain and the guided sampler
/// so both produce identical bits when guidance is off.
TrajectorySlate add_step_noise(const TrajectorySlate& mean, int step, const TrajectorySlate& z,
                               const NoiseSchedule& schedule);

/// One ancestral step tau^i -> tau^{i-1}.
DiffusionState denoise_step(const DiffusionState& state, const TrajectorySlate& eps_hat,
                            const NoiseSchedule& schedule, const TrajectorySlate& z);

/// Mean squared error over every element.
double training_loss(const TrajectorySlate& eps_true, const TrajectorySlate& eps_pred);

}  // namespace difftrack
