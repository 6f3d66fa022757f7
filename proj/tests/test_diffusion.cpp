#include <gtest/gtest.h>

#include <cmath>

#include "difftrack/diffusion.hpp"
#include "difftrack/errors.hpp"
#include "difftrack/rng.hpp"

namespace difftrack {
namespace {

TrajectorySlate scalar_slate(double v) { return TrajectorySlate(1, 1, v); }

TEST(BuildSchedule, SingleStepLinear) {
  const NoiseSchedule s = build_schedule(1, ScheduleKind::kLinear, 1e-4, 0.02);
  ASSERT_EQ(s.betas.size(), 1u);
  EXPECT_DOUBLE_EQ(s.betas[0], 1e-4);
  EXPECT_DOUBLE_EQ(s.alpha_bars[0], 0.9999);
  EXPECT_EQ(s.sigmas[0], 0.0);
}

TEST(BuildSchedule, ConstantBetaTwoSteps) {
  const NoiseSchedule s = build_schedule(2, ScheduleKind::kLinear, 0.1, 0.1);
  EXPECT_DOUBLE_EQ(s.alpha_bars[0], 0.9);
  EXPECT_DOUBLE_EQ(s.alpha_bars[1], 0.81);
}

TEST(BuildSchedule, HundredStepsMatchesIndependentProduct) {
  const NoiseSchedule s = build_schedule(100, ScheduleKind::kLinear, 1e-4, 0.02);
  // Oracle: recompute each beta from the interpolation formula and multiply.
  double product = 1.0;
  for (int i = 0; i < 100; ++i) {
    const double beta = 1e-4 + (0.02 - 1e-4) * i / 99.0;
    EXPECT_NEAR(s.betas[i], beta, 1e-15);
    product *= 1.0 - beta;
    EXPECT_NEAR(s.alpha_bars[i], product, 1e-14);
    if (i > 0) EXPECT_LT(s.alpha_bars[i], s.alpha_bars[i - 1]);
  }
  EXPECT_NEAR(s.alpha_bars.back(), product, 1e-14);
}

TEST(BuildSchedule, TablesReproducibleFromBetas) {
  for (ScheduleKind kind : {ScheduleKind::kLinear, ScheduleKind::kCosine}) {
    const NoiseSchedule s = build_schedule(50, kind, 1e-3, 0.5);
    const NoiseSchedule again = schedule_from_betas(s.betas);
    EXPECT_EQ(s.alphas, again.alphas);
    EXPECT_EQ(s.alpha_bars, again.alpha_bars);
    EXPECT_EQ(s.sigmas, again.sigmas);
    EXPECT_NO_THROW(s.validate());
    EXPECT_EQ(s.sigma(1), 0.0);
    EXPECT_DOUBLE_EQ(s.sigma(2), std::sqrt(s.beta(2)));
  }
}

TEST(BuildSchedule, InvalidBoundsNameTheField) {
  try {
    build_schedule(10, ScheduleKind::kLinear, 0.0, 0.02);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "beta_min");
  }
  EXPECT_THROW(build_schedule(10, ScheduleKind::kLinear, 0.1, 1.0), ConfigError);
  EXPECT_THROW(build_schedule(10, ScheduleKind::kLinear, 0.2, 0.1), ConfigError);
  EXPECT_THROW(build_schedule(0, ScheduleKind::kLinear, 0.1, 0.2), ConfigError);
}

TEST(BuildSchedule, ScaledDefaultReachesNearPureNoise) {
  const NoiseSchedule s = ScheduleConfig::scaled_default(100).build();
  EXPECT_LT(s.alpha_bars.back(), 1e-3);
  EXPECT_DOUBLE_EQ(s.beta(1), 1e-3);
}

TEST(ForwardNoise, UnitAlphaBarKeepsInput) {
  NoiseSchedule s;
  s.num_steps = 1;
  s.betas = {0.0};
  s.alphas = {1.0};
  s.alpha_bars = {1.0};
  s.sigmas = {0.0};
  Rng rng(3);
  const TrajectorySlate tau0 = TrajectorySlate::standard_normal(2, 3, rng);
  const TrajectorySlate eps = TrajectorySlate::standard_normal(2, 3, rng);
  EXPECT_EQ(forward_noise(tau0, 1, eps, s), tau0);
}

TEST(ForwardNoise, ClosedFormValues) {
  const NoiseSchedule s = build_schedule(1, ScheduleKind::kLinear, 0.75, 0.75);
  ASSERT_DOUBLE_EQ(s.alpha_bar(1), 0.25);
  EXPECT_DOUBLE_EQ(forward_noise(scalar_slate(1.0), 1, scalar_slate(0.0), s).at(0, 0, 0), 0.5);
  EXPECT_NEAR(forward_noise(scalar_slate(1.0), 1, scalar_slate(1.0), s).at(0, 0, 0),
              0.5 + std::sqrt(0.75), 1e-15);
  EXPECT_NEAR(0.5 + std::sqrt(0.75), 1.3660, 5e-5);
}

TEST(ForwardNoise, ShapeMismatchThrows) {
  const NoiseSchedule s = build_schedule(4, ScheduleKind::kLinear, 0.1, 0.2);
  EXPECT_THROW(forward_noise(TrajectorySlate(1, 4), 1, TrajectorySlate(2, 4), s), DimensionError);
}

TEST(ForwardNoise, ZeroNoiseIsContraction) {
  const NoiseSchedule s = build_schedule(20, ScheduleKind::kLinear, 0.01, 0.2);
  Rng rng(9);
  const TrajectorySlate tau0 = TrajectorySlate::standard_normal(3, 8, rng);
  for (int step : {1, 7, 20}) {
    const TrajectorySlate out = forward_noise(tau0, step, TrajectorySlate(3, 8), s);
    double n_in = 0.0, n_out = 0.0;
    for (std::size_t k = 0; k < tau0.size(); ++k) {
      n_in += tau0.values()[k] * tau0.values()[k];
      n_out += out.values()[k] * out.values()[k];
    }
    EXPECT_NEAR(std::sqrt(n_out / n_in), std::sqrt(s.alpha_bar(step)), 1e-14);
  }
}

TEST(ForwardNoise, MarginalMatchesGaussian) {
  const NoiseSchedule s = build_schedule(10, ScheduleKind::kLinear, 0.05, 0.3);
  const int step = 6;
  const double ab = s.alpha_bar(step);
  const TrajectorySlate tau0 = scalar_slate(0.7);
  Rng rng(11);
  const int n = 20000;
  double sum = 0.0, sum_sq = 0.0;
  for (int k = 0; k < n; ++k) {
    const double v = forward_noise(tau0, step, scalar_slate(rng.normal()), s).at(0, 0, 0);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  const double se = std::sqrt((1.0 - ab) / n);
  EXPECT_NEAR(mean, std::sqrt(ab) * 0.7, 3.0 * se);
  EXPECT_NEAR(var, 1.0 - ab, 0.05 * (1.0 - ab));
}

TEST(DenoiseStep, ZeroNoiseRescales) {
  const NoiseSchedule s = build_schedule(1, ScheduleKind::kLinear, 0.19, 0.19);
  ASSERT_DOUBLE_EQ(s.alpha(1), 0.81);
  const DiffusionState out =
      denoise_step({scalar_slate(1.0), 1}, scalar_slate(0.0), s, scalar_slate(0.0));
  EXPECT_NEAR(out.slate.at(0, 0, 0), 1.0 / 0.9, 1e-15);
  EXPECT_EQ(out.step, 0);
}

TEST(DenoiseStep, HandDerivedValue) {
  const NoiseSchedule s = build_schedule(2, ScheduleKind::kLinear, 0.1, 0.1);
  ASSERT_DOUBLE_EQ(s.alpha(2), 0.9);
  ASSERT_DOUBLE_EQ(s.alpha_bar(2), 0.81);
  const DiffusionState out =
      denoise_step({scalar_slate(1.0), 2}, scalar_slate(1.0), s, scalar_slate(0.0));
  const double expected = (1.0 / std::sqrt(0.9)) * (1.0 - 0.1 / std::sqrt(0.19));
  EXPECT_NEAR(out.slate.at(0, 0, 0), expected, 1e-12);
  EXPECT_NEAR(out.slate.at(0, 0, 0), 0.8123, 5e-5);
  EXPECT_EQ(out.step, 1);
}

TEST(DenoiseStep, FinalStepIgnoresNoise) {
  const NoiseSchedule s = build_schedule(5, ScheduleKind::kLinear, 0.1, 0.3);
  Rng rng(2);
  const TrajectorySlate slate = TrajectorySlate::standard_normal(2, 4, rng);
  const TrajectorySlate eps = TrajectorySlate::standard_normal(2, 4, rng);
  const TrajectorySlate z = TrajectorySlate::standard_normal(2, 4, rng);
  EXPECT_EQ(denoise_step({slate, 1}, eps, s, z).slate, denoise_step({slate, 1}, eps, s, TrajectorySlate(2, 4)).slate);
  EXPECT_NE(denoise_step({slate, 2}, eps, s, z).slate, denoise_step({slate, 2}, eps, s, TrajectorySlate(2, 4)).slate);
}

TEST(DenoiseStep, ExactNoiseOracleRecoversInput) {
  const NoiseSchedule s = build_schedule(1, ScheduleKind::kLinear, 0.3, 0.3);
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const TrajectorySlate tau0 = scalar_slate(rng.uniform(-1.0, 1.0));
    const TrajectorySlate eps = scalar_slate(rng.normal());
    const TrajectorySlate noisy = forward_noise(tau0, 1, eps, s);
    const DiffusionState back = denoise_step({noisy, 1}, eps, s, scalar_slate(rng.normal()));
    EXPECT_NEAR(back.slate.at(0, 0, 0), tau0.at(0, 0, 0), 1e-6);
  }
}

TEST(DenoiseStep, StepZeroIsPreconditionViolation) {
  const NoiseSchedule s = build_schedule(2, ScheduleKind::kLinear, 0.1, 0.2);
  EXPECT_THROW(denoise_step({scalar_slate(1.0), 0}, scalar_slate(0.0), s, scalar_slate(0.0)),
               PreconditionError);
}

TEST(TrainingLoss, Examples) {
  Rng rng(8);
  const TrajectorySlate a = TrajectorySlate::standard_normal(2, 2, rng);
  EXPECT_EQ(training_loss(a, a), 0.0);
  EXPECT_DOUBLE_EQ(training_loss(TrajectorySlate(2, 2, 0.0), TrajectorySlate(2, 2, 1.0)), 1.0);

  const TrajectorySlate b = TrajectorySlate(1, 2);  // oracle on a 1x2x2 slate
  TrajectorySlate p(1, 2), q(1, 2);
  double oracle = 0.0;
  for (int t = 0; t < 2; ++t)
    for (int c = 0; c < 2; ++c) {
      p.at(0, t, c) = rng.normal();
      q.at(0, t, c) = rng.normal();
      oracle += (p.at(0, t, c) - q.at(0, t, c)) * (p.at(0, t, c) - q.at(0, t, c));
    }
  EXPECT_NEAR(training_loss(p, q), oracle / 4.0, 1e-15);
  EXPECT_THROW(training_loss(a, b), DimensionError);
}

}  // namespace
}  // namespace difftrack
