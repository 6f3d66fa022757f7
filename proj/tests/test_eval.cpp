#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "difftrack/errors.hpp"
#include "difftrack/eval.hpp"
#include "difftrack/sim.hpp"
#include "oracles.hpp"

namespace difftrack {
namespace {

using testing::ade_loop;
using testing::min_ade_loop;

TEST(Metrics, AdeExamples) {
  const TrajectorySlate truth(2, 3, 0.5);
  const std::vector<TrajectorySlate> same{truth};
  EXPECT_EQ(ade(same, truth), 0.0);
  TrajectorySlate shifted = truth;
  for (int a = 0; a < 2; ++a)
    for (int t = 0; t < 3; ++t) shifted.at(a, t, 0) += 3.0, shifted.at(a, t, 1) += 4.0;
  const std::vector<TrajectorySlate> one{shifted};
  EXPECT_DOUBLE_EQ(ade(one, truth), 5.0);
  const std::vector<TrajectorySlate> both{truth, shifted};
  EXPECT_DOUBLE_EQ(ade(both, truth), 2.5);
  EXPECT_DOUBLE_EQ(min_ade(both, truth), 0.0);
}

TEST(Metrics, ErrorsOnBadInput) {
  const TrajectorySlate truth(1, 4);
  EXPECT_THROW(ade(std::vector<TrajectorySlate>{}, truth), PreconditionError);
  EXPECT_THROW(min_ade(std::vector<TrajectorySlate>{}, truth), PreconditionError);
  EXPECT_THROW(ade(std::vector<TrajectorySlate>{TrajectorySlate(1, 5)}, truth), DimensionError);
}

TEST(Metrics, MatchesTripleLoopOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int agents = static_cast<int>(rng.uniform_int(1, 4));
    const int horizon = static_cast<int>(rng.uniform_int(1, 12));
    const int n = static_cast<int>(rng.uniform_int(1, 6));
    const TrajectorySlate truth = TrajectorySlate::standard_normal(agents, horizon, rng);
    std::vector<TrajectorySlate> samples;
    for (int k = 0; k < n; ++k) samples.push_back(TrajectorySlate::standard_normal(agents, horizon, rng));
    EXPECT_EQ(ade(samples, truth), ade_loop(samples, truth));
    EXPECT_EQ(min_ade(samples, truth), min_ade_loop(samples, truth));
    EXPECT_LE(min_ade(samples, truth), ade(samples, truth) + 1e-12);

    std::vector<TrajectorySlate> reversed(samples.rbegin(), samples.rend());
    EXPECT_NEAR(ade(reversed, truth), ade(samples, truth), 1e-12);
    EXPECT_EQ(min_ade(reversed, truth), min_ade(samples, truth));

    std::vector<TrajectorySlate> more = samples;
    more.push_back(TrajectorySlate::standard_normal(agents, horizon, rng));
    EXPECT_LE(min_ade(more, truth), min_ade(samples, truth));
  }
}

TEST(Metrics, CollisionRateCountsStatesInside) {
  sim::MapSpec map;
  map.size = 200;
  map.visibility_resolution = 2;
  map.visibility.assign(4, 0.0);
  map.obstacles = {{{100, 100}, 20}};
  const MapFrame frame{200};
  TrajectorySlate s(1, 20, frame.to_normalized(20));
  for (int t = 0; t < 3; ++t) s.set_state(0, t, {frame.to_normalized(100 + t), frame.to_normalized(100)});
  const std::vector<TrajectorySlate> samples{s};
  EXPECT_DOUBLE_EQ(collision_rate(samples, map), 0.15);
  TrajectorySlate boundary(1, 1);
  boundary.set_state(0, 0, {frame.to_normalized(120), frame.to_normalized(100)});
  EXPECT_DOUBLE_EQ(collision_rate(std::vector<TrajectorySlate>{boundary}, map), 0.0);
}

TEST(Metrics, UnitScale) {
  TrajectorySlate s(1, 1);
  s.set_state(0, 0, {-1.0, 1.0});
  const TrajectorySlate u = to_unit_scale(s);
  EXPECT_DOUBLE_EQ(u.at(0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(u.at(0, 0, 1), 1.0);
}

TEST(Baseline, StationaryAtLastDetection) {
  DetectionHistory h;
  h.detections = {{0.3, 0.1, 0.1, 0}, {0.2, -0.4, 0.5, 1}, {0.1, 0.2, 0.3, 0}};
  const TrajectorySlate p = stationary_prediction(h, 3, 4);
  for (int t = 0; t < 4; ++t) {
    EXPECT_EQ(p.state(0, t), (Vec2{0.2, 0.3}));
    EXPECT_EQ(p.state(1, t), (Vec2{-0.4, 0.5}));
    EXPECT_EQ(p.state(2, t), (Vec2{0.0, 0.0}));
  }
}

TEST(Baseline, CurrentDetectionMask) {
  DetectionHistory h;
  h.detections = {{0.1, 0.1, 0.1, 0}, {0.0, 0.2, 0.3, 1}};
  const InpaintMask mask = current_detection_mask(h, 2);
  ASSERT_EQ(mask.entries.size(), 1u);
  EXPECT_EQ(mask.entries[0], (InpaintEntry{1, 0, 0.2, 0.3}));
}

TEST(Sweep, PointsRespectWindowAndStride) {
  std::vector<sim::EpisodeRecord> eps(2);
  eps[0].trajectories.assign(1, std::vector<Vec2>(35));
  eps[1].trajectories.assign(1, std::vector<Vec2>(5));
  const auto points = evaluation_points(eps, 10, 10, 0);
  ASSERT_EQ(points.size(), 3u);
  EXPECT_EQ(points[2], (std::pair<std::size_t, int>{0, 20}));
  EXPECT_EQ(evaluation_points(eps, 10, 10, 2).size(), 2u);
}

TEST(Sweep, RequireDetectionSkipsUninformedPoints) {
  std::vector<sim::EpisodeRecord> eps(2);
  eps[0].trajectories.assign(1, std::vector<Vec2>(35));
  eps[0].detections = {{12, 0, 0.0, 0.0}};
  eps[1].trajectories.assign(1, std::vector<Vec2>(35));
  const auto points = evaluation_points(eps, 10, 10, 0, true);
  ASSERT_EQ(points.size(), 1u);
  EXPECT_EQ(points[0], (std::pair<std::size_t, int>{0, 20}));
}

TEST(Sweep, SingleHorizonMatchesDirectMetrics) {
  const sim::MapSpec map = sim::generate_map(sim::MapProfile::kOpen, 3);
  sim::EpisodeConfig ec;
  ec.agents = 2;
  const auto episodes = sim::generate_dataset(map, ec, 2, 5);
  ModelConfig mc = testing::tiny_model_config(2, 8);
  mc.map_size = map.size;
  const DiffusionTracker model(mc, 4);
  EvalOptions opt;
  opt.n_samples = 4;
  opt.point_stride = 40;
  opt.max_points = 3;
  opt.constraints.grad_steps = 0;
  const auto points = sample_points(model, episodes, opt);
  ASSERT_EQ(points.size(), 3u);
  const EvalReport report = score_points(points, episodes, {4, 8}, map.frame(), &map);
  EXPECT_EQ(report.n_points, 3);

  double sum = 0.0, sum_min = 0.0;
  for (const auto& p : points) {
    const auto& ep = *std::find_if(episodes.begin(), episodes.end(),
                                   [&](const auto& e) { return e.episode_id == p.episode_id; });
    TrajectorySlate truth(2, 8);
    for (int a = 0; a < 2; ++a)
      for (int t = 0; t < 8; ++t)
        truth.set_state(a, t, {ep.trajectories[a][p.t_now + t][0] / map.size,
                               ep.trajectories[a][p.t_now + t][1] / map.size});
    std::vector<TrajectorySlate> scaled;
    for (const auto& s : p.samples) scaled.push_back(to_unit_scale(s));
    sum += ade_loop(scaled, truth);
    sum_min += min_ade_loop(scaled, truth);
  }
  EXPECT_NEAR(report.at(8).ade, sum / 3, 1e-12);
  EXPECT_NEAR(report.at(8).min_ade, sum_min / 3, 1e-12);
  EXPECT_LE(report.at(4).min_ade, report.at(4).ade);
  ASSERT_TRUE(report.collision_rate.has_value());
  EXPECT_THROW(score_points(points, episodes, {9}, map.frame()), RangeError);
  EXPECT_THROW(report.at(5), RangeError);
}

}  // namespace
}  // namespace difftrack
