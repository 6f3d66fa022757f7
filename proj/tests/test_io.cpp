#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "difftrack/config.hpp"
#include "difftrack/errors.hpp"
#include "difftrack/io.hpp"
#include "difftrack/render.hpp"
#include "difftrack/rng.hpp"
#include "difftrack/sim.hpp"

namespace difftrack {
namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("difftrack_io_" + name);
}

TEST(Hash, KnownFnvValues) {
  EXPECT_EQ(io::fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(io::fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  const io::Json a = {{"x", 1}, {"y", "z"}};
  EXPECT_EQ(io::config_hash(a).size(), 16u);
  EXPECT_EQ(io::config_hash(a), io::config_hash(io::Json::parse(a.dump())));
  EXPECT_NE(io::config_hash(a), io::config_hash(io::Json{{"x", 2}, {"y", "z"}}));
}

TEST(Version, MajorMismatchRejected) {
  EXPECT_NO_THROW(io::check_format_version({{"format_version", "1.3"}}, "x"));
  EXPECT_THROW(io::check_format_version({{"format_version", "2.0"}}, "x"), VersionError);
  EXPECT_THROW(io::check_format_version(io::Json::object(), "x"), VersionError);
}

TEST(EpisodeFiles, JsonlRoundTrip) {
  const sim::MapSpec map = sim::generate_map(sim::MapProfile::kSmuggler, 2);
  sim::EpisodeConfig ec;
  ec.mixed_behaviors = true;
  const auto eps = sim::generate_dataset(map, ec, 4, 3);
  const auto path = temp_path("eps.jsonl");
  io::write_episodes(path, eps);
  EXPECT_EQ(io::read_episodes(path), eps);
  {
    std::ofstream out(path, std::ios::app);
    out << "{\"format_version\": \"1.0\", \"broken\": true}\n";
  }
  try {
    io::read_episodes(path);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":5"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

TEST(MapFiles, RoundTrip) {
  const sim::MapSpec map = sim::generate_map(sim::MapProfile::kPrisoner, 6);
  const auto path = temp_path("map.json");
  io::write_map(path, map, {"abcd", 6});
  EXPECT_EQ(io::read_map(path), map);
  std::filesystem::remove(path);
}

TEST(Samples, RoundTrip) {
  Rng rng(1);
  std::vector<PointSamples> points(2);
  points[0] = {"ep-0", 10, "multi-known-origin", true, true, {TrajectorySlate::standard_normal(2, 4, rng), TrajectorySlate::standard_normal(2, 4, rng)}};
  points[1] = {"ep-1", 0, "multi-known-origin", false, false, {TrajectorySlate::standard_normal(2, 4, rng)}};
  const auto path = temp_path("samples.jsonl");
  io::write_samples(path, points, {"h", 3});
  const auto back = io::read_samples(path);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].episode_id, points[i].episode_id);
    EXPECT_EQ(back[i].t_now, points[i].t_now);
    EXPECT_EQ(back[i].guided, points[i].guided);
    EXPECT_EQ(back[i].mode, points[i].mode);
    EXPECT_EQ(back[i].samples, points[i].samples);
  }
  std::filesystem::remove(path);
}

TEST(Config, DefaultsRoundTrip) {
  const config::RunConfig defaults;
  EXPECT_EQ(config::run_config_from_json(config::to_json(defaults)), defaults);
  EXPECT_EQ(config::load_run_config(""), defaults);
}

TEST(Config, UnknownKeyNamesPath) {
  try {
    config::run_config_from_json({{"model", {{"denoiser", {{"base_chanels", 8}}}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "model.denoiser.base_chanels");
  }
  EXPECT_THROW(config::run_config_from_json({{"train", {{"batch_size", "big"}}}}), ConfigError);
}

TEST(Config, ScheduleStepsScaleDefaults) {
  const auto c = config::run_config_from_json({{"model", {{"schedule", {{"num_steps", 50}}}}}});
  EXPECT_EQ(c.model.schedule, ScheduleConfig::scaled_default(50));
}

TEST(Report, CsvHasOneRowPerHorizon) {
  EvalReport r;
  r.mode = "known-origin";
  r.per_horizon = {{10, 0.1, 0.01, 0.05, 0.005, 0.2}, {20, 0.2, 0.02, 0.1, 0.01, 0.3}};
  const std::string csv = io::report_to_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "horizon,ade,ade_std_err,min_ade,min_ade_std_err,baseline_ade");
  const io::Json j = io::report_to_json(r);
  EXPECT_EQ(j.at("format_version"), io::kFormatVersion);
}

TEST(Render, WritesPng) {
  const sim::MapSpec map = sim::generate_map(sim::MapProfile::kPrisoner, 1);
  const render::Image img = render::draw_map(map, 64);
  EXPECT_EQ(img.width, 64);
  const auto path = temp_path("map.png");
  render::write_png(path, img);
  std::ifstream in(path, std::ios::binary);
  char sig[8];
  in.read(sig, 8);
  EXPECT_EQ(std::string(sig + 1, 3), "PNG");
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace difftrack
