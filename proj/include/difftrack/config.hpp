#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "difftrack/io.hpp"
#include "difftrack/model.hpp"
#include "difftrack/sampler.hpp"
#include "difftrack/sim.hpp"
#include "difftrack/trainer.hpp"

namespace difftrack::config {

using io::Json;

struct MapConfig {
  std::string profile = "prisoner";
  std::uint64_t seed = 1;
  bool operator==(const MapConfig&) const = default;
};

struct DataConfig {
  std::string mode = "multi";  // multi | single
  std::string regime;          // single mode: named detection regime, overrides detection_rate
  int episodes = 500;
  int test_episodes = 50;
  sim::EpisodeConfig episode;
  bool operator==(const DataConfig&) const;
};

struct SampleConfig {
  int n_samples = 30;
  bool guided = true;
  bool inpaint_current = true;
  int point_stride = 10;
  int max_points = 20;
  bool require_detection = false;
  ConstraintSet constraints;  // obstacles come from the map at run time
  bool operator==(const SampleConfig&) const = default;
};

struct EvalConfig {
  std::vector<int> horizons;  // empty: the model horizon
  bool operator==(const EvalConfig&) const = default;
};

struct RenderConfig {
  int pixels = 512;
  int max_images = 10;
  bool operator==(const RenderConfig&) const = default;
};

/// Everything the command-line pipeline needs, one group per command.
struct RunConfig {
  std::uint64_t seed = 0;
  MapConfig map;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  SampleConfig sample;
  EvalConfig eval;
  RenderConfig render;
  bool operator==(const RunConfig&) const = default;
};

Json to_json(const DenoiserConfig& c);
Json to_json(const ScheduleConfig& c);
Json to_json(const ModelConfig& c);
Json to_json(const TrainConfig& c);
Json to_json(const sim::EpisodeConfig& c);
Json to_json(const ConstraintSet& c);
Json to_json(const RunConfig& c);

// Readers start from defaults, override the keys present and throw
// ConfigError naming the full key path on unknown keys or wrong types.
ModelConfig model_config_from_json(const Json& j, const std::string& path = "model");
TrainConfig train_config_from_json(const Json& j, const std::string& path = "train");
RunConfig run_config_from_json(const Json& j);

/// Reads a config file; an empty path gives the defaults.
RunConfig load_run_config(const std::string& path);

}  // namespace difftrack::config
