#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "difftrack/checkpoint.hpp"
#include "difftrack/config.hpp"
#include "difftrack/errors.hpp"
#include "difftrack/eval.hpp"
#include "difftrack/io.hpp"
#include "difftrack/render.hpp"
#include "difftrack/rng.hpp"
#include "difftrack/sim.hpp"
#include "difftrack/trainer.hpp"

namespace difftrack::cli {
namespace {

namespace fs = std::filesystem;
using io::Json;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct GenDataFlags {
  std::optional<std::string> mode;
  std::optional<int> agents;
  std::optional<int> episodes;
  std::optional<int> test_episodes;
  std::optional<double> detection_rate;
  std::optional<std::string> regime;
  std::optional<std::string> profile;
};

struct TrainFlags {
  std::string data;
  std::optional<std::string> mode;
  std::string resume;
  std::optional<int> max_steps;
};

struct SampleFlags {
  std::string data;
  std::string checkpoint;
  std::string split = "test";
  std::optional<int> n;
  CLI::Option* guided = nullptr;
  bool guided_value = true;
  CLI::Option* inpaint = nullptr;
  bool inpaint_value = true;
  std::optional<int> max_points;
};

struct EvalFlags {
  std::string data;
  std::string samples;
  std::string compare;
  std::string split = "test";
  std::vector<int> horizons;
};

struct RenderFlags {
  std::string data;
  std::string samples;
  std::string split = "test";
  std::optional<int> pixels;
  std::optional<int> max_images;
};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

fs::path or_default(const std::string& given, const fs::path& fallback) {
  return given.empty() ? fallback : fs::path(given);
}

config::RunConfig load(const Common& c) {
  config::RunConfig rc = config::load_run_config(c.config_path);
  if (c.seed) rc.seed = *c.seed;
  return rc;
}

/// Re-reads the config through the strict parser so overrides get the same
/// validation as file values.
config::RunConfig revalidate(const config::RunConfig& rc) {
  return config::run_config_from_json(config::to_json(rc));
}

/// Writes <command>.config.json into `dir` and returns the provenance stamp.
io::Provenance echo_config(const fs::path& dir, const std::string& command, const config::RunConfig& rc) {
  const Json cfg = config::to_json(rc);
  const io::Provenance p{io::config_hash(cfg), rc.seed};
  Json j;
  j["format_version"] = io::kFormatVersion;
  j["kind"] = "config";
  j["command"] = command;
  j["config"] = cfg;
  j["config_hash"] = p.config_hash;
  j["seed"] = p.seed;
  io::write_json(dir / (command + ".config.json"), j);
  return p;
}

std::vector<sim::EpisodeRecord> read_split(const fs::path& data, const std::string& split) {
  if (split != "train" && split != "test") throw ConfigError("split", "expected 'train' or 'test'");
  return io::read_episodes(data / (split + ".jsonl"));
}

int uniform_agents(const std::vector<sim::EpisodeRecord>& episodes, const fs::path& file) {
  if (episodes.empty()) throw DataError(file.string() + ": no episodes");
  const int agents = episodes.front().agents();
  for (const auto& ep : episodes) {
    if (ep.agents() != agents) {
      throw DataError(file.string() + ": episode " + ep.episode_id + " has " + std::to_string(ep.agents()) +
                      " agents, expected " + std::to_string(agents));
    }
  }
  return agents;
}

Json split_summary(const std::vector<sim::EpisodeRecord>& episodes, const sim::MapSpec& map, double max_speed) {
  double sum = 0.0, lo = 1.0, hi = 0.0;
  long steps = 0, violations = 0;
  for (const auto& ep : episodes) {
    const double r = ep.realized_detection_rate();
    sum += r;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    steps += ep.length();
    const sim::EpisodeCheck check = sim::check_episode(ep, map, max_speed);
    violations += check.obstacle_states + check.speed_violations + check.detection_mismatches;
  }
  const double n = static_cast<double>(std::max<std::size_t>(episodes.size(), 1));
  return {{"episodes", episodes.size()},    {"timesteps", steps},
          {"detection_rate_mean", sum / n}, {"detection_rate_min", episodes.empty() ? 0.0 : lo},
          {"detection_rate_max", hi},       {"integrity_violations", violations}};
}

int cmd_gen_data(const Common& c, const GenDataFlags& f, std::ostream& out) {
  config::RunConfig rc = load(c);
  if (f.mode) rc.data.mode = *f.mode;
  if (f.agents) rc.data.episode.agents = *f.agents;
  if (f.episodes) rc.data.episodes = *f.episodes;
  if (f.test_episodes) rc.data.test_episodes = *f.test_episodes;
  if (f.detection_rate) rc.data.episode.detection_rate = *f.detection_rate;
  if (f.regime) rc.data.regime = *f.regime;
  if (f.profile) rc.map.profile = *f.profile;
  const bool single = rc.data.mode == "single";
  if (single) rc.data.episode.agents = 1;
  if (!rc.data.regime.empty()) rc.data.episode.detection_rate = sim::regime_detection_rate(rc.data.regime);
  rc = revalidate(rc);
  if (rc.data.episodes < 1) throw ConfigError("data.episodes", "must be >= 1");
  if (rc.data.test_episodes < 0) throw ConfigError("data.test_episodes", "must be >= 0");

  const fs::path dir(c.out);
  fs::create_directories(dir);
  const io::Provenance prov = echo_config(dir, "gen-data", rc);

  const sim::MapSpec map = sim::generate_map(sim::parse_map_profile(rc.map.profile), rc.map.seed);
  io::write_map(dir / "map.json", map, {prov.config_hash, rc.map.seed});

  const Rng root(rc.seed);
  auto make = [&](int count, std::uint64_t stream, const std::string& prefix) {
    const std::uint64_t seed = root.substream(stream).engine()();
    auto eps = single ? sim::generate_single_target_dataset(map, count, rc.data.episode.detection_rate, seed)
                      : sim::generate_dataset(map, rc.data.episode, count, seed);
    for (std::size_t i = 0; i < eps.size(); ++i) {
      eps[i].episode_id = prefix + std::to_string(i);
      eps[i].config_hash = prov.config_hash;
      eps[i].seed = rc.seed;
    }
    return eps;
  };
  const auto train = make(rc.data.episodes, 0, "train-");
  const auto test = make(rc.data.test_episodes, 1, "test-");
  io::write_episodes(dir / "train.jsonl", train);
  io::write_episodes(dir / "test.jsonl", test);

  Json summary;
  summary["format_version"] = io::kFormatVersion;
  summary["kind"] = "dataset-summary";
  summary["mode"] = rc.data.mode;
  summary["agents"] = rc.data.episode.agents;
  summary["declared_detection_rate"] = rc.data.episode.detection_rate;
  summary["train"] = split_summary(train, map, rc.data.episode.max_speed);
  summary["test"] = split_summary(test, map, rc.data.episode.max_speed);
  summary["config_hash"] = prov.config_hash;
  summary["seed"] = rc.seed;
  io::write_json(dir / "summary.json", summary);

  for (const char* split : {"train", "test"}) {
    const Json& s = summary[split];
    out << split << ": " << s["episodes"].get<std::size_t>() << " episodes, realized detection rate "
        << fixed(s["detection_rate_mean"].get<double>(), 4) << " (min " << fixed(s["detection_rate_min"].get<double>(), 4)
        << ", max " << fixed(s["detection_rate_max"].get<double>(), 4) << ", declared "
        << fixed(rc.data.episode.detection_rate, 4) << ")\n";
  }
  return 0;
}

/// Keeps the loss records logged before `step` so a resumed run continues the log.
std::vector<std::string> loss_prefix(const fs::path& path, long step) {
  std::vector<std::string> kept;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("step")) continue;
    if (j["step"].get<long>() <= step) kept.push_back(line);
  }
  return kept;
}

int cmd_train(const Common& c, const TrainFlags& f, std::ostream& out) {
  config::RunConfig rc = load(c);
  const fs::path dir(c.out);
  const fs::path data = or_default(f.data, dir);
  const sim::MapSpec map = io::read_map(data / "map.json");
  const auto episodes = io::read_episodes(data / "train.jsonl");
  const int agents = uniform_agents(episodes, data / "train.jsonl");

  if (f.mode) {
    try {
      rc.model.mode = parse_tracking_mode(*f.mode);
    } catch (const ConfigError&) {
      throw ConfigError("--mode", "expected single, multi-known-origin or multi-unknown-origin");
    }
  }
  if ((rc.model.mode == TrackingMode::kSingleTarget) != (agents == 1)) {
    throw ConfigError("model.mode", to_string(rc.model.mode) + " does not fit a dataset with " +
                                        std::to_string(agents) + " agents");
  }
  rc.model.agents = agents;
  rc.model.map_size = map.size;
  rc.train.seed = rc.seed;
  if (f.max_steps) rc.train.max_steps = *f.max_steps;
  rc = revalidate(rc);

  fs::create_directories(dir);
  const io::Provenance prov = echo_config(dir, "train", rc);
  DiffusionTracker model(rc.model, rc.seed);
  Trainer trainer(model, rc.train);
  std::vector<std::string> log_lines;
  if (!f.resume.empty()) {
    resume_from_checkpoint(read_checkpoint(f.resume), model, trainer);
    log_lines = loss_prefix(dir / "loss.jsonl", trainer.step());
    out << "resumed at step " << trainer.step() << " from " << f.resume << "\n";
  }
  std::ofstream log(dir / "loss.jsonl", std::ios::trunc);
  if (!log) throw IoError("cannot write " + (dir / "loss.jsonl").string());
  for (const std::string& line : log_lines) log << line << '\n';

  trainer.fit(episodes, [&](const StepRecord& r) {
    Json j;
    j["format_version"] = io::kFormatVersion;
    j["kind"] = "loss";
    j["step"] = r.step;
    j["epoch"] = r.epoch;
    j["loss"] = r.loss;
    j["wall_seconds"] = r.wall_seconds;
    j["config_hash"] = prov.config_hash;
    j["seed"] = prov.seed;
    log << j.dump() << '\n' << std::flush;
    if (rc.train.checkpoint_every > 0 && r.step % rc.train.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "ckpt-%07ld.ckpt", r.step);
      write_checkpoint(dir / name, make_checkpoint(model, &trainer, prov.config_hash, prov.seed));
    }
    if (r.step % 50 == 0) out << "step " << r.step << " epoch " << r.epoch << " loss " << fixed(r.loss, 5) << "\n";
  });
  write_checkpoint(dir / "final.ckpt", make_checkpoint(model, &trainer, prov.config_hash, prov.seed));
  out << "wrote " << (dir / "final.ckpt").string() << " after " << trainer.step() << " steps ("
      << to_string(rc.model.mode) << ")\n";
  return 0;
}

int cmd_sample(const Common& c, const SampleFlags& f, std::ostream& out) {
  config::RunConfig rc = load(c);
  const fs::path dir(c.out);
  const fs::path data = or_default(f.data, dir);
  const fs::path ckpt_path = or_default(f.checkpoint, dir / "final.ckpt");
  const Checkpoint ckpt = read_checkpoint(ckpt_path);
  const sim::MapSpec map = io::read_map(data / "map.json");
  const auto episodes = read_split(data, f.split);
  const int agents = uniform_agents(episodes, data / (f.split + ".jsonl"));
  if (ckpt.model.agents != agents) {
    throw VersionError(ckpt_path.string() + " was trained for " + std::to_string(ckpt.model.agents) +
                       " agents, dataset has " + std::to_string(agents));
  }
  if (ckpt.model.map_size != map.size) throw VersionError(ckpt_path.string() + " was trained on a different map size");

  rc.model = ckpt.model;
  if (f.n) rc.sample.n_samples = *f.n;
  if (f.guided->count() > 0) rc.sample.guided = f.guided_value;
  if (f.inpaint->count() > 0) rc.sample.inpaint_current = f.inpaint_value;
  if (f.max_points) rc.sample.max_points = *f.max_points;
  rc = revalidate(rc);

  fs::create_directories(dir);
  const io::Provenance prov = echo_config(dir, "sample", rc);
  const DiffusionTracker model = model_from_checkpoint(ckpt, ckpt.ema.has_value());
  EvalOptions opt;
  opt.n_samples = rc.sample.n_samples;
  opt.point_stride = rc.sample.point_stride;
  opt.max_points = rc.sample.max_points;
  opt.require_detection = rc.sample.require_detection;
  opt.inpaint_current = rc.sample.inpaint_current;
  opt.constraints = rc.sample.constraints;
  if (rc.sample.guided) {
    opt.constraints.obstacles = normalized_obstacles(map);
  } else {
    opt.constraints.grad_steps = 0;
  }
  opt.seed = rc.seed;
  const auto points = sample_points(model, episodes, opt);
  io::write_samples(dir / "samples.jsonl", points, prov);
  const auto pinned = std::count_if(points.begin(), points.end(), [](const PointSamples& p) { return p.inpainted; });
  out << "wrote " << points.size() << " points x " << opt.n_samples << " samples ("
      << (opt.constraints.enabled() ? "guided" : "unguided") << ", " << pinned << " inpainted) to "
      << (dir / "samples.jsonl").string() << "\n";
  return 0;
}

int cmd_eval(const Common& c, const EvalFlags& f, std::ostream& out) {
  config::RunConfig rc = load(c);
  if (!f.horizons.empty()) rc.eval.horizons = f.horizons;
  rc = revalidate(rc);
  const fs::path dir(c.out);
  const fs::path data = or_default(f.data, dir);
  const fs::path samples_path = or_default(f.samples, dir / "samples.jsonl");
  const sim::MapSpec map = io::read_map(data / "map.json");
  const auto episodes = read_split(data, f.split);
  const auto points = io::read_samples(samples_path);
  if (points.empty()) throw DataError(samples_path.string() + ": no sample records");

  fs::create_directories(dir);
  const io::Provenance prov = echo_config(dir, "eval", rc);
  EvalReport report = score_points(points, episodes, rc.eval.horizons, map.frame(), &map);
  report.config_hash = prov.config_hash;
  report.seed = prov.seed;
  Json j = io::report_to_json(report);
  j["samples"] = samples_path.string();
  j["guided"] = points.front().guided;
  if (!f.compare.empty()) {
    const auto other = io::read_samples(f.compare);
    const EvalReport other_report = score_points(other, episodes, rc.eval.horizons, map.frame(), &map);
    const double mine = report.collision_rate.value_or(0.0);
    const double theirs = other_report.collision_rate.value_or(0.0);
    j["comparison"] = {{"samples", f.compare},
                       {"guided", other.empty() ? false : other.front().guided},
                       {"collision_rate", theirs},
                       {"collision_reduction", theirs > 0.0 ? Json(1.0 - mine / theirs) : Json(nullptr)}};
  }
  io::write_json(dir / "report.json", j);
  {
    std::ofstream csv(dir / "report.csv");
    csv << io::report_to_csv(report);
    if (!csv) throw IoError("cannot write " + (dir / "report.csv").string());
  }

  out << "mode " << report.mode << ", " << report.n_points << " points x " << report.n_samples << " samples\n";
  out << "horizon      ade   min_ade  baseline\n";
  for (const HorizonStats& h : report.per_horizon) {
    char row[96];
    std::snprintf(row, sizeof row, "%7d %8.4f  %8.4f  %8.4f\n", h.horizon, h.ade, h.min_ade, h.baseline_ade);
    out << row;
  }
  if (report.collision_rate) out << "collision rate " << fixed(*report.collision_rate, 4) << "\n";
  if (j.contains("comparison")) {
    out << "compared collision rate " << fixed(j["comparison"]["collision_rate"].get<double>(), 4);
    if (!j["comparison"]["collision_reduction"].is_null()) {
      out << ", reduction " << fixed(100.0 * j["comparison"]["collision_reduction"].get<double>(), 1) << "%";
    }
    out << "\n";
  }
  return 0;
}

int cmd_render(const Common& c, const RenderFlags& f, std::ostream& out) {
  config::RunConfig rc = load(c);
  if (f.pixels) rc.render.pixels = *f.pixels;
  if (f.max_images) rc.render.max_images = *f.max_images;
  rc = revalidate(rc);
  if (rc.render.pixels < 16) throw ConfigError("render.pixels", "must be >= 16");
  const fs::path dir(c.out);
  const fs::path data = or_default(f.data, dir);
  const sim::MapSpec map = io::read_map(data / "map.json");
  fs::create_directories(dir);
  echo_config(dir, "render", rc);
  render::write_png(dir / "map.png", render::draw_map(map, rc.render.pixels));
  int written = 1;

  const fs::path samples_path = or_default(f.samples, dir / "samples.jsonl");
  if (!f.samples.empty() || fs::exists(samples_path)) {
    const auto episodes = read_split(data, f.split);
    const auto points = io::read_samples(samples_path);
    for (std::size_t p = 0; p < points.size() && static_cast<int>(p) < rc.render.max_images; ++p) {
      const PointSamples& ps = points[p];
      const auto it = std::find_if(episodes.begin(), episodes.end(),
                                   [&](const sim::EpisodeRecord& e) { return e.episode_id == ps.episode_id; });
      if (it == episodes.end()) throw DataError(samples_path.string() + ": unknown episode " + ps.episode_id);
      const int horizon = ps.samples.empty() ? 0 : ps.samples.front().horizon();
      const render::Image img = render::draw_scene(map, *it, ps.t_now, horizon, ps.samples, rc.render.pixels);
      render::write_png(dir / (ps.episode_id + "-t" + std::to_string(ps.t_now) + ".png"), img);
      ++written;
    }
  }
  out << "wrote " << written << " image" << (written == 1 ? "" : "s") << " to " << dir.string() << "\n";
  return 0;
}

int exit_code(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const IoError*>(&e) != nullptr) return 3;
  if (dynamic_cast<const DataError*>(&e) != nullptr) return 4;
  if (dynamic_cast<const VersionError*>(&e) != nullptr) return 5;
  return 1;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-agent trajectory tracking with diffusion models", "difftrack"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON run config; missing keys take defaults")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Root seed, overrides the config");
    sub->add_option("--out", common.out, "Output directory")->required();
  };

  GenDataFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a map and train/test episode files");
  add_common(gen_cmd);
  gen_cmd->add_option("--mode", gen.mode, "multi or single")->check(CLI::IsMember({"multi", "single"}));
  gen_cmd->add_option("--agents", gen.agents, "Agents per episode (multi mode)");
  gen_cmd->add_option("--episodes", gen.episodes, "Training episodes");
  gen_cmd->add_option("--test-episodes", gen.test_episodes, "Held-out episodes");
  gen_cmd->add_option("--detection-rate", gen.detection_rate, "Fraction of timesteps with a detection");
  gen_cmd->add_option("--regime", gen.regime, "Named detection regime (low, medium, high, smuggler-low, ...)");
  gen_cmd->add_option("--profile", gen.profile, "Map profile: prisoner, smuggler, open or dense");

  TrainFlags train;
  auto* train_cmd = app.add_subcommand("train", "Train a denoiser on a generated dataset");
  add_common(train_cmd);
  train_cmd->add_option("--data", train.data, "Dataset directory (default: --out)");
  train_cmd->add_option("--mode", train.mode, "single, multi-known-origin or multi-unknown-origin");
  train_cmd->add_option("--resume", train.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  train_cmd->add_option("--steps", train.max_steps, "Stop after this many updates");

  SampleFlags sample;
  auto* sample_cmd = app.add_subcommand("sample", "Draw Monte-Carlo trajectory samples at evaluation points");
  add_common(sample_cmd);
  sample_cmd->add_option("--data", sample.data, "Dataset directory (default: --out)");
  sample_cmd->add_option("--checkpoint", sample.checkpoint, "Checkpoint (default: <out>/final.ckpt)");
  sample_cmd->add_option("--split", sample.split, "Episode file to sample from")->check(CLI::IsMember({"train", "test"}));
  sample_cmd->add_option("--n", sample.n, "Samples per evaluation point");
  sample.guided = sample_cmd->add_flag("--guided,!--no-guided", sample.guided_value, "Constraint guidance");
  sample.inpaint = sample_cmd->add_flag("--inpaint-current,!--no-inpaint-current", sample.inpaint_value,
                                        "Pin detections made at the current timestep");
  sample_cmd->add_option("--max-points", sample.max_points, "Evaluation points (0: all)");

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score samples against ground truth");
  add_common(eval_cmd);
  eval_cmd->add_option("--data", eval.data, "Dataset directory (default: --out)");
  eval_cmd->add_option("--samples", eval.samples, "Sample file (default: <out>/samples.jsonl)");
  eval_cmd->add_option("--compare", eval.compare, "Second sample file for a collision-rate comparison")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", eval.split, "Episode file the samples came from")->check(CLI::IsMember({"train", "test"}));
  eval_cmd->add_option("--horizons", eval.horizons, "Horizons to report")->delimiter(',');

  RenderFlags rend;
  auto* render_cmd = app.add_subcommand("render", "Draw the map and sampled hypotheses to PNG files");
  add_common(render_cmd);
  render_cmd->add_option("--data", rend.data, "Dataset directory (default: --out)");
  render_cmd->add_option("--samples", rend.samples, "Sample file (default: <out>/samples.jsonl if present)");
  render_cmd->add_option("--split", rend.split, "Episode file the samples came from")->check(CLI::IsMember({"train", "test"}));
  render_cmd->add_option("--pixels", rend.pixels, "Image side length");
  render_cmd->add_option("--max-images", rend.max_images, "Evaluation points to draw");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(common, gen, out);
    if (train_cmd->parsed()) return cmd_train(common, train, out);
    if (sample_cmd->parsed()) return cmd_sample(common, sample, out);
    if (eval_cmd->parsed()) return cmd_eval(common, eval, out);
    if (render_cmd->parsed()) return cmd_render(common, rend, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace difftrack::cli
