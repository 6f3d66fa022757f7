#include "difftrack/config.hpp"

#include <set>

#include "difftrack/errors.hpp"

namespace difftrack::config {

namespace {

/// Reads known keys out of one JSON object and rejects the rest.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError(field(key), std::string("wrong type: ") + e.what());
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(field(key.c_str()), "unknown key");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

DenoiserConfig denoiser_from_json(const Json& j, const std::string& path) {
  DenoiserConfig c;
  Reader r(j, path);
  r.get("base_channels", c.base_channels);
  r.get("depth", c.depth);
  r.get("attention_heads", c.attention_heads);
  r.get("head_dim", c.head_dim);
  r.get("cond_dim", c.cond_dim);
  r.get("horizon", c.horizon);
  r.get("kernel_size", c.kernel_size);
  r.get("norm_groups", c.norm_groups);
  r.finish();
  return c;
}

ScheduleConfig schedule_from_json(const Json& j, const std::string& path) {
  ScheduleConfig c;
  Reader r(j, path);
  r.get("num_steps", c.num_steps);
  // The default range follows num_steps unless bounds are given explicitly.
  c = ScheduleConfig::scaled_default(c.num_steps);
  std::string kind = to_string(c.kind);
  r.get("kind", kind);
  try {
    c.kind = parse_schedule_kind(kind);
  } catch (const ConfigError&) {
    throw ConfigError(r.field("kind"), "unknown schedule kind '" + kind + "'");
  }
  r.get("beta_min", c.beta_min);
  r.get("beta_max", c.beta_max);
  r.finish();
  return c;
}

sim::EpisodeConfig episode_from_json(const Json& j, const std::string& path) {
  sim::EpisodeConfig c;
  Reader r(j, path);
  r.get("agents", c.agents);
  std::string behavior = c.mixed_behaviors ? "mixed" : sim::to_string(c.behavior);
  r.get("behavior", behavior);
  if (behavior == "mixed") {
    c.mixed_behaviors = true;
  } else {
    c.behavior = sim::parse_behavior(behavior);
  }
  r.get("detection_rate", c.detection_rate);
  std::string sampling = c.sampling == sim::DetectionSampling::kExactCount ? "exact" : "bernoulli";
  r.get("sampling", sampling);
  if (sampling == "exact") {
    c.sampling = sim::DetectionSampling::kExactCount;
  } else if (sampling == "bernoulli") {
    c.sampling = sim::DetectionSampling::kBernoulli;
  } else {
    throw ConfigError(r.field("sampling"), "expected 'exact' or 'bernoulli'");
  }
  r.get("visibility_weight", c.visibility_weight);
  r.get("max_speed", c.max_speed);
  r.get("meet_wait", c.meet_wait);
  r.get("length", c.length);
  r.finish();
  return c;
}

ConstraintSet constraints_from_json(Reader& r) {
  ConstraintSet c;
  r.get("motion_weight", c.motion_weight);
  r.get("obstacle_weight", c.obstacle_weight);
  r.get("margin", c.margin);
  r.get("grad_steps", c.grad_steps);
  r.get("step_size", c.step_size);
  return c;
}

}  // namespace

bool DataConfig::operator==(const DataConfig& o) const {
  return mode == o.mode && regime == o.regime && episodes == o.episodes && test_episodes == o.test_episodes &&
         to_json(episode) == to_json(o.episode);
}

Json to_json(const DenoiserConfig& c) {
  return {{"base_channels", c.base_channels}, {"depth", c.depth},         {"attention_heads", c.attention_heads},
          {"head_dim", c.head_dim},           {"cond_dim", c.cond_dim},   {"horizon", c.horizon},
          {"kernel_size", c.kernel_size},     {"norm_groups", c.norm_groups}};
}

Json to_json(const ScheduleConfig& c) {
  return {{"num_steps", c.num_steps}, {"kind", to_string(c.kind)}, {"beta_min", c.beta_min}, {"beta_max", c.beta_max}};
}

Json to_json(const ModelConfig& c) {
  return {{"mode", to_string(c.mode)},          {"agents", c.agents},     {"dt_normalizer", c.dt_normalizer},
          {"map_size", c.map_size},             {"denoiser", to_json(c.denoiser)}, {"schedule", to_json(c.schedule)}};
}

Json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"max_steps", c.max_steps},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"grad_clip", c.grad_clip},
          {"ema_decay", c.ema_decay ? Json(*c.ema_decay) : Json(nullptr)},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every}};
}

Json to_json(const sim::EpisodeConfig& c) {
  return {{"agents", c.agents},
          {"behavior", c.mixed_behaviors ? std::string("mixed") : sim::to_string(c.behavior)},
          {"detection_rate", c.detection_rate},
          {"sampling", c.sampling == sim::DetectionSampling::kExactCount ? "exact" : "bernoulli"},
          {"visibility_weight", c.visibility_weight},
          {"max_speed", c.max_speed},
          {"meet_wait", c.meet_wait},
          {"length", c.length}};
}

Json to_json(const ConstraintSet& c) {
  return {{"motion_weight", c.motion_weight},
          {"obstacle_weight", c.obstacle_weight},
          {"margin", c.margin},
          {"grad_steps", c.grad_steps},
          {"step_size", c.step_size}};
}

Json to_json(const RunConfig& c) {
  Json sample = {{"n_samples", c.sample.n_samples},
                 {"guided", c.sample.guided},
                 {"inpaint_current", c.sample.inpaint_current},
                 {"point_stride", c.sample.point_stride},
                 {"max_points", c.sample.max_points},
                 {"require_detection", c.sample.require_detection}};
  sample.update(to_json(c.sample.constraints));
  return {{"seed", c.seed},
          {"map", {{"profile", c.map.profile}, {"seed", c.map.seed}}},
          {"data",
           {{"mode", c.data.mode},
            {"regime", c.data.regime},
            {"episodes", c.data.episodes},
            {"test_episodes", c.data.test_episodes},
            {"episode", to_json(c.data.episode)}}},
          {"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"sample", std::move(sample)},
          {"eval", {{"horizons", c.eval.horizons}}},
          {"render", {{"pixels", c.render.pixels}, {"max_images", c.render.max_images}}}};
}

ModelConfig model_config_from_json(const Json& j, const std::string& path) {
  ModelConfig c;
  Reader r(j, path);
  std::string mode = to_string(c.mode);
  r.get("mode", mode);
  try {
    c.mode = parse_tracking_mode(mode);
  } catch (const ConfigError&) {
    throw ConfigError(r.field("mode"), "unknown tracking mode '" + mode + "'");
  }
  r.get("agents", c.agents);
  r.get("dt_normalizer", c.dt_normalizer);
  r.get("map_size", c.map_size);
  if (const Json* d = r.child("denoiser")) c.denoiser = denoiser_from_json(*d, r.field("denoiser"));
  if (const Json* s = r.child("schedule")) c.schedule = schedule_from_json(*s, r.field("schedule"));
  r.finish();
  return c;
}

TrainConfig train_config_from_json(const Json& j, const std::string& path) {
  TrainConfig c;
  Reader r(j, path);
  r.get("batch_size", c.batch_size);
  r.get("epochs", c.epochs);
  r.get("max_steps", c.max_steps);
  r.get("learning_rate", c.learning_rate);
  r.get("adam_beta1", c.adam_beta1);
  r.get("adam_beta2", c.adam_beta2);
  r.get("adam_eps", c.adam_eps);
  r.get("grad_clip", c.grad_clip);
  if (const Json* e = r.child("ema_decay"); e != nullptr && !e->is_null()) {
    if (!e->is_number()) throw ConfigError(r.field("ema_decay"), "expected a number or null");
    c.ema_decay = e->get<double>();
  }
  r.get("seed", c.seed);
  r.get("checkpoint_every", c.checkpoint_every);
  r.finish();
  return c;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  Reader r(j, "");
  r.get("seed", c.seed);
  if (const Json* m = r.child("map")) {
    Reader mr(*m, "map");
    mr.get("profile", c.map.profile);
    mr.get("seed", c.map.seed);
    mr.finish();
  }
  if (const Json* d = r.child("data")) {
    Reader dr(*d, "data");
    dr.get("mode", c.data.mode);
    dr.get("regime", c.data.regime);
    dr.get("episodes", c.data.episodes);
    dr.get("test_episodes", c.data.test_episodes);
    if (const Json* e = dr.child("episode")) c.data.episode = episode_from_json(*e, "data.episode");
    dr.finish();
  }
  if (const Json* m = r.child("model")) c.model = model_config_from_json(*m, "model");
  if (const Json* t = r.child("train")) c.train = train_config_from_json(*t, "train");
  if (const Json* s = r.child("sample")) {
    Reader sr(*s, "sample");
    sr.get("n_samples", c.sample.n_samples);
    sr.get("guided", c.sample.guided);
    sr.get("inpaint_current", c.sample.inpaint_current);
    sr.get("point_stride", c.sample.point_stride);
    sr.get("max_points", c.sample.max_points);
    sr.get("require_detection", c.sample.require_detection);
    c.sample.constraints = constraints_from_json(sr);
    sr.finish();
  }
  if (const Json* e = r.child("eval")) {
    Reader er(*e, "eval");
    er.get("horizons", c.eval.horizons);
    er.finish();
  }
  if (const Json* rd = r.child("render")) {
    Reader rr(*rd, "render");
    rr.get("pixels", c.render.pixels);
    rr.get("max_images", c.render.max_images);
    rr.finish();
  }
  r.finish();
  if (c.data.mode != "multi" && c.data.mode != "single") throw ConfigError("data.mode", "expected 'multi' or 'single'");
  c.model.validate();
  c.train.validate();
  c.sample.constraints.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return run_config_from_json(io::read_json(path));
}

}  // namespace difftrack::config
