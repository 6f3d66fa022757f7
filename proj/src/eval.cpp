#include "difftrack/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "difftrack/errors.hpp"
#include "difftrack/rng.hpp"

namespace difftrack {

namespace {

void require_samples(std::span<const TrajectorySlate> samples, const TrajectorySlate& truth) {
  if (samples.empty()) throw PreconditionError("metric needs at least one sample");
  for (const TrajectorySlate& s : samples) require_same_shape(s, truth, "metric sample");
}

double displacement_sum(const TrajectorySlate& sample, const TrajectorySlate& truth, double sum = 0.0) {
  for (int a = 0; a < truth.agents(); ++a) {
    for (int t = 0; t < truth.horizon(); ++t) {
      sum += std::hypot(sample.at(a, t, 0) - truth.at(a, t, 0), sample.at(a, t, 1) - truth.at(a, t, 1));
    }
  }
  return sum;
}

double slate_ade(const TrajectorySlate& sample, const TrajectorySlate& truth) {
  return displacement_sum(sample, truth) / (static_cast<double>(truth.agents()) * truth.horizon());
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_err(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

std::pair<std::size_t, std::size_t> count_collisions(std::span<const TrajectorySlate> samples,
                                                     const sim::MapSpec& map) {
  const MapFrame frame = map.frame();
  std::size_t states = 0, inside = 0;
  for (const TrajectorySlate& s : samples) {
    for (int a = 0; a < s.agents(); ++a) {
      for (int t = 0; t < s.horizon(); ++t, ++states) {
        if (map.in_obstacle({frame.to_world(s.at(a, t, 0)), frame.to_world(s.at(a, t, 1))})) ++inside;
      }
    }
  }
  return {inside, states};
}

}  // namespace

double ade(std::span<const TrajectorySlate> samples, const TrajectorySlate& truth) {
  require_samples(samples, truth);
  double sum = 0.0;
  for (const TrajectorySlate& s : samples) sum = displacement_sum(s, truth, sum);
  return sum / (static_cast<double>(samples.size()) * truth.agents() * truth.horizon());
}

double min_ade(std::span<const TrajectorySlate> samples, const TrajectorySlate& truth) {
  require_samples(samples, truth);
  double best = slate_ade(samples[0], truth);
  for (const TrajectorySlate& s : samples.subspan(1)) best = std::min(best, slate_ade(s, truth));
  return best;
}

double collision_rate(std::span<const TrajectorySlate> samples, const sim::MapSpec& map) {
  const auto [inside, states] = count_collisions(samples, map);
  return states == 0 ? 0.0 : static_cast<double>(inside) / static_cast<double>(states);
}

TrajectorySlate to_unit_scale(const TrajectorySlate& normalized) {
  TrajectorySlate out = normalized;
  for (double& v : out.values()) v = 0.5 * (v + 1.0);
  return out;
}

TrajectorySlate stationary_prediction(const DetectionHistory& history, int agents, int horizon) {
  TrajectorySlate out(agents, horizon);
  for (int a = 0; a < agents; ++a) {
    for (auto it = history.detections.rbegin(); it != history.detections.rend(); ++it) {
      if (it->agent_id && agents > 1 && *it->agent_id != a) continue;
      for (int t = 0; t < horizon; ++t) out.set_state(a, t, {it->x, it->y});
      break;
    }
  }
  return out;
}

InpaintMask current_detection_mask(const DetectionHistory& history, int agents) {
  InpaintMask mask;
  for (const Detection& d : history.detections) {
    if (d.dt != 0.0) continue;
    if (d.agent_id && *d.agent_id < agents) {
      mask.entries.push_back({*d.agent_id, 0, d.x, d.y});
    } else if (agents == 1) {
      mask.entries.push_back({0, 0, d.x, d.y});
    }
  }
  return mask;
}

const HorizonStats& EvalReport::at(int horizon) const {
  for (const HorizonStats& h : per_horizon) {
    if (h.horizon == horizon) return h;
  }
  throw RangeError("report has no entry for horizon " + std::to_string(horizon));
}

std::vector<std::pair<std::size_t, int>> evaluation_points(const std::vector<sim::EpisodeRecord>& episodes,
                                                           int window, int stride, int max_points,
                                                           bool require_detection) {
  if (stride <= 0) throw ConfigError("eval.point_stride", "must be positive");
  std::vector<std::pair<std::size_t, int>> points;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    int first = 0;
    if (require_detection) {
      first = std::numeric_limits<int>::max();
      for (const sim::DetectionRecord& d : episodes[e].detections) first = std::min(first, d.t);
    }
    for (int t = 0; t + window <= episodes[e].length(); t += stride) {
      if (t < first) continue;
      if (max_points > 0 && static_cast<int>(points.size()) >= max_points) return points;
      points.emplace_back(e, t);
    }
  }
  return points;
}

std::vector<CircleObstacle> normalized_obstacles(const sim::MapSpec& map) {
  const MapFrame frame = map.frame();
  std::vector<CircleObstacle> out;
  for (const sim::Obstacle& o : map.obstacles) {
    out.push_back({{frame.to_normalized(o.center[0]), frame.to_normalized(o.center[1])},
                   frame.length_to_normalized(o.radius)});
  }
  return out;
}

std::vector<PointSamples> sample_points(const DiffusionTracker& model, const std::vector<sim::EpisodeRecord>& episodes,
                                        const EvalOptions& options) {
  const int window = model.config().denoiser.horizon;
  const int agents = model.config().agents;
  if (options.n_samples < 1) throw ConfigError("eval.n_samples", "must be >= 1");
  const auto points = evaluation_points(episodes, window, options.point_stride, options.max_points,
                                        options.require_detection);
  if (points.empty()) throw DataError("no evaluation point fits the model horizon");
  const bool inpaint_ok = options.inpaint_current && model.config().mode != TrackingMode::kUnknownOrigin;
  const Rng root(options.seed);
  std::vector<PointSamples> out;
  for (std::size_t p = 0; p < points.size(); ++p) {
    const auto [e, t_now] = points[p];
    const sim::EpisodeRecord& ep = episodes[e];
    if (ep.agents() != agents) {
      throw DataError("episode " + ep.episode_id + " has " + std::to_string(ep.agents()) +
                      " agents, model expects " + std::to_string(agents));
    }
    const TrainingExample ex =
        make_training_example(ep, t_now, window, model.config().frame(), model.config().dt_normalizer);
    const InpaintMask mask = inpaint_ok ? current_detection_mask(ex.history, agents) : InpaintMask{};
    PointSamples ps;
    ps.episode_id = ep.episode_id;
    ps.t_now = t_now;
    ps.mode = to_string(model.config().mode);
    ps.guided = options.constraints.enabled();
    ps.inpainted = !mask.empty();
    ps.samples = monte_carlo_sample(model, model.condition(ex.history), options.constraints, mask, options.n_samples,
                                    root.substream(static_cast<std::uint64_t>(p)));
    out.push_back(std::move(ps));
  }
  return out;
}

EvalReport score_points(std::span<const PointSamples> points, const std::vector<sim::EpisodeRecord>& episodes,
                        std::vector<int> horizons, const MapFrame& frame, const sim::MapSpec* map) {
  if (points.empty() || points[0].samples.empty()) throw PreconditionError("score_points: no samples");
  const int window = points[0].samples[0].horizon();
  const int agents = points[0].samples[0].agents();
  if (horizons.empty()) horizons = {window};
  for (int h : horizons) {
    if (h < 1 || h > window) {
      throw RangeError("horizon " + std::to_string(h) + " outside the sampled horizon " + std::to_string(window));
    }
  }
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t e = 0; e < episodes.size(); ++e) by_id.emplace(episodes[e].episode_id, e);

  std::vector<std::vector<double>> ades(horizons.size()), mins(horizons.size()), bases(horizons.size());
  std::size_t states = 0, inside = 0;
  for (const PointSamples& ps : points) {
    const auto it = by_id.find(ps.episode_id);
    if (it == by_id.end()) throw DataError("samples refer to unknown episode " + ps.episode_id);
    const TrainingExample ex = make_training_example(episodes[it->second], ps.t_now, window, frame, 1.0);
    if (map != nullptr) {
      const auto [hit, total] = count_collisions(ps.samples, *map);
      inside += hit;
      states += total;
    }
    const TrajectorySlate baseline = stationary_prediction(ex.history, agents, window);
    for (std::size_t k = 0; k < horizons.size(); ++k) {
      const int h = horizons[k];
      std::vector<TrajectorySlate> cut;
      for (const TrajectorySlate& s : ps.samples) cut.push_back(to_unit_scale(s.truncated(h)));
      const TrajectorySlate truth = to_unit_scale(ex.future.truncated(h));
      ades[k].push_back(ade(cut, truth));
      mins[k].push_back(min_ade(cut, truth));
      const TrajectorySlate base = to_unit_scale(baseline.truncated(h));
      bases[k].push_back(ade(std::span<const TrajectorySlate>(&base, 1), truth));
    }
  }

  EvalReport report;
  report.mode = points[0].mode;
  report.n_samples = static_cast<int>(points[0].samples.size());
  report.n_points = static_cast<int>(points.size());
  for (std::size_t k = 0; k < horizons.size(); ++k) {
    report.per_horizon.push_back({horizons[k], mean(ades[k]), std_err(ades[k]), mean(mins[k]), std_err(mins[k]),
                                  mean(bases[k])});
  }
  if (map != nullptr && states > 0) report.collision_rate = static_cast<double>(inside) / static_cast<double>(states);
  return report;
}

EvalReport horizon_sweep(const DiffusionTracker& model, const std::vector<sim::EpisodeRecord>& episodes,
                         const EvalOptions& options, const sim::MapSpec* map) {
  for (int h : options.horizons) {
    if (h < 1 || h > model.config().denoiser.horizon) {
      throw RangeError("horizon " + std::to_string(h) + " outside the model horizon " +
                       std::to_string(model.config().denoiser.horizon));
    }
  }
  const std::vector<PointSamples> points = sample_points(model, episodes, options);
  EvalReport report = score_points(points, episodes, options.horizons, model.config().frame(), map);
  report.mode = to_string(model.config().mode);
  report.seed = options.seed;
  return report;
}

}  // namespace difftrack
