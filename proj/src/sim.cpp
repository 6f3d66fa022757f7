#include "difftrack/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>

#include "difftrack/errors.hpp"
#include "difftrack/rng.hpp"

namespace difftrack::sim {

namespace {

double distance(Vec2 a, Vec2 b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

struct ProfileParams {
  int mountains;
  double min_radius;
  double max_radius;
  int hideouts;
  int rendezvous;
};

ProfileParams profile_params(MapProfile profile) {
  switch (profile) {
    case MapProfile::kPrisoner: return {18, 60.0, 170.0, 6, 3};
    case MapProfile::kSmuggler: return {6, 50.0, 120.0, 6, 3};
    case MapProfile::kOpen: return {0, 0.0, 0.0, 6, 3};
    case MapProfile::kDense: return {60, 50.0, 110.0, 6, 3};
  }
  return {0, 0.0, 0.0, 6, 3};
}

}  // namespace

double MapSpec::visibility_at(Vec2 p) const {
  const int n = visibility_resolution;
  auto index = [&](double v) { return std::clamp(static_cast<int>(v / size * n), 0, n - 1); };
  return visibility[static_cast<std::size_t>(index(p[1])) * n + index(p[0])];
}

bool MapSpec::in_obstacle(Vec2 p) const {
  return std::any_of(obstacles.begin(), obstacles.end(),
                     [&](const Obstacle& o) { return distance(p, o.center) < o.radius; });
}

void MapSpec::validate() const {
  if (!(size > 0.0)) throw DataError("map " + id + ": size must be positive");
  if (visibility_resolution <= 0 ||
      visibility.size() != static_cast<std::size_t>(visibility_resolution) * visibility_resolution) {
    throw DataError("map " + id + ": visibility grid does not cover the map");
  }
  for (double v : visibility) {
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("map " + id + ": visibility outside [0, 1]");
  }
  for (const Obstacle& o : obstacles) {
    if (o.radius < 0.0) throw DataError("map " + id + ": negative obstacle radius");
  }
  auto check_points = [&](const std::vector<Vec2>& points, const char* what) {
    for (const Vec2& p : points) {
      if (in_obstacle(p) || p[0] < 0 || p[1] < 0 || p[0] > size || p[1] > size) {
        throw DataError("map " + id + ": " + what + " inside an obstacle or off the map");
      }
    }
  };
  check_points(hideouts, "hideout");
  check_points(rendezvous_points, "rendezvous point");
}

MapProfile parse_map_profile(const std::string& name) {
  if (name == "prisoner") return MapProfile::kPrisoner;
  if (name == "smuggler") return MapProfile::kSmuggler;
  if (name == "open") return MapProfile::kOpen;
  if (name == "dense") return MapProfile::kDense;
  throw ConfigError("map.profile", "unknown map profile '" + name + "'");
}

std::string to_string(MapProfile profile) {
  switch (profile) {
    case MapProfile::kPrisoner: return "prisoner";
    case MapProfile::kSmuggler: return "smuggler";
    case MapProfile::kOpen: return "open";
    case MapProfile::kDense: return "dense";
  }
  return "unknown";
}

MapSpec generate_map(MapProfile profile, std::uint64_t seed) {
  const ProfileParams pp = profile_params(profile);
  Rng rng(seed);
  MapSpec map;
  map.id = to_string(profile) + "-" + std::to_string(seed);
  const double size = map.size;
  map.start_center = {rng.uniform(0.15, 0.35) * size, rng.uniform(0.15, 0.35) * size};

  const double keep_clear = map.start_spread + 60.0;
  int attempts = 0;
  while (static_cast<int>(map.obstacles.size()) < pp.mountains && attempts++ < 100000) {
    Obstacle o{{rng.uniform(0.0, size), rng.uniform(0.0, size)}, rng.uniform(pp.min_radius, pp.max_radius)};
    if (distance(o.center, map.start_center) < o.radius + keep_clear) continue;
    map.obstacles.push_back(o);
  }

  // Smooth visibility: normalized sum of random Gaussian bumps.
  const int n = map.visibility_resolution;
  struct Bump {
    Vec2 c;
    double width;
    double amp;
  };
  std::vector<Bump> bumps;
  for (int b = 0; b < 10; ++b) {
    bumps.push_back({{rng.uniform(0.0, size), rng.uniform(0.0, size)}, rng.uniform(150.0, 500.0),
                     rng.uniform(-1.0, 1.0)});
  }
  map.visibility.resize(static_cast<std::size_t>(n) * n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const Vec2 p{(x + 0.5) * size / n, (y + 0.5) * size / n};
      double v = 0.0;
      for (const Bump& b : bumps) {
        const double d = distance(p, b.c) / b.width;
        v += b.amp * std::exp(-0.5 * d * d);
      }
      map.visibility[static_cast<std::size_t>(y) * n + x] = v;
    }
  }
  const auto [lo, hi] = std::minmax_element(map.visibility.begin(), map.visibility.end());
  const double vmin = *lo, span = std::max(*hi - *lo, 1e-12);
  for (double& v : map.visibility) v = std::clamp((v - vmin) / span, 0.0, 1.0);

  // Points of interest are drawn from cells reachable from the start area.
  const WorldGrid world(map);
  const GridMap& grid = world.grid();
  std::vector<std::uint8_t> reach(grid.blocked.size(), 0);
  std::vector<Cell> stack{world.nearest_free(map.start_center)};
  reach[grid.index(stack[0])] = 1;
  while (!stack.empty()) {
    const Cell c = stack.back();
    stack.pop_back();
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const Cell nb{c.x + dx, c.y + dy};
        if ((dx == 0 && dy == 0) || !grid.free(nb) || reach[grid.index(nb)]) continue;
        if (dx != 0 && dy != 0 && (!grid.free({c.x + dx, c.y}) || !grid.free({c.x, c.y + dy}))) continue;
        reach[grid.index(nb)] = 1;
        stack.push_back(nb);
      }
    }
  }
  auto draw = [&](double min_from_start, const std::vector<Vec2>& others, double min_gap) {
    for (int tries = 0; tries < 100000; ++tries) {
      const Cell c{static_cast<int>(rng.uniform_int(0, grid.width - 1)),
                   static_cast<int>(rng.uniform_int(0, grid.height - 1))};
      if (!reach[grid.index(c)]) continue;
      const Vec2 p = world.center(c);
      if (distance(p, map.start_center) < min_from_start) continue;
      if (std::any_of(others.begin(), others.end(), [&](Vec2 o) { return distance(o, p) < min_gap; })) continue;
      return p;
    }
    throw Error("map generation could not place a point of interest");
  };
  for (int h = 0; h < pp.hideouts; ++h) map.hideouts.push_back(draw(0.45 * size, map.hideouts, 300.0));
  for (int r = 0; r < pp.rendezvous; ++r) {
    map.rendezvous_points.push_back(draw(0.2 * size, map.rendezvous_points, 200.0));
  }
  map.validate();
  return map;
}

// --- planning grid -----------------------------------------------------------

GridMap::GridMap(int w, int h)
    : width(w), height(h), blocked(static_cast<std::size_t>(w) * h, 0), visibility(blocked.size(), 0.0) {}

double step_cost(const GridMap& grid, Cell from, Cell to, double visibility_weight) {
  const double len = (from.x != to.x && from.y != to.y) ? std::sqrt(2.0) : 1.0;
  return len + visibility_weight * grid.visibility[grid.index(to)];
}

std::vector<Cell> a_star_path(const GridMap& grid, Cell start, Cell goal, double visibility_weight) {
  if (!grid.free(start) || !grid.free(goal)) {
    throw PreconditionError("a_star_path: start or goal is blocked or off the grid");
  }
  const std::size_t n = grid.blocked.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> g(n, inf);
  std::vector<int> parent(n, -1);
  std::vector<std::uint8_t> closed(n, 0);
  auto heuristic = [&](Cell c) {
    const double dx = std::abs(c.x - goal.x), dy = std::abs(c.y - goal.y);
    return std::max(dx, dy) + (std::sqrt(2.0) - 1.0) * std::min(dx, dy);
  };
  // (f, -g, index): ties prefer deeper nodes, then lower indices.
  using Entry = std::tuple<double, double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  const std::size_t s = grid.index(start), t = grid.index(goal);
  g[s] = 0.0;
  open.emplace(heuristic(start), 0.0, s);
  while (!open.empty()) {
    const auto [f, neg_g, idx] = open.top();
    open.pop();
    if (closed[idx]) continue;
    closed[idx] = 1;
    if (idx == t) break;
    const Cell c{static_cast<int>(idx % grid.width), static_cast<int>(idx / grid.width)};
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const Cell nb{c.x + dx, c.y + dy};
        if (!grid.free(nb)) continue;
        if (dx != 0 && dy != 0 && (!grid.free({c.x + dx, c.y}) || !grid.free({c.x, c.y + dy}))) continue;
        const std::size_t ni = grid.index(nb);
        if (closed[ni]) continue;
        const double cand = g[idx] + step_cost(grid, c, nb, visibility_weight);
        if (cand < g[ni]) {
          g[ni] = cand;
          parent[ni] = static_cast<int>(idx);
          open.emplace(cand + heuristic(nb), -cand, ni);
        }
      }
    }
  }
  if (!closed[t]) {
    throw UnreachableError("no path from (" + std::to_string(start.x) + ", " + std::to_string(start.y) +
                           ") to (" + std::to_string(goal.x) + ", " + std::to_string(goal.y) + ")");
  }
  std::vector<Cell> path;
  for (int idx = static_cast<int>(t); idx != -1; idx = parent[static_cast<std::size_t>(idx)]) {
    path.push_back({idx % grid.width, idx / grid.width});
  }
  std::reverse(path.begin(), path.end());
  return path;
}

double path_cost(const GridMap& grid, const std::vector<Cell>& path, double visibility_weight) {
  double cost = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) cost += step_cost(grid, path[i - 1], path[i], visibility_weight);
  return cost;
}

WorldGrid::WorldGrid(const MapSpec& map) {
  const int n = static_cast<int>(std::ceil(map.size / kCellSize));
  grid_ = GridMap(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) grid_.visibility[grid_.index({x, y})] = map.visibility_at(center({x, y}));
  }
  for (const Obstacle& o : map.obstacles) {
    const double reach = o.radius + kClearance;
    const int x0 = std::max(0, static_cast<int>(std::floor((o.center[0] - reach) / kCellSize)));
    const int x1 = std::min(n - 1, static_cast<int>(std::ceil((o.center[0] + reach) / kCellSize)));
    const int y0 = std::max(0, static_cast<int>(std::floor((o.center[1] - reach) / kCellSize)));
    const int y1 = std::min(n - 1, static_cast<int>(std::ceil((o.center[1] + reach) / kCellSize)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (distance(center({x, y}), o.center) < reach) grid_.blocked[grid_.index({x, y})] = 1;
      }
    }
  }
}

Cell WorldGrid::cell_of(Vec2 p) const {
  return {std::clamp(static_cast<int>(p[0] / kCellSize), 0, grid_.width - 1),
          std::clamp(static_cast<int>(p[1] / kCellSize), 0, grid_.height - 1)};
}

Vec2 WorldGrid::center(Cell c) const { return {(c.x + 0.5) * kCellSize, (c.y + 0.5) * kCellSize}; }

Cell WorldGrid::nearest_free(Vec2 p) const {
  const Cell origin = cell_of(p);
  const int limit = std::max(grid_.width, grid_.height);
  for (int ring = 0; ring < limit; ++ring) {
    Cell best{-1, -1};
    double best_d = std::numeric_limits<double>::infinity();
    for (int dy = -ring; dy <= ring; ++dy) {
      for (int dx = -ring; dx <= ring; ++dx) {
        if (std::max(std::abs(dx), std::abs(dy)) != ring) continue;
        const Cell c{origin.x + dx, origin.y + dy};
        if (!grid_.free(c)) continue;
        const double d = distance(center(c), p);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
    }
    if (best.x >= 0) return best;
  }
  throw UnreachableError("map has no free cell");
}

std::vector<Vec2> WorldGrid::a_star_path(Vec2 start, Vec2 goal, double visibility_weight) const {
  const std::vector<Cell> cells = sim::a_star_path(grid_, cell_of(start), cell_of(goal), visibility_weight);
  std::vector<Vec2> out;
  out.reserve(cells.size());
  for (Cell c : cells) out.push_back(center(c));
  return out;
}

// --- episodes ------------------------------------------------------------------

Behavior parse_behavior(const std::string& name) {
  if (name == "direct") return Behavior::kDirect;
  if (name == "meet-then-go") return Behavior::kMeetThenGo;
  if (name == "straight-line") return Behavior::kStraightLine;
  throw ConfigError("episode.behavior", "unknown behavior '" + name + "'");
}

std::string to_string(Behavior behavior) {
  switch (behavior) {
    case Behavior::kDirect: return "direct";
    case Behavior::kMeetThenGo: return "meet-then-go";
    case Behavior::kStraightLine: return "straight-line";
  }
  return "unknown";
}

double EpisodeRecord::realized_detection_rate() const {
  const double states = static_cast<double>(agents()) * length();
  return states == 0.0 ? 0.0 : static_cast<double>(detections.size()) / states;
}

double walking_stride(double max_speed) { return max_speed - std::sqrt(2.0); }

std::vector<Vec2> walk_polyline(const std::vector<Vec2>& polyline, double stride) {
  if (polyline.empty()) return {};
  std::vector<Vec2> out{polyline.front()};
  double carried = 0.0;  // arc length already walked past the last emitted point
  for (std::size_t i = 1; i < polyline.size(); ++i) {
    const Vec2 a = polyline[i - 1], b = polyline[i];
    const double len = distance(a, b);
    double s = stride - carried;
    while (s <= len + 1e-12) {
      const double f = len > 0.0 ? s / len : 1.0;
      out.push_back({a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])});
      s += stride;
    }
    carried = len - (s - stride);
  }
  if (distance(out.back(), polyline.back()) > 1e-9) out.push_back(polyline.back());
  return out;
}

namespace {

std::vector<Vec2> rounded(const std::vector<Vec2>& points) {
  std::vector<Vec2> out;
  out.reserve(points.size());
  for (const Vec2& p : points) out.push_back({std::round(p[0]), std::round(p[1])});
  return out;
}

Vec2 random_start(const MapSpec& map, const WorldGrid& grid, Rng& rng) {
  const double angle = rng.uniform(0.0, 2.0 * M_PI);
  const double r = map.start_spread * std::sqrt(rng.uniform());
  return grid.center(grid.nearest_free({map.start_center[0] + r * std::cos(angle),
                                        map.start_center[1] + r * std::sin(angle)}));
}

bool segment_clear(const MapSpec& map, Vec2 a, Vec2 b) {
  for (const Obstacle& o : map.obstacles) {
    const double dx = b[0] - a[0], dy = b[1] - a[1];
    const double len2 = dx * dx + dy * dy;
    double f = len2 > 0 ? ((o.center[0] - a[0]) * dx + (o.center[1] - a[1]) * dy) / len2 : 0.0;
    f = std::clamp(f, 0.0, 1.0);
    if (distance({a[0] + f * dx, a[1] + f * dy}, o.center) < o.radius + 2.0) return false;
  }
  return true;
}

}  // namespace

EpisodeRecord generate_episode(const MapSpec& map, const WorldGrid& grid, const EpisodeConfig& config,
                               Rng& rng) {
  if (config.agents < 1) throw ConfigError("episode.agents", "must be >= 1");
  if (!(config.max_speed > std::sqrt(2.0))) throw ConfigError("episode.max_speed", "must exceed sqrt(2)");
  const double stride = walking_stride(config.max_speed);
  EpisodeRecord ep;
  ep.behavior = config.behavior;
  if (config.mixed_behaviors) ep.behavior = rng.bernoulli(0.5) ? Behavior::kMeetThenGo : Behavior::kDirect;
  ep.map_ref = map.id;
  ep.detection_rate = config.detection_rate;
  std::vector<std::vector<Vec2>> walks;

  if (ep.behavior == Behavior::kStraightLine) {
    const double margin = 0.05 * map.size;
    for (int a = 0; a < config.agents; ++a) {
      Vec2 from{}, to{};
      for (int tries = 0;; ++tries) {
        if (tries > 1000) throw UnreachableError("no obstacle-free straight segment found");
        from = {std::round(rng.uniform(margin, map.size - margin)), std::round(rng.uniform(margin, map.size - margin))};
        to = {std::round(rng.uniform(margin, map.size - margin)), std::round(rng.uniform(margin, map.size - margin))};
        if (segment_clear(map, from, to)) break;
      }
      walks.push_back(walk_polyline({from, to}, stride * rng.uniform(0.6, 1.0)));
    }
  } else {
    if (static_cast<int>(map.hideouts.size()) < config.agents) {
      throw PreconditionError("map " + map.id + " has fewer hideouts than agents");
    }
    std::vector<int> hideout_ids(map.hideouts.size());
    for (std::size_t i = 0; i < hideout_ids.size(); ++i) hideout_ids[i] = static_cast<int>(i);
    for (int a = 0; a < config.agents; ++a) {  // partial Fisher-Yates: goals without replacement
      const auto j = static_cast<std::size_t>(rng.uniform_int(a, static_cast<std::int64_t>(hideout_ids.size()) - 1));
      std::swap(hideout_ids[static_cast<std::size_t>(a)], hideout_ids[j]);
      ep.goal_ids.push_back(hideout_ids[static_cast<std::size_t>(a)]);
    }
    std::vector<Vec2> starts;
    for (int a = 0; a < config.agents; ++a) starts.push_back(random_start(map, grid, rng));

    if (ep.behavior == Behavior::kDirect) {
      for (int a = 0; a < config.agents; ++a) {
        walks.push_back(walk_polyline(grid.a_star_path(starts[a], map.hideouts[ep.goal_ids[a]], config.visibility_weight), stride));
      }
    } else {
      if (map.rendezvous_points.empty()) throw PreconditionError("map " + map.id + " has no rendezvous point");
      const Vec2 meet = map.rendezvous_points[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(map.rendezvous_points.size()) - 1))];
      std::vector<std::vector<Vec2>> first;
      std::size_t arrive = 0;
      for (int a = 0; a < config.agents; ++a) {
        first.push_back(walk_polyline(grid.a_star_path(starts[a], meet, config.visibility_weight), stride));
        arrive = std::max(arrive, first.back().size());
      }
      for (int a = 0; a < config.agents; ++a) {
        std::vector<Vec2> w = first[a];
        w.resize(arrive + static_cast<std::size_t>(config.meet_wait), meet);
        const auto second = walk_polyline(grid.a_star_path(meet, map.hideouts[ep.goal_ids[a]], config.visibility_weight), stride);
        w.insert(w.end(), second.begin() + 1, second.end());
        walks.push_back(std::move(w));
      }
    }
  }

  std::size_t length = 0;
  for (const auto& w : walks) length = std::max(length, w.size());
  if (config.length > 0) length = static_cast<std::size_t>(config.length);
  for (auto& w : walks) {
    std::vector<Vec2> r = rounded(w);
    r.resize(length, r.back());
    ep.trajectories.push_back(std::move(r));
  }
  sample_detections(ep, config.detection_rate, config.sampling, rng);
  return ep;
}

void sample_detections(EpisodeRecord& episode, double rate, DetectionSampling sampling, Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw PreconditionError("detection rate must lie in [0, 1]");
  episode.detections.clear();
  const int length = episode.length();
  for (int a = 0; a < episode.agents(); ++a) {
    std::vector<int> times;
    if (sampling == DetectionSampling::kExactCount) {
      const int count = static_cast<int>(std::lround(rate * length));
      std::vector<int> all(static_cast<std::size_t>(length));
      for (int t = 0; t < length; ++t) all[static_cast<std::size_t>(t)] = t;
      for (int k = 0; k < count; ++k) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(k, length - 1));
        std::swap(all[static_cast<std::size_t>(k)], all[j]);
        times.push_back(all[static_cast<std::size_t>(k)]);
      }
    } else {
      for (int t = 0; t < length; ++t) {
        if (rng.bernoulli(rate)) times.push_back(t);
      }
    }
    for (int t : times) {
      const Vec2 p = episode.trajectories[static_cast<std::size_t>(a)][static_cast<std::size_t>(t)];
      episode.detections.push_back({t, a, p[0], p[1]});
    }
  }
  std::sort(episode.detections.begin(), episode.detections.end(),
            [](const DetectionRecord& l, const DetectionRecord& r) { return std::tie(l.t, l.agent) < std::tie(r.t, r.agent); });
}

std::vector<EpisodeRecord> generate_dataset(const MapSpec& map, const EpisodeConfig& config, int count,
                                            std::uint64_t seed) {
  const WorldGrid grid(map);
  const Rng root(seed);
  std::vector<EpisodeRecord> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng = root.substream(static_cast<std::uint64_t>(i));
    EpisodeRecord ep = generate_episode(map, grid, config, rng);
    ep.episode_id = "ep-" + std::to_string(i);
    ep.seed = seed;
    out.push_back(std::move(ep));
  }
  return out;
}

std::vector<EpisodeRecord> generate_single_target_dataset(const MapSpec& map, int count,
                                                          double detection_rate, std::uint64_t seed) {
  if (!(detection_rate > 0.0 && detection_rate < 1.0)) {
    throw PreconditionError("single-target detection rate must lie in (0, 1)");
  }
  EpisodeConfig config;
  config.agents = 1;
  config.behavior = Behavior::kDirect;
  config.detection_rate = detection_rate;
  config.sampling = DetectionSampling::kBernoulli;
  return generate_dataset(map, config, count, seed);
}

double regime_detection_rate(const std::string& regime) {
  if (regime == "low" || regime == "prisoner-low") return 0.129;
  if (regime == "medium" || regime == "prisoner-medium") return 0.440;
  if (regime == "high" || regime == "prisoner-high") return 0.631;
  if (regime == "smuggler-low") return 0.138;
  if (regime == "smuggler-high") return 0.315;
  throw ConfigError("regime", "unknown detection regime '" + regime + "'");
}

EpisodeCheck check_episode(const EpisodeRecord& episode, const MapSpec& map, double max_speed) {
  EpisodeCheck check;
  for (const auto& traj : episode.trajectories) {
    for (std::size_t t = 0; t < traj.size(); ++t) {
      const Vec2 p = traj[t];
      if (map.in_obstacle(p) || p[0] < 0 || p[1] < 0 || p[0] > map.size || p[1] > map.size) ++check.obstacle_states;
      if (t > 0) {
        const double step = distance(traj[t - 1], p);
        check.max_step = std::max(check.max_step, step);
        if (step > max_speed) ++check.speed_violations;
      }
    }
  }
  for (const DetectionRecord& d : episode.detections) {
    if (d.agent < 0 || d.agent >= episode.agents() || d.t < 0 || d.t >= episode.length()) {
      ++check.detection_mismatches;
      continue;
    }
    const Vec2 p = episode.trajectories[static_cast<std::size_t>(d.agent)][static_cast<std::size_t>(d.t)];
    if (p[0] != d.x || p[1] != d.y) ++check.detection_mismatches;
  }
  return check;
}

}  // namespace difftrack::sim
