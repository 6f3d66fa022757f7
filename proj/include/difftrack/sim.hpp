#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "difftrack/slate.hpp"

namespace difftrack {
class Rng;
}

namespace difftrack::sim {

struct Obstacle {
  Vec2 center{};
  double radius = 0.0;

  bool operator==(const Obstacle&) const = default;
};

/// Square world with circular mountains, a coarse visibility field and the
/// points agents travel between. All coordinates are world units.
struct MapSpec {
  std::string id;
  double size = 2428.0;
  std::vector<Obstacle> obstacles;
  int visibility_resolution = 64;  // cells per side
  std::vector<double> visibility;  // row-major [y][x], values in [0, 1]
  Vec2 start_center{};
  double start_spread = 150.0;
  std::vector<Vec2> hideouts;
  std::vector<Vec2> rendezvous_points;

  /// Visibility of the field cell containing `p` (clamped to the map).
  double visibility_at(Vec2 p) const;
  /// True when `p` lies strictly inside some obstacle.
  bool in_obstacle(Vec2 p) const;
  MapFrame frame() const { return MapFrame{size}; }
  /// Throws DataError when an invariant does not hold.
  void validate() const;
  bool operator==(const MapSpec&) const = default;
};

enum class MapProfile { kPrisoner, kSmuggler, kOpen, kDense };

MapProfile parse_map_profile(const std::string& name);
std::string to_string(MapProfile profile);

/// Procedural map: random non-overlapping mountains, a smooth visibility
/// field, and hideouts / rendezvous points reachable from the start area.
MapSpec generate_map(MapProfile profile, std::uint64_t seed);

// --- planning grid -----------------------------------------------------------

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

/// 8-connected planning grid. Cost of entering a cell is the step length
/// (1 or sqrt 2) plus visibility_weight times the cell's visibility.
struct GridMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> blocked;  // row-major
  std::vector<double> visibility;     // row-major

  GridMap() = default;
  GridMap(int width, int height);
  bool inside(Cell c) const noexcept { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  bool free(Cell c) const noexcept { return inside(c) && blocked[index(c)] == 0; }
  std::size_t index(Cell c) const noexcept { return static_cast<std::size_t>(c.y) * width + c.x; }
};

/// Move cost from `from` to the adjacent cell `to`.
double step_cost(const GridMap& grid, Cell from, Cell to, double visibility_weight);

/// Cheapest 8-connected path (start and goal included). Diagonal moves may
/// not cut blocked corners. Throws UnreachableError when no path exists and
/// PreconditionError when an endpoint is blocked.
std::vector<Cell> a_star_path(const GridMap& grid, Cell start, Cell goal, double visibility_weight);

double path_cost(const GridMap& grid, const std::vector<Cell>& path, double visibility_weight);

/// World-unit planning grid over a map. Cells are `cell_size` units wide and
/// are blocked when their center is within radius + clearance of a mountain,
/// which keeps every point on a path between free cell centers (and its
/// rounding to integers) outside the mountain itself.
class WorldGrid {
 public:
  static constexpr double kCellSize = 8.0;
  static constexpr double kClearance = 8.0;

  explicit WorldGrid(const MapSpec& map);

  const GridMap& grid() const noexcept { return grid_; }
  Cell cell_of(Vec2 p) const;
  Vec2 center(Cell c) const;
  /// Nearest free cell center to `p` (searching outward ring by ring).
  Cell nearest_free(Vec2 p) const;
  std::vector<Vec2> a_star_path(Vec2 start, Vec2 goal, double visibility_weight) const;

 private:
  GridMap grid_;
};

// --- episodes ------------------------------------------------------------------

enum class Behavior { kDirect, kMeetThenGo, kStraightLine };

Behavior parse_behavior(const std::string& name);
std::string to_string(Behavior behavior);

struct DetectionRecord {
  int t = 0;
  int agent = 0;
  double x = 0.0;  // world units, equal to the trajectory state at t
  double y = 0.0;

  bool operator==(const DetectionRecord&) const = default;
};

struct EpisodeRecord {
  std::string episode_id;
  Behavior behavior = Behavior::kDirect;
  std::vector<int> goal_ids;
  std::string map_ref;
  double detection_rate = 0.0;
  std::vector<std::vector<Vec2>> trajectories;  // [agent][t], integer world units
  std::vector<DetectionRecord> detections;     // sorted by (t, agent)
  std::string config_hash;
  std::uint64_t seed = 0;

  int agents() const noexcept { return static_cast<int>(trajectories.size()); }
  int length() const noexcept { return trajectories.empty() ? 0 : static_cast<int>(trajectories[0].size()); }
  /// Detected timesteps / (agents * length).
  double realized_detection_rate() const;
  bool operator==(const EpisodeRecord&) const = default;
};

enum class DetectionSampling {
  kExactCount,  // round(rate * length) distinct timesteps per agent
  kBernoulli,   // each timestep independently with probability rate
};

struct EpisodeConfig {
  int agents = 3;
  Behavior behavior = Behavior::kDirect;
  double detection_rate = 0.11;
  DetectionSampling sampling = DetectionSampling::kExactCount;
  double visibility_weight = 1.0;
  double max_speed = 15.0;  // world units per timestep
  int meet_wait = 5;        // timesteps spent together at the rendezvous
  int length = 0;           // fixed episode length; 0 = until every agent arrives
  bool mixed_behaviors = false;  // each episode draws direct or meet-then-go
};

/// Largest per-step arc length the walker uses so that integer rounding of
/// positions cannot push a step past `max_speed`.
double walking_stride(double max_speed);

/// Positions every `stride` units of arc length along a polyline, ending at
/// its last vertex. Not yet rounded.
std::vector<Vec2> walk_polyline(const std::vector<Vec2>& polyline, double stride);

EpisodeRecord generate_episode(const MapSpec& map, const WorldGrid& grid, const EpisodeConfig& config,
                               Rng& rng);

/// Samples detections for an episode whose trajectories are already set.
void sample_detections(EpisodeRecord& episode, double rate, DetectionSampling sampling, Rng& rng);

/// `count` episodes, each from its own substream of `seed`.
std::vector<EpisodeRecord> generate_dataset(const MapSpec& map, const EpisodeConfig& config, int count,
                                            std::uint64_t seed);

/// Single-agent direct episodes with per-timestep Bernoulli detections.
/// Throws PreconditionError unless 0 < rate < 1.
std::vector<EpisodeRecord> generate_single_target_dataset(const MapSpec& map, int count,
                                                          double detection_rate, std::uint64_t seed);

/// Named detection regimes: prisoner low/medium/high and smuggler low/high.
double regime_detection_rate(const std::string& regime);

/// Integrity report used by tests and the data generator summary.
struct EpisodeCheck {
  int obstacle_states = 0;
  int speed_violations = 0;
  int detection_mismatches = 0;
  double max_step = 0.0;
};
EpisodeCheck check_episode(const EpisodeRecord& episode, const MapSpec& map, double max_speed);

}  // namespace difftrack::sim
