#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace difftrack {

class Rng;

using Vec2 = std::array<double, 2>;

/// Agents x horizon x 2 array of normalized coordinates. This is both the
/// diffusion state and the output trajectory hypothesis.
class TrajectorySlate {
 public:
  TrajectorySlate() = default;
  TrajectorySlate(int agents, int horizon, double fill = 0.0);

  static TrajectorySlate standard_normal(int agents, int horizon, Rng& rng);

  int agents() const noexcept { return agents_; }
  int horizon() const noexcept { return horizon_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int agent, int t, int coord) { return data_[index(agent, t, coord)]; }
  double at(int agent, int t, int coord) const { return data_[index(agent, t, coord)]; }

  Vec2 state(int agent, int t) const { return {at(agent, t, 0), at(agent, t, 1)}; }
  void set_state(int agent, int t, Vec2 p) {
    at(agent, t, 0) = p[0];
    at(agent, t, 1) = p[1];
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const TrajectorySlate& other) const noexcept {
    return agents_ == other.agents_ && horizon_ == other.horizon_;
  }
  bool all_finite() const noexcept;

  /// Copy holding only the first `horizon` timesteps.
  TrajectorySlate truncated(int horizon) const;
  /// Copy with agent rows reordered: row a of the result is row perm[a] of this.
  TrajectorySlate permuted(std::span<const int> perm) const;

  bool operator==(const TrajectorySlate&) const = default;

 private:
  std::size_t index(int agent, int t, int coord) const noexcept {
    return (static_cast<std::size_t>(agent) * horizon_ + t) * 2 + coord;
  }

  int agents_ = 0;
  int horizon_ = 0;
  std::vector<double> data_;
};

/// Throws DimensionError when the shapes differ.
void require_same_shape(const TrajectorySlate& a, const TrajectorySlate& b, const char* what);

/// Invertible map between world units on a square map of side `size` and
/// the [-1, 1] coordinates the model diffuses over.
struct MapFrame {
  double size = 2428.0;

  double to_normalized(double world) const noexcept { return world / (0.5 * size) - 1.0; }
  double to_world(double normalized) const noexcept { return (normalized + 1.0) * 0.5 * size; }
  double length_to_normalized(double world) const noexcept { return world / (0.5 * size); }
};

}  // namespace difftrack
