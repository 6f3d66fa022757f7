#include "difftrack/slate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "difftrack/errors.hpp"
#include "difftrack/rng.hpp"

namespace difftrack {

TrajectorySlate::TrajectorySlate(int agents, int horizon, double fill)
    : agents_(agents), horizon_(horizon) {
  if (agents <= 0 || horizon <= 0) {
    throw DimensionError("slate needs positive agents and horizon, got " + std::to_string(agents) +
                         "x" + std::to_string(horizon));
  }
  data_.assign(static_cast<std::size_t>(agents) * horizon * 2, fill);
}

TrajectorySlate TrajectorySlate::standard_normal(int agents, int horizon, Rng& rng) {
  TrajectorySlate s(agents, horizon);
  for (double& v : s.data_) v = rng.normal();
  return s;
}

bool TrajectorySlate::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

TrajectorySlate TrajectorySlate::truncated(int horizon) const {
  if (horizon <= 0 || horizon > horizon_) {
    throw RangeError("cannot truncate horizon " + std::to_string(horizon_) + " to " +
                     std::to_string(horizon));
  }
  TrajectorySlate out(agents_, horizon);
  for (int a = 0; a < agents_; ++a)
    for (int t = 0; t < horizon; ++t) out.set_state(a, t, state(a, t));
  return out;
}

TrajectorySlate TrajectorySlate::permuted(std::span<const int> perm) const {
  if (static_cast<int>(perm.size()) != agents_) throw DimensionError("permutation size mismatch");
  TrajectorySlate out(agents_, horizon_);
  for (int a = 0; a < agents_; ++a)
    for (int t = 0; t < horizon_; ++t) out.set_state(a, t, state(perm[a], t));
  return out;
}

void require_same_shape(const TrajectorySlate& a, const TrajectorySlate& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape " + std::to_string(a.agents()) + "x" +
                         std::to_string(a.horizon()) + " vs " + std::to_string(b.agents()) + "x" +
                         std::to_string(b.horizon()));
  }
}

}  // namespace difftrack
