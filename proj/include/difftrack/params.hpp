#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "difftrack/autodiff.hpp"

namespace difftrack {

class Rng;

/// Named, ordered collection of parameter matrices. Slots are assigned in
/// registration order, so constructing the same model twice gives the same
/// layout; checkpoints match parameters by name.
class ParamSet {
 public:
  int add(std::string name, ad::Matrix value);

  std::size_t size() const noexcept { return values_.size(); }
  std::size_t scalar_count() const;

  ad::Matrix& at(int slot) { return values_.at(slot); }
  const ad::Matrix& at(int slot) const { return values_.at(slot); }
  const std::string& name(int slot) const { return names_.at(slot); }
  /// Slot for `name`, or -1.
  int find(std::string_view name) const;

  /// Same names and shapes, all zeros.
  ParamSet zeros_like() const;
  bool same_layout(const ParamSet& other) const;

  /// Leaf for a slot on `tape`; repeated calls on one tape share a node.
  ad::Var bind(ad::Tape& tape, int slot) const { return tape.parameter(values_.at(slot), slot); }

 private:
  std::vector<std::string> names_;
  std::vector<ad::Matrix> values_;
  std::unordered_map<std::string, int> index_;
};

/// Rounds every value to the nearest float32, the precision checkpoints store.
void round_to_float(ParamSet& params);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
ad::Matrix fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng);

}  // namespace difftrack
