#include "difftrack/params.hpp"

#include <cmath>

#include "difftrack/errors.hpp"
#include "difftrack/rng.hpp"

namespace difftrack {

int ParamSet::add(std::string name, ad::Matrix value) {
  if (index_.contains(name)) throw ConfigError(name, "duplicate parameter name");
  const int slot = static_cast<int>(values_.size());
  index_.emplace(name, slot);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return slot;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

int ParamSet::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? -1 : it->second;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet z;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    z.add(names_[i], ad::Matrix::Zero(values_[i].rows(), values_[i].cols()));
  }
  return z;
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (names_[i] != other.names_[i] || values_[i].rows() != other.values_[i].rows() ||
        values_[i].cols() != other.values_[i].cols()) {
      return false;
    }
  }
  return true;
}

void round_to_float(ParamSet& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    params.at(static_cast<int>(i)) = params.at(static_cast<int>(i)).cast<float>().cast<double>();
  }
}

ad::Matrix fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  ad::Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

}  // namespace difftrack
