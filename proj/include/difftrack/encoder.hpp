#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "difftrack/autodiff.hpp"
#include "difftrack/params.hpp"

namespace difftrack {

class Rng;

/// One sparse observation: time since detection (normalized), normalized
/// position, and the producing agent when origins are known.
struct Detection {
  double dt = 0.0;
  double x = 0.0;
  double y = 0.0;
  std::optional<int> agent_id;

  bool operator==(const Detection&) const = default;
};

/// Detections ordered oldest first, so dt is non-increasing.
struct DetectionHistory {
  std::vector<Detection> detections;

  bool empty() const noexcept { return detections.empty(); }
  std::size_t size() const noexcept { return detections.size(); }
  /// Throws DataError on negative dt, out-of-bounds coordinates or misordering.
  void validate() const;
};

enum class EncoderMode { kShared, kPerAgent };

std::string to_string(EncoderMode mode);

/// Splits a labeled history into one history per agent (order preserved).
/// Throws DataError naming the first unlabeled or out-of-range record.
std::vector<std::vector<Detection>> split_by_agent(const DetectionHistory& history, int agents);

/// LSTM over (dt, x, y) detection triples. The embedding is the final hidden
/// state; an empty sequence maps to a learned null embedding.
class DetectionEncoder {
 public:
  DetectionEncoder() = default;
  DetectionEncoder(int cond_dim, ParamSet& params, Rng& rng);

  int cond_dim() const noexcept { return cond_dim_; }
  int null_slot() const noexcept { return null_; }

  /// One embedding column per sequence; sequences may differ in length.
  ad::Var encode(ad::Tape& tape, const ParamSet& params,
                 std::span<const std::vector<Detection>> sequences) const;

 private:
  int cond_dim_ = 0;
  int input_weight_ = -1;   // [4D, 3]
  int hidden_weight_ = -1;  // [4D, D]
  int bias_ = -1;           // [4D, 1], gate order input, forget, cell, output
  int null_ = -1;           // [D, 1]
};

}  // namespace difftrack
