#include "difftrack/encoder.hpp"

#include <algorithm>

#include "difftrack/errors.hpp"
#include "difftrack/rng.hpp"

namespace difftrack {

void DetectionHistory::validate() const {
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const Detection& d = detections[i];
    const std::string where = "detection " + std::to_string(i);
    if (!(d.dt >= 0.0)) throw DataError(where + ": negative time since detection");
    if (d.x < -1.0 || d.x > 1.0 || d.y < -1.0 || d.y > 1.0) {
      throw DataError(where + ": coordinates outside the normalized map");
    }
    if (i > 0 && d.dt > detections[i - 1].dt) {
      throw DataError(where + ": detections must be ordered oldest first");
    }
  }
}

std::string to_string(EncoderMode mode) {
  return mode == EncoderMode::kShared ? "shared" : "per-agent";
}

std::vector<std::vector<Detection>> split_by_agent(const DetectionHistory& history, int agents) {
  std::vector<std::vector<Detection>> out(static_cast<std::size_t>(agents));
  for (std::size_t i = 0; i < history.detections.size(); ++i) {
    const Detection& d = history.detections[i];
    if (!d.agent_id) {
      throw DataError("detection " + std::to_string(i) + " has no agent id in per-agent mode");
    }
    if (*d.agent_id < 0 || *d.agent_id >= agents) {
      throw DataError("detection " + std::to_string(i) + " has agent id " +
                      std::to_string(*d.agent_id) + " outside [0, " + std::to_string(agents) + ")");
    }
    out[static_cast<std::size_t>(*d.agent_id)].push_back(d);
  }
  return out;
}

DetectionEncoder::DetectionEncoder(int cond_dim, ParamSet& params, Rng& rng) : cond_dim_(cond_dim) {
  const int d = cond_dim;
  input_weight_ = params.add("encoder.lstm.input_weight", fan_in_uniform(4 * d, 3, d, rng));
  hidden_weight_ = params.add("encoder.lstm.hidden_weight", fan_in_uniform(4 * d, d, d, rng));
  ad::Matrix bias = fan_in_uniform(4 * d, 1, d, rng);
  bias.middleRows(d, d).array() += 1.0;
  bias_ = params.add("encoder.lstm.bias", std::move(bias));
  null_ = params.add("encoder.null_embedding", fan_in_uniform(d, 1, d, rng));
}

ad::Var DetectionEncoder::encode(ad::Tape& tape, const ParamSet& params,
                                 std::span<const std::vector<Detection>> sequences) const {
  const int d = cond_dim_;
  const auto count = static_cast<Eigen::Index>(sequences.size());
  if (count == 0) throw DimensionError("encode: no sequences");
  std::size_t longest = 0;
  for (const auto& s : sequences) longest = std::max(longest, s.size());

  const ad::Var null_vec = params.bind(tape, null_);
  const ad::Var null_cols = ad::add_bias(tape.constant(ad::Matrix::Zero(d, count)), null_vec);
  if (longest == 0) return null_cols;

  const ad::Var wx = params.bind(tape, input_weight_);
  const ad::Var wh = params.bind(tape, hidden_weight_);
  const ad::Var b = params.bind(tape, bias_);
  ad::Var h = tape.constant(ad::Matrix::Zero(d, count));
  ad::Var c = h;
  for (std::size_t t = 0; t < longest; ++t) {
    ad::Matrix input = ad::Matrix::Zero(3, count);
    ad::Matrix active = ad::Matrix::Zero(d, count);
    bool all_active = true;
    for (Eigen::Index s = 0; s < count; ++s) {
      const auto& seq = sequences[static_cast<std::size_t>(s)];
      if (t < seq.size()) {
        input(0, s) = seq[t].dt;
        input(1, s) = seq[t].x;
        input(2, s) = seq[t].y;
        active.col(s).setOnes();
      } else {
        all_active = false;
      }
    }
    const ad::Var gates =
        ad::add_bias(ad::add(ad::matmul(wx, tape.constant(std::move(input))), ad::matmul(wh, h)), b);
    const ad::Var in_gate = ad::sigmoid(ad::slice_rows(gates, 0, d));
    const ad::Var forget = ad::sigmoid(ad::slice_rows(gates, d, d));
    const ad::Var cell = ad::tanh(ad::slice_rows(gates, 2 * d, d));
    const ad::Var out_gate = ad::sigmoid(ad::slice_rows(gates, 3 * d, d));
    const ad::Var c_next = ad::add(ad::mul(forget, c), ad::mul(in_gate, cell));
    const ad::Var h_next = ad::mul(out_gate, ad::tanh(c_next));
    if (all_active) {
      h = h_next;
      c = c_next;
    } else {
      const ad::Var mask = tape.constant(std::move(active));
      h = ad::add(h, ad::mul(mask, ad::sub(h_next, h)));
      c = ad::add(c, ad::mul(mask, ad::sub(c_next, c)));
    }
  }

  ad::Matrix has = ad::Matrix::Zero(d, count);
  bool any_empty = false;
  for (Eigen::Index s = 0; s < count; ++s) {
    if (sequences[static_cast<std::size_t>(s)].empty()) {
      any_empty = true;
    } else {
      has.col(s).setOnes();
    }
  }
  if (!any_empty) return h;
  ad::Matrix lacks = 1.0 - has.array();
  return ad::add(ad::mul(tape.constant(std::move(has)), h),
                 ad::mul(tape.constant(std::move(lacks)), null_cols));
}

}  // namespace difftrack
