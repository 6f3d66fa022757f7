#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <unordered_map>
#include <vector>

namespace difftrack::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const noexcept { return tape_; }
  int id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Records matrix operations and replays them backwards to accumulate
/// gradients. Feature maps are stored as [channels, segments * length]
/// matrices with each segment's timesteps contiguous in columns.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  Var constant(Matrix value);
  /// Differentiable input owned by the tape.
  Var leaf(Matrix value);
  /// Differentiable input referencing external storage; one node per slot.
  Var parameter(const Matrix& value, int slot);

  /// Appends an op result. `back` is stored only if some input needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward back);

  const Matrix& value(int id) const;
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  /// Gradient accumulator for a node, zero-initialized on first access.
  Matrix& grad(int id);
  bool has_grad(int id) const { return nodes_[id].grad.size() > 0; }

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 loss and runs every recorded backward.
  void backward(Var loss);

  /// Visits (slot, gradient) for every parameter that received a gradient.
  template <class F>
  void for_each_parameter_grad(F&& visit) const {
    for (const auto& [slot, id] : param_ids_) {
      if (nodes_[id].grad.size() > 0) visit(slot, nodes_[id].grad);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix own;
    const Matrix* ref = nullptr;
    Matrix grad;
    Backward back;
    bool needs_grad = false;
  };

  Var push(Node node);

  bool record_;
  std::deque<Node> nodes_;
  std::unordered_map<int, int> param_ids_;
};

// --- elementwise and linear algebra ------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// scale * a + shift, elementwise.
Var affine(Var a, double scale, double shift);
/// x + b broadcast along columns; b is [rows, 1].
Var add_bias(Var x, Var b);
Var sigmoid(Var x);
Var tanh(Var x);
/// x * tanh(softplus(x)).
Var mish(Var x);

Var concat_rows(Var top, Var bottom);
Var slice_rows(Var x, Eigen::Index start, Eigen::Index count);
/// Repeats each column `times` times consecutively: col b -> cols [b*times, (b+1)*times).
Var repeat_cols(Var x, int times);
/// Repeats every column block of width `block` `times` times: [B0 B1] -> [B0 B0 B1 B1].
Var repeat_blocks(Var x, Eigen::Index block, int times);

// --- sequence ops over segmented feature maps --------------------------------

/// 1-D convolution applied per segment. x is [in, n * length], weight is
/// [out, in * kernel] (input-channel major), bias is [out, 1].
Var conv1d(Var x, Var weight, Var bias, int length, int kernel, int stride, int pad);

/// Group normalization over (channels / groups) x length within every segment.
Var group_norm(Var x, Var gamma, Var beta, int groups, int length, double eps = 1e-5);

/// Per-segment affine modulation: gamma, beta are [channels, n].
Var film(Var x, Var gamma, Var beta, int length);

/// Nearest-neighbour x2 upsampling in time.
Var upsample2(Var x);

/// Multi-head attention where, within each group of `agents` consecutive
/// segments, the queries of segment m attend over the keys and values of
/// every segment n with an independent softmax per (m, n) pair and the
/// per-pair results summed over n. q, k, v are [heads * head_dim, n * length].
Var cross_attention(Var q, Var k, Var v, int agents, int length, int heads);

// --- reductions ----------------------------------------------------------------

/// Mean of squared differences, as a 1x1 matrix.
Var mse(Var a, Var b);
Var sum(Var x);
/// sum(x .* weights) with constant weights.
Var weighted_sum(Var x, const Matrix& weights);

}  // namespace difftrack::ad
