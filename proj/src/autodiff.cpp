#include "difftrack/autodiff.hpp"

#include <cmath>
#include <string>

#include "difftrack/errors.hpp"

namespace difftrack::ad {

namespace {

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw DimensionError(std::string(op) + ": " + detail);
}

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), op, shape(a) + " vs " + shape(b));
}

// Accumulates into an input's gradient only when it is tracked.
template <class Expr>
void accumulate(Tape& t, Var v, const Expr& g) {
  if (t.needs_grad(v.id())) t.grad(v.id()) += g;
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.own = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.own = std::move(value);
  n.needs_grad = record_;
  return push(std::move(n));
}

Var Tape::parameter(const Matrix& value, int slot) {
  if (auto it = param_ids_.find(slot); it != param_ids_.end()) return Var(this, it->second);
  Node n;
  n.ref = &value;
  n.needs_grad = record_;
  Var v = push(std::move(n));
  param_ids_.emplace(slot, v.id());
  return v;
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward back) {
  Node n;
  n.own = std::move(value);
  if (record_) {
    for (const Var& in : inputs) {
      if (nodes_[in.id()].needs_grad) {
        n.needs_grad = true;
        break;
      }
    }
    if (n.needs_grad) n.back = std::move(back);
  }
  return push(std::move(n));
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.ref != nullptr ? *n.ref : n.own;
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(value(id).rows(), value(id).cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!record_) throw PreconditionError("backward on a tape that does not record gradients");
  require(loss.value().size() == 1, "backward", "loss must be 1x1, got " + shape(loss.value()));
  grad(loss.id()).setOnes();
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.back && n.grad.size() > 0) n.back(*this, n.grad);
  }
}

// --- elementwise and linear algebra ------------------------------------------

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul", shape(a.value()) + " * " + shape(b.value()));
  Matrix out = a.value() * b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a.id())) t.grad(a.id()).noalias() += g * t.value(b.id()).transpose();
    if (t.needs_grad(b.id())) t.grad(b.id()).noalias() += t.value(a.id()).transpose() * g;
  });
}

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var sub(Var a, Var b) {
  require_same(a.value(), b.value(), "sub");
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    accumulate(t, a, g);
    if (t.needs_grad(b.id())) t.grad(b.id()) -= g;
  });
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    accumulate(t, a, g.cwiseProduct(t.value(b.id())));
    accumulate(t, b, g.cwiseProduct(t.value(a.id())));
  });
}

Var affine(Var a, double scale, double shift) {
  Matrix out = (a.value().array() * scale + shift).matrix();
  return a.tape()->record(std::move(out), {a},
                          [a, scale](Tape& t, const Matrix& g) { accumulate(t, a, g * scale); });
}

Var add_bias(Var x, Var b) {
  require(b.cols() == 1 && b.rows() == x.rows(), "add_bias",
          shape(x.value()) + " + " + shape(b.value()));
  Matrix out = x.value().colwise() + b.value().col(0);
  return x.tape()->record(std::move(out), {x, b}, [x, b](Tape& t, const Matrix& g) {
    accumulate(t, x, g);
    if (t.needs_grad(b.id())) t.grad(b.id()) += g.rowwise().sum();
  });
}

Var sigmoid(Var x) {
  Matrix out = (1.0 / (1.0 + (-x.value().array()).exp())).matrix();
  // The output node's id is the next slot on the tape.
  const int self = static_cast<int>(x.tape()->size());
  return x.tape()->record(std::move(out), {x}, [x, self](Tape& t, const Matrix& g) {
    const auto s = t.value(self).array();
    accumulate(t, x, (g.array() * s * (1.0 - s)).matrix());
  });
}

Var tanh(Var x) {
  Matrix out = x.value().array().tanh().matrix();
  const int self = static_cast<int>(x.tape()->size());
  return x.tape()->record(std::move(out), {x}, [x, self](Tape& t, const Matrix& g) {
    const auto th = t.value(self).array();
    accumulate(t, x, (g.array() * (1.0 - th * th)).matrix());
  });
}

namespace {

double softplus(double v) { return v > 20.0 ? v : std::log1p(std::exp(v)); }

}  // namespace

Var mish(Var x) {
  const Matrix& xv = x.value();
  Matrix out = xv.unaryExpr([](double v) { return v * std::tanh(softplus(v)); });
  return x.tape()->record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    if (!t.needs_grad(x.id())) return;
    const Matrix d = t.value(x.id()).unaryExpr([](double v) {
      const double sp = softplus(v);
      const double th = std::tanh(sp);
      const double sig = 1.0 / (1.0 + std::exp(-v));
      return th + v * (1.0 - th * th) * sig;
    });
    t.grad(x.id()) += g.cwiseProduct(d);
  });
}

Var concat_rows(Var top, Var bottom) {
  require(top.cols() == bottom.cols(), "concat_rows",
          shape(top.value()) + " over " + shape(bottom.value()));
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top.value(), bottom.value();
  const Eigen::Index split = top.rows();
  return top.tape()->record(std::move(out), {top, bottom},
                            [top, bottom, split](Tape& t, const Matrix& g) {
                              accumulate(t, top, g.topRows(split));
                              accumulate(t, bottom, g.bottomRows(g.rows() - split));
                            });
}

Var slice_rows(Var x, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count > 0 && start + count <= x.rows(), "slice_rows",
          "rows [" + std::to_string(start) + ", " + std::to_string(start + count) + ") of " +
              shape(x.value()));
  Matrix out = x.value().middleRows(start, count);
  return x.tape()->record(std::move(out), {x}, [x, start, count](Tape& t, const Matrix& g) {
    if (t.needs_grad(x.id())) t.grad(x.id()).middleRows(start, count) += g;
  });
}

Var repeat_cols(Var x, int times) {
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols() * times);
  for (Eigen::Index c = 0; c < xv.cols(); ++c)
    for (int k = 0; k < times; ++k) out.col(c * times + k) = xv.col(c);
  return x.tape()->record(std::move(out), {x}, [x, times](Tape& t, const Matrix& g) {
    if (!t.needs_grad(x.id())) return;
    Matrix& gx = t.grad(x.id());
    for (Eigen::Index c = 0; c < gx.cols(); ++c)
      for (int k = 0; k < times; ++k) gx.col(c) += g.col(c * times + k);
  });
}

Var repeat_blocks(Var x, Eigen::Index block, int times) {
  const Matrix& xv = x.value();
  require(block > 0 && xv.cols() % block == 0, "repeat_blocks",
          "block " + std::to_string(block) + " does not tile " + shape(xv));
  const Eigen::Index nblocks = xv.cols() / block;
  Matrix out(xv.rows(), xv.cols() * times);
  for (Eigen::Index b = 0; b < nblocks; ++b)
    for (int k = 0; k < times; ++k)
      out.middleCols((b * times + k) * block, block) = xv.middleCols(b * block, block);
  return x.tape()->record(std::move(out), {x}, [x, block, nblocks, times](Tape& t, const Matrix& g) {
    if (!t.needs_grad(x.id())) return;
    Matrix& gx = t.grad(x.id());
    for (Eigen::Index b = 0; b < nblocks; ++b)
      for (int k = 0; k < times; ++k)
        gx.middleCols(b * block, block) += g.middleCols((b * times + k) * block, block);
  });
}

// --- sequence ops ----------------------------------------------------------------

Var conv1d(Var x, Var weight, Var bias, int length, int kernel, int stride, int pad) {
  const Matrix& xv = x.value();
  const Eigen::Index in = xv.rows();
  require(length > 0 && xv.cols() % length == 0, "conv1d",
          "input " + shape(xv) + " is not a whole number of length-" + std::to_string(length) +
              " segments");
  require(weight.cols() == in * kernel, "conv1d",
          "weight " + shape(weight.value()) + " for " + std::to_string(in) + " channels, kernel " +
              std::to_string(kernel));
  require(bias.rows() == weight.rows() && bias.cols() == 1, "conv1d", "bias " + shape(bias.value()));
  const Eigen::Index segments = xv.cols() / length;
  const int out_len = (length + 2 * pad - kernel) / stride + 1;
  require(out_len > 0, "conv1d", "empty output");

  Matrix cols = Matrix::Zero(in * kernel, segments * out_len);
  for (Eigen::Index n = 0; n < segments; ++n) {
    for (int to = 0; to < out_len; ++to) {
      const Eigen::Index dst_col = n * out_len + to;
      for (int j = 0; j < kernel; ++j) {
        const int src = to * stride + j - pad;
        if (src < 0 || src >= length) continue;
        const Eigen::Index src_col = n * length + src;
        for (Eigen::Index ci = 0; ci < in; ++ci) cols(ci * kernel + j, dst_col) = xv(ci, src_col);
      }
    }
  }
  Matrix out = weight.value() * cols;
  out.colwise() += bias.value().col(0);

  return x.tape()->record(
      std::move(out), {x, weight, bias},
      [x, weight, bias, cols = std::move(cols), length, kernel, stride, pad, in, segments,
       out_len](Tape& t, const Matrix& g) {
        if (t.needs_grad(weight.id())) t.grad(weight.id()).noalias() += g * cols.transpose();
        if (t.needs_grad(bias.id())) t.grad(bias.id()) += g.rowwise().sum();
        if (!t.needs_grad(x.id())) return;
        const Matrix dcols = t.value(weight.id()).transpose() * g;
        Matrix& gx = t.grad(x.id());
        for (Eigen::Index n = 0; n < segments; ++n) {
          for (int to = 0; to < out_len; ++to) {
            const Eigen::Index src_col = n * out_len + to;
            for (int j = 0; j < kernel; ++j) {
              const int dst = to * stride + j - pad;
              if (dst < 0 || dst >= length) continue;
              const Eigen::Index dst_col = n * length + dst;
              for (Eigen::Index ci = 0; ci < in; ++ci) gx(ci, dst_col) += dcols(ci * kernel + j, src_col);
            }
          }
        }
      });
}

Var group_norm(Var x, Var gamma, Var beta, int groups, int length, double eps) {
  const Matrix& xv = x.value();
  const Eigen::Index channels = xv.rows();
  require(groups > 0 && channels % groups == 0, "group_norm",
          std::to_string(channels) + " channels in " + std::to_string(groups) + " groups");
  require(xv.cols() % length == 0, "group_norm", "ragged segments");
  require(gamma.rows() == channels && beta.rows() == channels, "group_norm", "affine size");
  const Eigen::Index per_group = channels / groups;
  const Eigen::Index segments = xv.cols() / length;
  const double count = static_cast<double>(per_group * length);

  Matrix xhat(channels, xv.cols());
  Matrix inv_std(groups, segments);
  for (Eigen::Index n = 0; n < segments; ++n) {
    for (int gi = 0; gi < groups; ++gi) {
      const auto blk = xv.block(gi * per_group, n * length, per_group, length);
      const double mean = blk.sum() / count;
      const double var = (blk.array() - mean).square().sum() / count;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std(gi, n) = is;
      xhat.block(gi * per_group, n * length, per_group, length) = (blk.array() - mean) * is;
    }
  }
  Matrix out = (xhat.array().colwise() * gamma.value().col(0).array()).matrix();
  out.colwise() += beta.value().col(0);

  return x.tape()->record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), groups, length,
       per_group, segments, count](Tape& t, const Matrix& g) {
        if (t.needs_grad(gamma.id()))
          t.grad(gamma.id()) += g.cwiseProduct(xhat).rowwise().sum();
        if (t.needs_grad(beta.id())) t.grad(beta.id()) += g.rowwise().sum();
        if (!t.needs_grad(x.id())) return;
        const Matrix dxhat = (g.array().colwise() * t.value(gamma.id()).col(0).array()).matrix();
        Matrix& gx = t.grad(x.id());
        for (Eigen::Index n = 0; n < segments; ++n) {
          for (int gi = 0; gi < groups; ++gi) {
            const auto dh = dxhat.block(gi * per_group, n * length, per_group, length);
            const auto xh = xhat.block(gi * per_group, n * length, per_group, length);
            const double mean_dh = dh.sum() / count;
            const double mean_dh_xh = dh.cwiseProduct(xh).sum() / count;
            gx.block(gi * per_group, n * length, per_group, length).array() +=
                inv_std(gi, n) * (dh.array() - mean_dh - xh.array() * mean_dh_xh);
          }
        }
      });
}

Var film(Var x, Var gamma, Var beta, int length) {
  const Matrix& xv = x.value();
  require(xv.cols() % length == 0, "film", "ragged segments");
  const Eigen::Index segments = xv.cols() / length;
  require(gamma.rows() == xv.rows() && gamma.cols() == segments, "film",
          "gamma " + shape(gamma.value()) + " for features " + shape(xv));
  require_same(gamma.value(), beta.value(), "film");
  Matrix out(xv.rows(), xv.cols());
  for (Eigen::Index n = 0; n < segments; ++n) {
    out.middleCols(n * length, length) =
        (xv.middleCols(n * length, length).array().colwise() * gamma.value().col(n).array())
            .colwise() +
        beta.value().col(n).array();
  }
  return x.tape()->record(std::move(out), {x, gamma, beta},
                          [x, gamma, beta, length, segments](Tape& t, const Matrix& g) {
                            const Matrix& xv = t.value(x.id());
                            const Matrix& gv = t.value(gamma.id());
                            for (Eigen::Index n = 0; n < segments; ++n) {
                              const auto gs = g.middleCols(n * length, length);
                              if (t.needs_grad(x.id()))
                                t.grad(x.id()).middleCols(n * length, length).array() +=
                                    gs.array().colwise() * gv.col(n).array();
                              if (t.needs_grad(gamma.id()))
                                t.grad(gamma.id()).col(n) +=
                                    gs.cwiseProduct(xv.middleCols(n * length, length)).rowwise().sum();
                              if (t.needs_grad(beta.id())) t.grad(beta.id()).col(n) += gs.rowwise().sum();
                            }
                          });
}

Var upsample2(Var x) {
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols() * 2);
  for (Eigen::Index c = 0; c < xv.cols(); ++c) {
    out.col(2 * c) = xv.col(c);
    out.col(2 * c + 1) = xv.col(c);
  }
  return x.tape()->record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    if (!t.needs_grad(x.id())) return;
    Matrix& gx = t.grad(x.id());
    for (Eigen::Index c = 0; c < gx.cols(); ++c) gx.col(c) += g.col(2 * c) + g.col(2 * c + 1);
  });
}

Var cross_attention(Var q, Var k, Var v, int agents, int length, int heads) {
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  require_same(qv, kv, "cross_attention");
  require_same(qv, vv, "cross_attention");
  require(heads > 0 && qv.rows() % heads == 0, "cross_attention",
          std::to_string(qv.rows()) + " features in " + std::to_string(heads) + " heads");
  require(length > 0 && qv.cols() % (static_cast<Eigen::Index>(agents) * length) == 0,
          "cross_attention", "columns " + std::to_string(qv.cols()) + " not divisible into " +
                                 std::to_string(agents) + " agents of length " +
                                 std::to_string(length));
  const Eigen::Index dh = qv.rows() / heads;
  const Eigen::Index groups = qv.cols() / (static_cast<Eigen::Index>(agents) * length);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs[((g * heads + h) * agents + m) * agents + n] is [length(query), length(key)].
  std::vector<Matrix> probs(static_cast<std::size_t>(groups * heads * agents * agents));
  Matrix out = Matrix::Zero(qv.rows(), qv.cols());
  for (Eigen::Index gi = 0; gi < groups; ++gi) {
    for (int h = 0; h < heads; ++h) {
      for (int m = 0; m < agents; ++m) {
        const Eigen::Index mc = (gi * agents + m) * length;
        const auto qm = qv.block(h * dh, mc, dh, length);
        for (int n = 0; n < agents; ++n) {
          const Eigen::Index nc = (gi * agents + n) * length;
          Matrix s = (qm.transpose() * kv.block(h * dh, nc, dh, length)) * scale;
          for (Eigen::Index r = 0; r < s.rows(); ++r) {
            const double mx = s.row(r).maxCoeff();
            s.row(r) = (s.row(r).array() - mx).exp().matrix();
            s.row(r) /= s.row(r).sum();
          }
          out.block(h * dh, mc, dh, length).noalias() += vv.block(h * dh, nc, dh, length) * s.transpose();
          probs[((gi * heads + h) * agents + m) * agents + n] = std::move(s);
        }
      }
    }
  }

  return q.tape()->record(
      std::move(out), {q, k, v},
      [q, k, v, probs = std::move(probs), agents, length, heads, dh, groups, scale](Tape& t,
                                                                                   const Matrix& g) {
        const Matrix& qv = t.value(q.id());
        const Matrix& kv = t.value(k.id());
        const Matrix& vv = t.value(v.id());
        const bool gq = t.needs_grad(q.id());
        const bool gk = t.needs_grad(k.id());
        const bool gv = t.needs_grad(v.id());
        for (Eigen::Index gi = 0; gi < groups; ++gi) {
          for (int h = 0; h < heads; ++h) {
            for (int m = 0; m < agents; ++m) {
              const Eigen::Index mc = (gi * agents + m) * length;
              const auto gout = g.block(h * dh, mc, dh, length);
              for (int n = 0; n < agents; ++n) {
                const Eigen::Index nc = (gi * agents + n) * length;
                const Matrix& p = probs[((gi * heads + h) * agents + m) * agents + n];
                if (gv) t.grad(v.id()).block(h * dh, nc, dh, length).noalias() += gout * p;
                if (!gq && !gk) continue;
                const Matrix dp = gout.transpose() * vv.block(h * dh, nc, dh, length);
                const Eigen::VectorXd rowdot = dp.cwiseProduct(p).rowwise().sum();
                const Matrix ds = (p.array() * (dp.colwise() - rowdot).array()).matrix() * scale;
                if (gq)
                  t.grad(q.id()).block(h * dh, mc, dh, length).noalias() +=
                      kv.block(h * dh, nc, dh, length) * ds.transpose();
                if (gk)
                  t.grad(k.id()).block(h * dh, nc, dh, length).noalias() +=
                      qv.block(h * dh, mc, dh, length) * ds;
              }
            }
          }
        }
      });
}

// --- reductions -------------------------------------------------------------------

Var mse(Var a, Var b) {
  require_same(a.value(), b.value(), "mse");
  const double n = static_cast<double>(a.value().size());
  Matrix out(1, 1);
  out(0, 0) = (a.value() - b.value()).squaredNorm() / n;
  return a.tape()->record(std::move(out), {a, b}, [a, b, n](Tape& t, const Matrix& g) {
    const Matrix d = (t.value(a.id()) - t.value(b.id())) * (2.0 * g(0, 0) / n);
    accumulate(t, a, d);
    if (t.needs_grad(b.id())) t.grad(b.id()) -= d;
  });
}

Var sum(Var x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape()->record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    if (t.needs_grad(x.id())) t.grad(x.id()).array() += g(0, 0);
  });
}

Var weighted_sum(Var x, const Matrix& weights) {
  require_same(x.value(), weights, "weighted_sum");
  Matrix out(1, 1);
  out(0, 0) = x.value().cwiseProduct(weights).sum();
  return x.tape()->record(std::move(out), {x}, [x, weights](Tape& t, const Matrix& g) {
    accumulate(t, x, weights * g(0, 0));
  });
}

}  // namespace difftrack::ad
