#include <gtest/gtest.h>

#include "difftrack/autodiff.hpp"
#include "difftrack/errors.hpp"
#include "gradcheck.hpp"

namespace difftrack {
namespace {

using ad::Matrix;
using ad::Var;
using testing::check_op;
using testing::random_matrix;

void expect_all_pass(const testing::GradCheckResult& r) {
  EXPECT_EQ(r.passed, r.checked) << "worst relative error " << r.worst_relative;
}

TEST(AutodiffGrad, ElementwiseAndMatmul) {
  Rng rng(1);
  expect_all_pass(check_op({random_matrix(3, 4, rng), random_matrix(4, 2, rng)},
                           [](std::vector<Var>& v) { return ad::matmul(v[0], v[1]); }));
  expect_all_pass(check_op({random_matrix(3, 4, rng), random_matrix(3, 4, rng)},
                           [](std::vector<Var>& v) {
                             return ad::mul(ad::sub(v[0], v[1]), ad::add(v[0], v[1]));
                           }));
  expect_all_pass(check_op({random_matrix(3, 5, rng)}, [](std::vector<Var>& v) {
    return ad::mish(ad::affine(ad::tanh(ad::sigmoid(v[0])), 2.0, -0.5));
  }));
  expect_all_pass(check_op({random_matrix(3, 5, rng), random_matrix(3, 1, rng)},
                           [](std::vector<Var>& v) { return ad::add_bias(v[0], v[1]); }));
}

TEST(AutodiffGrad, ShapeOps) {
  Rng rng(2);
  expect_all_pass(check_op({random_matrix(2, 6, rng), random_matrix(3, 6, rng)},
                           [](std::vector<Var>& v) {
                             return ad::slice_rows(ad::concat_rows(v[0], v[1]), 1, 3);
                           }));
  expect_all_pass(check_op({random_matrix(3, 2, rng)},
                           [](std::vector<Var>& v) { return ad::repeat_cols(v[0], 3); }));
  expect_all_pass(check_op({random_matrix(3, 4, rng)},
                           [](std::vector<Var>& v) { return ad::repeat_blocks(v[0], 2, 3); }));
  expect_all_pass(check_op({random_matrix(3, 4, rng)},
                           [](std::vector<Var>& v) { return ad::upsample2(v[0]); }));
}

TEST(AutodiffGrad, Conv1dStrideAndPadding) {
  Rng rng(3);
  // 2 segments of length 8, 3 -> 4 channels.
  expect_all_pass(check_op({random_matrix(3, 16, rng), random_matrix(4, 15, rng), random_matrix(4, 1, rng)},
                           [](std::vector<Var>& v) { return ad::conv1d(v[0], v[1], v[2], 8, 5, 1, 2); }));
  expect_all_pass(check_op({random_matrix(3, 16, rng), random_matrix(4, 9, rng), random_matrix(4, 1, rng)},
                           [](std::vector<Var>& v) { return ad::conv1d(v[0], v[1], v[2], 8, 3, 2, 1); }));
}

TEST(AutodiffGrad, GroupNormAndFilm) {
  Rng rng(4);
  expect_all_pass(check_op({random_matrix(4, 12, rng), random_matrix(4, 1, rng), random_matrix(4, 1, rng)},
                           [](std::vector<Var>& v) { return ad::group_norm(v[0], v[1], v[2], 2, 6); },
                           1e-4));
  expect_all_pass(check_op({random_matrix(3, 12, rng), random_matrix(3, 3, rng), random_matrix(3, 3, rng)},
                           [](std::vector<Var>& v) { return ad::film(v[0], v[1], v[2], 4); }));
}

TEST(AutodiffGrad, CrossAttention) {
  Rng rng(5);
  // 2 groups x 3 agents x 4 tokens, 2 heads of width 2.
  expect_all_pass(check_op({random_matrix(4, 24, rng), random_matrix(4, 24, rng), random_matrix(4, 24, rng)},
                           [](std::vector<Var>& v) { return ad::cross_attention(v[0], v[1], v[2], 3, 4, 2); },
                           1e-4));
}

TEST(AutodiffGrad, Reductions) {
  Rng rng(6);
  expect_all_pass(check_op({random_matrix(3, 4, rng), random_matrix(3, 4, rng)},
                           [](std::vector<Var>& v) { return ad::mse(v[0], v[1]); }));
  expect_all_pass(check_op({random_matrix(3, 4, rng)}, [](std::vector<Var>& v) { return ad::sum(v[0]); }));
}

TEST(Autodiff, SharedInputAccumulates) {
  ad::Tape tape;
  Var x = tape.leaf(Matrix::Constant(1, 1, 3.0));
  Var y = ad::mul(x, x);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x.id())(0, 0), 6.0);
}

TEST(Autodiff, ParameterNodeIsSharedPerSlot) {
  ad::Tape tape;
  Matrix w = Matrix::Constant(1, 1, 2.0);
  Var a = tape.parameter(w, 0);
  Var b = tape.parameter(w, 0);
  EXPECT_EQ(a.id(), b.id());
  tape.backward(ad::mul(a, b));
  int visits = 0;
  tape.for_each_parameter_grad([&](int slot, const Matrix& g) {
    ++visits;
    EXPECT_EQ(slot, 0);
    EXPECT_DOUBLE_EQ(g(0, 0), 4.0);
  });
  EXPECT_EQ(visits, 1);
}

TEST(Autodiff, ShapeMismatchThrows) {
  ad::Tape tape;
  Var a = tape.leaf(Matrix::Zero(2, 3));
  Var b = tape.leaf(Matrix::Zero(3, 3));
  EXPECT_THROW(ad::add(a, b), DimensionError);
  EXPECT_THROW(ad::matmul(a, a), DimensionError);
}

TEST(Autodiff, NonRecordingTapeRejectsBackward) {
  ad::Tape tape(false);
  Var a = tape.leaf(Matrix::Ones(1, 1));
  EXPECT_THROW(tape.backward(ad::sum(a)), PreconditionError);
}

}  // namespace
}  // namespace difftrack
