// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "clue/error.hpp"
#include "clue/grad_check.hpp"
#include "clue/ops.hpp"
#include "grad_cases.hpp"
#include "test_util.hpp"

namespace clue {
namespace {

using test::random_tensor;

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  const Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
}

TEST(Parameter, GradStartsAtZeroAndAccumulates) {
  Parameter p("w", Tensor::matrix(1, 2, {1.0, 2.0}));
  EXPECT_EQ(p.grad.values()[0], 0.0);
  for (int pass = 0; pass < 2; ++pass) {
    Graph g;
    g.backward(sum(g.parameter(p)));
  }
  EXPECT_EQ(p.grad[0], 2.0);
  p.zero_grad();
  EXPECT_EQ(p.grad[1], 0.0);
}

TEST(Matmul, IdentityAndScalar) {
  Graph g;
  const Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  EXPECT_EQ(max_abs_diff(matmul(g.constant(eye), g.constant(x)).value(), x), 0.0);
  EXPECT_EQ(matmul(g.constant(Tensor::matrix(1, 1, {2})), g.constant(Tensor::matrix(1, 1, {3}))).value()[0], 6.0);
}

TEST(Matmul, MatchesTripleLoopOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t m = 1 + rng.index(16);
    const std::size_t k = 1 + rng.index(16);
    const std::size_t n = 1 + rng.index(16);
    const Tensor a = random_tensor({m, k}, rng);
    const Tensor b = random_tensor({k, n}, rng);
    Graph g;
    EXPECT_LT(max_abs_diff(matmul(g.constant(a), g.constant(b)).value(), test::naive_matmul(a, b)), 1e-10);
  }
  Rng r2(8);
  const Tensor a = random_tensor({5, 4}, r2);
  const Tensor b = random_tensor({4, 3}, r2);
  Graph g;
  EXPECT_LT(max_abs_diff(kernels::matmul(a, b), test::naive_matmul(a, b)), 1e-10);
}

TEST(Matmul, ShapeMismatchThrows) {
  Graph g;
  EXPECT_THROW(matmul(g.constant(Tensor({2, 3})), g.constant(Tensor({2, 3}))), DimensionError);
}

TEST(LayerNorm, ConstantRowAndStandardizedRow) {
  Graph g;
  const Var gain = g.constant(Tensor({3}, 1.0));
  const Var bias = g.constant(Tensor({3}));
  const Tensor out = layer_norm(g.constant(Tensor::matrix(1, 3, {5, 5, 5})), gain, bias).value();
  for (const double v : out.values()) EXPECT_EQ(v, 0.0);
  const Tensor std_row =
      layer_norm(g.constant(Tensor::matrix(1, 2, {1, -1})), g.constant(Tensor({2}, 1.0)), g.constant(Tensor({2})), 1e-300)
          .value();
  EXPECT_NEAR(std_row[0], 1.0, 1e-12);
  EXPECT_NEAR(std_row[1], -1.0, 1e-12);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(3);
  const Tensor x = random_tensor({4, 7}, rng, 3.0);
  const Tensor p = kernels::softmax_rows(x);
  Tensor shifted = x;
  for (std::size_t r = 0; r < 4; ++r) {
    for (double& v : shifted.row(r)) v += 10.0 * static_cast<double>(r) - 3.0;
  }
  const Tensor q = kernels::softmax_rows(shifted);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (const double v : p.row(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_LT(max_abs_diff(p, q), 1e-12);
}

TEST(Softmax, UniformAndOverflowSafe) {
  const Tensor u = kernels::softmax_rows(Tensor::matrix(1, 4, {2, 2, 2, 2}));
  for (const double v : u.values()) EXPECT_NEAR(v, 0.25, 1e-15);
  const Tensor big = kernels::softmax_rows(Tensor::matrix(1, 2, {1000, 0}));
  EXPECT_TRUE(big.all_finite());
  EXPECT_NEAR(big[0], 1.0, 1e-12);
  EXPECT_NEAR(big[1], 0.0, 1e-12);
}

TEST(Attention, SingleKeyReturnsValue) {
  Graph g;
  const Tensor v = Tensor::matrix(1, 3, {1, 2, 3});
  const std::uint8_t mask[] = {1};
  const Tensor out = attention(g.constant(Tensor::matrix(1, 3, {0.3, -1, 2})),
                               g.constant(Tensor::matrix(1, 3, {4, 5, 6})), g.constant(v), mask)
                         .value();
  EXPECT_LT(max_abs_diff(out, v), 1e-15);
}

TEST(Attention, IdenticalKeysAverageVisibleValues) {
  Graph g;
  const Tensor q = Tensor::matrix(2, 2, {1, 2, -1, 0.5});
  const Tensor k = Tensor::matrix(3, 2, {0.2, 0.4, 0.2, 0.4, 0.2, 0.4});
  const Tensor v = Tensor::matrix(3, 2, {1, 0, 3, 2, 100, 100});
  const std::uint8_t mask[] = {1, 1, 0, 1, 1, 0};
  const Tensor out = attention(g.constant(q), g.constant(k), g.constant(v), mask).value();
  EXPECT_NEAR(out(0, 0), 2.0, 1e-12);
  EXPECT_NEAR(out(1, 1), 1.0, 1e-12);
}

TEST(Attention, FullyMaskedRowThrows) {
  Graph g;
  const Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const std::uint8_t mask[] = {1, 0, 0, 0};
  EXPECT_THROW(attention(g.constant(x), g.constant(x), g.constant(x), mask), DimensionError);
}

TEST(L2Normalize, KnownRowsAndZeroRow) {
  Graph g;
  const Tensor out = l2_normalize_rows(g.constant(Tensor::matrix(3, 2, {3, 4, 0.6, 0.8, 0, 0}))).value();
  EXPECT_NEAR(out(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(out(0, 1), 0.8, 1e-15);
  EXPECT_NEAR(out(1, 0), 0.6, 1e-15);
  EXPECT_EQ(out(2, 0), 0.0);
  EXPECT_EQ(out(2, 1), 0.0);
  EXPECT_TRUE(out.all_finite());
}

TEST(Dropout, EvalIsIdentity) {
  Rng rng(1);
  Graph g;
  const Tensor x = random_tensor({3, 5}, rng);
  EXPECT_EQ(max_abs_diff(dropout(g.constant(x), 0.5, false, 9).value(), x), 0.0);
  EXPECT_EQ(max_abs_diff(dropout(g.constant(x), 0.0, true, 9).value(), x), 0.0);
}

TEST(Dropout, UnbiasedInExpectation) {
  // Mean over 10^4 independent keys stays within 3 sigma of the input.
  const double rate = 0.3;
  const Tensor x = Tensor::matrix(1, 4, {1.0, -2.0, 0.5, 3.0});
  std::vector<double> mean(4, 0.0);
  constexpr int kDraws = 10000;
  for (int k = 0; k < kDraws; ++k) {
    Graph g;
    const Tensor y = dropout(g.constant(x), rate, true, static_cast<std::uint64_t>(k)).value();
    for (std::size_t i = 0; i < 4; ++i) mean[i] += y[i] / kDraws;
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const double sigma = std::abs(x[i]) * std::sqrt(rate / (1.0 - rate)) / std::sqrt(double(kDraws));
    EXPECT_LE(std::abs(mean[i] - x[i]), 3.0 * sigma) << "element " << i;
  }
}

TEST(Dropout, RowKeysMakeMasksBatchIndependent) {
  const Tensor x({2, 16}, 1.0);
  const std::uint64_t keys[] = {11, 22};
  const std::uint64_t swapped[] = {22, 11};
  Graph g;
  const Tensor a = dropout(g.constant(x), 0.5, true, 5, keys).value();
  const Tensor b = dropout(g.constant(x), 0.5, true, 5, swapped).value();
  for (std::size_t c = 0; c < 16; ++c) {
    EXPECT_EQ(a(0, c), b(1, c));
    EXPECT_EQ(a(1, c), b(0, c));
  }
}

TEST(EmbeddingLookup, OutOfRangeThrows) {
  Graph g;
  const std::size_t ids[] = {3};
  EXPECT_THROW(embedding_lookup(g.constant(Tensor({3, 2})), ids), DimensionError);
}

TEST(CrossEntropy, UniformLogitsGiveLogM) {
  Graph g;
  const std::size_t targets[] = {0, 2};
  const double loss = cross_entropy_rows(g.constant(Tensor({2, 5}, 0.7)), targets).value().item();
  EXPECT_NEAR(loss, std::log(5.0), 1e-14);
}

// Finite-difference checks: at least ten random shape/seed pairs per op.
class GradSuite : public ::testing::TestWithParam<int> {};

TEST_P(GradSuite, DifferentiableOps) {
  for (const auto& [name, report] : test::op_grad_reports(GetParam())) {
    EXPECT_TRUE(report.passed) << name << ": " << report.summary();
  }
}

INSTANTIATE_TEST_SUITE_P(TenSeeds, GradSuite, ::testing::Range(0, 10));

TEST(GradCheck, LinearOpIsExact) {
  Rng rng(5);
  const GradCheckReport r = grad_check([](Graph&, std::span<const Var> v) { return scale(v[0], 3.0); },
                                       {random_tensor({3, 3}, rng)});
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_abs_error[0], 1e-9);
}

TEST(GradCheck, ReportsWrongGradient) {
  // An op whose backward is deliberately off by a factor of two.
  const GradCheckFn broken = [](Graph& g, std::span<const Var> v) {
    const Var x = v[0];
    Tensor out = x.value();
    for (double& e : out.values()) e *= 3.0;
    return g.record(std::move(out), {x}, [x](Graph& gr, const Tensor& grad) {
      Tensor& gx = gr.grad(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 6.0 * grad[i];
    });
  };
  Rng rng(2);
  const GradCheckReport r = grad_check(broken, {random_tensor({2, 2}, rng)});
  EXPECT_FALSE(r.passed);
}

}  // namespace
}  // namespace clue
