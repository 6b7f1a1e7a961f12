#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "probmed/grad_check.hpp"
#include "probmed/graph.hpp"
#include "probmed/ops.hpp"
#include "probmed/tensor.hpp"

using namespace probmed::diff;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(r, c);
  for (double& v : t.data()) v = n(rng);
  return t;
}

}  // namespace

TEST(Tensor, ShapeMatchesDataLength) {
  EXPECT_THROW(Tensor(2, 3, std::vector<double>(5)), ShapeError);
  Tensor t(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t(1, 2), 6.0);
  EXPECT_THROW((void)t.item(), ShapeError);
}

TEST(Tensor, LogsumexpDoesNotOverflow) {
  const std::vector<double> v{1000.0, 1000.0};
  EXPECT_NEAR(logsumexp(v), 1000.0 + std::log(2.0), 1e-12);
  EXPECT_TRUE(std::isinf(logsumexp(std::vector<double>{})));
}

TEST(Ops, SoftmaxOfEqualLogitsIsUniform) {
  Graph g;
  Var x = g.constant(Tensor::row({0.0, 0.0}));
  const Tensor& s = softmax_rows(x).value();
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
}

TEST(Ops, IdentityMatmul) {
  std::mt19937_64 rng(1);
  Graph g;
  const Tensor a = random_tensor(3, 4, rng);
  EXPECT_EQ(matmul(g.constant(Tensor::identity(3)), g.constant(a)).value(), a);
}

TEST(Ops, ShapeErrorNamesOperationAndShapes) {
  Graph g;
  Var a = g.constant(Tensor(2, 3));
  Var b = g.constant(Tensor(4, 5));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("2"), std::string::npos);
    EXPECT_NE(msg.find("5"), std::string::npos);
  }
  EXPECT_THROW(add(a, b), ShapeError);
}

TEST(Ops, LargeLogitsStayFinite) {
  Graph g;
  Var x = g.constant(Tensor::row({1e4, -1e4, 5e3}));
  EXPECT_TRUE(log_softmax_rows(x).value().all_finite());
  EXPECT_TRUE(softmax_rows(x).value().all_finite());
}

TEST(Ops, Expm1IsAccurateNearZero) {
  Graph g;
  Var x = g.constant(Tensor::row({1e-12}));
  EXPECT_NEAR(expm1(x).value()[0], 1e-12, 1e-24);
}

TEST(Backward, SumOfSquares) {
  Graph g;
  Var x = g.parameter(Tensor::row({1.0, 2.0}));
  g.backward(sum(square(x)));
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 2.0);
  EXPECT_DOUBLE_EQ(g.grad(x)[1], 4.0);
}

TEST(Backward, ConstantPathGivesZeroGradient) {
  Graph g;
  Var x = g.parameter(Tensor::row({1.0, 2.0}));
  Var c = g.constant(Tensor::row({3.0, 4.0}));
  Var unused = g.parameter(Tensor::row({5.0}));
  g.backward(sum(c * c) + sum(x) * 0.0);
  EXPECT_DOUBLE_EQ(g.grad(unused)[0], 0.0);
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 0.0);
}

TEST(Backward, NonScalarLossThrows) {
  Graph g;
  Var x = g.parameter(Tensor::row({1.0, 2.0}));
  EXPECT_THROW(g.backward(square(x)), std::invalid_argument);
}

TEST(Backward, GradientsMatchParameterShapes) {
  std::mt19937_64 rng(2);
  Graph g;
  Var w = g.parameter(random_tensor(4, 3, rng));
  Var b = g.parameter(random_tensor(1, 3, rng));
  Var x = g.constant(random_tensor(5, 4, rng));
  g.backward(mean(relu(matmul(x, w) + b)));
  EXPECT_TRUE(g.grad(w).same_shape(g.value(w)));
  EXPECT_TRUE(g.grad(b).same_shape(g.value(b)));
}

TEST(GradCheck, ProductAndExp) {
  const std::vector<Tensor> xy{Tensor::scalar(2.0), Tensor::scalar(3.0)};
  EXPECT_LT(grad_check([](Graph&, std::span<const Var> p) { return p[0] * p[1]; }, xy), 1e-8);
  const std::vector<Tensor> zero{Tensor::scalar(0.0)};
  EXPECT_LT(grad_check([](Graph&, std::span<const Var> p) { return exp(p[0]); }, zero), 1e-8);
}

// Every differentiable op against central differences on random inputs.
TEST(GradCheck, AllOpsProperty) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<Tensor> params{random_tensor(3, 4, rng), random_tensor(4, 2, rng),
                                     random_tensor(1, 4, rng)};
    auto f = [](Graph&, std::span<const Var> p) {
      Var a = p[0];
      Var h = matmul(a, p[1]);
      Var t = transpose(h);
      Var pos = exp(a) + 0.5;
      Var terms = sum(log(pos)) + sum(sqrt(pos)) + sum(expm1(a * 0.1)) + sum(a / pos) +
                  sum(logsumexp_rows(a)) + sum(softmax_rows(h) * h) + sum(log_softmax_rows(t)) +
                  sum(l2_normalize_rows(a)) + sum(col_mean(a) * p[2]) + sum(row_sum(square(a))) +
                  sum(concat_rows(slice_rows(a, 0, 1), slice_rows(a, 2, 1))) +
                  sum(concat_cols(slice_cols(h, 1, 1), h)) + sum(gather(a, {{0, 1}, {2, 3}})) +
                  sum(clamp_min(a, -10.0)) - sum(a - p[2]) + mean(-a);
      return terms;
    };
    EXPECT_LT(grad_check(f, params), 1e-6) << "trial " << trial;
  }
}

TEST(Graph, TapeIsTopologicallyOrdered) {
  Graph g;
  Var a = g.parameter(Tensor::scalar(1.0));
  Var b = exp(a);
  Var c = b * a;
  EXPECT_LT(a.id(), b.id());
  EXPECT_LT(b.id(), c.id());
}
