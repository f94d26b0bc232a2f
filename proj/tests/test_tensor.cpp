#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "sensprune/tensor.h"

using namespace sensprune;

TEST(Tensor, ShapeAndStorage) {
  Tensor t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_DOUBLE_EQ(t.at(1, 2), 1.5);
  EXPECT_THROW(t.dim(2), DimensionError);
  EXPECT_THROW(Tensor(Shape{2, 0}), DimensionError);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_DOUBLE_EQ(Tensor::scalar(4.0).item(), 4.0);
  EXPECT_THROW(t.item(), DimensionError);
}

TEST(Tensor, Reshape) {
  const Tensor t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  const Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  EXPECT_DOUBLE_EQ(r.at(2, 0), 5.0);
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
}

TEST(Matmul, IdentityCase) {
  const Tensor i = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor b = Tensor::matrix({{3, 4}, {5, 6}});
  EXPECT_EQ(matmul(i, b), b);
}

TEST(Matmul, HandArithmetic) {
  const Tensor c = matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}}));
  EXPECT_EQ(c.shape(), (Shape{1, 1}));
  EXPECT_DOUBLE_EQ(c.item(), 11.0);
}

TEST(Matmul, MatchesNaiveTripleLoop) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor a(Shape{7, 5}), b(Shape{5, 3});
  for (double& v : a.data()) v = u(rng);
  for (double& v : b.data()) v = u(rng);
  const Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double ref = 0.0;
      for (std::size_t k = 0; k < 5; ++k) ref += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(c.at(i, j), ref, 1e-12);
    }
  }
  const Tensor tn = matmul_tn(transpose(a), b);
  const Tensor nt = matmul_nt(a, transpose(b));
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_NEAR(tn[i], c[i], 1e-12);
    EXPECT_NEAR(nt[i], c[i], 1e-12);
  }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor(Shape{2, 3}), Tensor(Shape{4, 2}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4, 2]"), std::string::npos) << msg;
  }
  EXPECT_THROW(matmul(Tensor(Shape{2}), Tensor(Shape{2, 2})), DimensionError);
}

TEST(Matmul, IdentityIsExact) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Tensor a(Shape{4, 4});
  for (double& v : a.data()) v = n(rng);
  EXPECT_EQ(matmul(identity(4), a), a);
  EXPECT_EQ(matmul(a, identity(4)), a);
}

TEST(Matmul, OverflowRaises) {
  const Tensor big = Tensor::matrix({{1e200, 1e200}});
  EXPECT_THROW(matmul(big, Tensor::matrix({{1e200}, {1e200}})), NonFiniteError);
}

TEST(Elementwise, Definitions) {
  EXPECT_EQ(relu(Tensor::vector({-1, 0, 2})), Tensor::vector({0, 0, 2}));
  EXPECT_EQ(abs(Tensor::vector({-3, 4})), Tensor::vector({3, 4}));
  EXPECT_EQ(max_scalar(Tensor::vector({-0.5, 0.3}), 0.0), Tensor::vector({0, 0.3}));
  EXPECT_EQ(add(Tensor::vector({1, 2}), Tensor::vector({3, 4})), Tensor::vector({4, 6}));
  EXPECT_EQ(sub(Tensor::vector({1, 2}), Tensor::vector({3, 4})), Tensor::vector({-2, -2}));
  EXPECT_EQ(mul(Tensor::vector({1, 2}), Tensor::vector({3, 4})), Tensor::vector({3, 8}));
  EXPECT_EQ(scale(Tensor::vector({1, -2}), 0.5), Tensor::vector({0.5, -1}));
}

TEST(Elementwise, ShapeMismatch) {
  EXPECT_THROW(add(Tensor::vector({1, 2}), Tensor::vector({1, 2, 3})), DimensionError);
  EXPECT_THROW(mul(Tensor(Shape{2, 3}), Tensor(Shape{3, 2})), DimensionError);
}

TEST(Elementwise, ReluSplitsAbsExactly) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 10.0);
  Tensor x(Shape{1000});
  for (double& v : x.data()) v = n(rng);
  x[0] = 0.0;
  x[1] = -0.0;
  EXPECT_EQ(add(relu(x), relu(scale(x, -1.0))), abs(x));
}

TEST(Elementwise, NonFiniteRaisesInsteadOfPropagating) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(add(Tensor::vector({1e308}), Tensor::vector({1e308})), NonFiniteError);
  EXPECT_THROW(scale(Tensor::vector({1e300}), 1e300), NonFiniteError);
  EXPECT_THROW(check_finite(Tensor::vector({1.0, inf}), "probe"), NonFiniteError);
  EXPECT_THROW(check_finite(Tensor::vector({std::nan("")}), "probe"), NonFiniteError);
}

TEST(Reduce, SumMeanArgmax) {
  EXPECT_DOUBLE_EQ(sum(Tensor::vector({1, 2, 3})).item(), 6.0);
  EXPECT_DOUBLE_EQ(argmax(Tensor::vector({0.1, 0.7, 0.2}), 0).item(), 1.0);
  EXPECT_DOUBLE_EQ(mean(Tensor(Shape{1000}, 5.0)).item(), 5.0);
}

TEST(Reduce, Axes) {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(sum(m, 0), Tensor::vector({5, 7, 9}));
  EXPECT_EQ(sum(m, 1), Tensor::vector({6, 15}));
  EXPECT_EQ(mean(m, 1), Tensor::vector({2, 5}));
  EXPECT_EQ(argmax(m, 0), Tensor::vector({1, 1, 1}));
  EXPECT_THROW(sum(m, 2), DimensionError);
}

TEST(Reduce, ArgmaxTiesTakeLowestIndex) {
  EXPECT_DOUBLE_EQ(argmax(Tensor::vector({0.3, 0.7, 0.7, 0.1}), 0).item(), 1.0);
  const Tensor m = Tensor::matrix({{2, 2}, {1, 3}});
  EXPECT_EQ(argmax_rows(m), (std::vector<std::size_t>{0, 1}));
}
