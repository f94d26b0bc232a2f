#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracle_fixtures.h"
#include "sensprune/data.h"
#include "sensprune/network.h"
#include "support.h"

using namespace sensprune;

namespace {

Network single_neuron(double w) {
  Network net({1}, {LayerSpec::affine(1, 1)});
  net.params()[0][0] = w;
  return net;
}

void load(Network& net, const std::vector<std::vector<double>>& values) {
  ASSERT_EQ(net.params().size(), values.size());
  for (std::size_t t = 0; t < values.size(); ++t) {
    ASSERT_EQ(net.params()[t].size(), values[t].size());
    std::copy(values[t].begin(), values[t].end(), net.params()[t].raw());
  }
}

Network oracle_mlp() {
  Network net({4}, {LayerSpec::affine(4, 5), LayerSpec::relu(), LayerSpec::affine(5, 3), LayerSpec::softmax_output()});
  load(net, oracle::mlp::params);
  return net;
}

Network oracle_conv_pool() {
  Network net({1, 6, 6}, {LayerSpec::conv2d(2, 3), LayerSpec::relu(), LayerSpec::maxpool2d(2), LayerSpec::affine(8, 3),
                          LayerSpec::softmax_output()});
  load(net, oracle::conv_pool::params);
  return net;
}

Network oracle_conv_stride() {
  Network net({2, 7, 7}, {LayerSpec::conv2d(3, 3, 2), LayerSpec::relu(), LayerSpec::affine(27, 4),
                          LayerSpec::softmax_output()});
  load(net, oracle::conv_stride::params);
  return net;
}

}  // namespace

TEST(Forward, AffineScalar) {
  Network net = single_neuron(2.0);
  EXPECT_DOUBLE_EQ(net.forward(Tensor::matrix({{3}})).item(), 6.0);
}

TEST(Forward, ReluLayer) {
  Network net({2}, {LayerSpec::relu()});
  EXPECT_EQ(net.forward(Tensor::matrix({{-1, 5}})), Tensor::matrix({{0, 5}}));
}

TEST(Forward, Lenet300ZeroImageZeroBiasGivesZeroLogits) {
  Network net = lenet300();
  init_params(net, InitScheme::glorot_uniform, 5);
  net.forward(Tensor(Shape{2, 784}));
  for (double v : net.logits().data()) EXPECT_EQ(v, 0.0);
  for (double p : net.output().data()) EXPECT_DOUBLE_EQ(p, 0.1);
}

TEST(Forward, PureWithRespectToParams) {
  std::mt19937_64 rng(1);
  auto [net, classes] = support::random_net(rng);
  const Tensor x = support::random_input(rng, net.input_shape(), 4);
  EXPECT_EQ(net.forward(x), net.forward(x));
  EXPECT_EQ(net.predict(x), net.forward(x));
}

TEST(Forward, ShapeMismatch) {
  Network net = lenet300();
  EXPECT_THROW(net.forward(Tensor(Shape{2, 783})), DimensionError);
  EXPECT_THROW(Network({4}, {LayerSpec::affine(5, 3)}), DimensionError);
  EXPECT_THROW(Network({4}, {LayerSpec::softmax_output(), LayerSpec::relu()}), std::invalid_argument);
  EXPECT_THROW(Network({1}, {LayerSpec::softmax_output()}), std::invalid_argument);
}

TEST(Forward, MatchesOracle) {
  struct Case {
    Network net;
    const std::vector<std::size_t>* shape;
    const std::vector<double>* x;
    const std::vector<double>* logits;
    const std::vector<double>* probs;
  };
  std::vector<Case> cases;
  cases.push_back({oracle_mlp(), &oracle::mlp::x_shape, &oracle::mlp::x, &oracle::mlp::logits, &oracle::mlp::probs});
  cases.push_back({oracle_conv_pool(), &oracle::conv_pool::x_shape, &oracle::conv_pool::x, &oracle::conv_pool::logits,
                   &oracle::conv_pool::probs});
  cases.push_back({oracle_conv_stride(), &oracle::conv_stride::x_shape, &oracle::conv_stride::x,
                   &oracle::conv_stride::logits, &oracle::conv_stride::probs});
  for (Case& c : cases) {
    const Tensor y = c.net.forward(Tensor(*c.shape, *c.x));
    for (std::size_t i = 0; i < y.size(); ++i) {
      EXPECT_NEAR(y[i], (*c.probs)[i], 1e-13);
      EXPECT_NEAR(c.net.logits()[i], (*c.logits)[i], 1e-13);
    }
  }
}

TEST(Backward, LinearDerivative) {
  Network net = single_neuron(2.0);
  net.forward(Tensor::matrix({{3}}));
  const ParamSet g = net.backward(Tensor::matrix({{1}}));
  EXPECT_DOUBLE_EQ(g[0][0], 3.0);
  EXPECT_DOUBLE_EQ(g[1][0], 1.0);
  EXPECT_DOUBLE_EQ(net.params()[0][0], 2.0);
}

TEST(Backward, ZeroSeedGivesZeroGradients) {
  std::mt19937_64 rng(2);
  auto [net, classes] = support::random_net(rng);
  net.forward(support::random_input(rng, net.input_shape(), 3));
  for (const Tensor& g : net.backward(Tensor(Shape{3, classes}))) {
    for (double v : g.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Backward, BeforeForwardIsStateError) {
  Network net = lenet300();
  EXPECT_THROW(net.backward(Tensor(Shape{1, 10})), StateError);
  EXPECT_THROW(net.output(), StateError);
}

TEST(Backward, SeedShapeChecked) {
  Network net = lenet300();
  net.forward(Tensor(Shape{2, 784}));
  EXPECT_THROW(net.backward(Tensor(Shape{2, 9})), DimensionError);
  EXPECT_THROW(net.backward(Tensor(Shape{3, 10})), DimensionError);
}

TEST(Backward, JacobianRowsMatchFiniteDifferences) {
  std::mt19937_64 rng(20);
  for (int trial = 0; trial < 20; ++trial) {
    auto [net, classes] = support::random_net(rng);
    if (net.num_params() > 100) continue;
    const Tensor x = support::random_input(rng, net.input_shape(), 1);
    for (std::size_t k = 0; k < classes; ++k) {
      net.forward(x);
      Tensor seed(Shape{1, classes});
      seed[k] = 1.0;
      const ParamSet g = net.backward(seed);
      for (std::size_t t = 0; t < g.size(); ++t) {
        for (std::size_t i = 0; i < g[t].size(); ++i) {
          const auto d = support::central_difference(net, t, i, 1e-6, [&] { return net.predict(x)[k]; });
          if (!d.smooth) continue;
          EXPECT_LT(support::rel_error(g[t][i], d.central, 1e-7), 1e-6) << "trial " << trial << " k " << k;
        }
      }
    }
  }
}

TEST(Backward, LinearInSeed) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto [net, classes] = support::random_net(rng);
    net.forward(support::random_input(rng, net.input_shape(), 3));
    Tensor s1(Shape{3, classes}), s2(Shape{3, classes});
    for (double& v : s1.data()) v = support::uniform(rng, -1, 1);
    for (double& v : s2.data()) v = support::uniform(rng, -1, 1);
    const double a = 0.7, b = -1.3;
    const ParamSet g = net.backward(add(scale(s1, a), scale(s2, b)));
    const ParamSet g1 = net.backward(s1), g2 = net.backward(s2);
    for (std::size_t t = 0; t < g.size(); ++t) {
      for (std::size_t i = 0; i < g[t].size(); ++i) EXPECT_NEAR(g[t][i], a * g1[t][i] + b * g2[t][i], 1e-10);
    }
  }
}

TEST(LossAndGrad, UniformLogits) {
  Network net({3}, {LayerSpec::affine(3, 10), LayerSpec::softmax_output()});
  Tensor y(Shape{1, 10});
  y[4] = 1.0;
  EXPECT_NEAR(loss_and_grad(net, Tensor(Shape{1, 3}, 1.0), y).loss, std::log(10.0), 1e-12);
  EXPECT_NEAR(std::log(10.0), 2.302585, 1e-6);
}

TEST(LossAndGrad, LargeMarginDrivesLossToZero) {
  Network net({1}, {LayerSpec::affine(1, 2), LayerSpec::softmax_output()});
  net.params()[0][0] = 1.0;
  net.params()[0][1] = -1.0;
  const Tensor y = Tensor::matrix({{1, 0}});
  double previous = 1.0;
  for (double margin : {0.5, 2.0, 8.0}) {
    const double loss = loss_and_grad(net, Tensor::matrix({{margin}}), y).loss;
    EXPECT_LT(loss, previous);
    previous = loss;
  }
  // Past ~20 the loss underflows; it must reach zero without turning into NaN.
  for (double margin : {100.0, 1000.0}) {
    const double loss = loss_and_grad(net, Tensor::matrix({{margin}}), y).loss;
    EXPECT_TRUE(std::isfinite(loss));
    EXPECT_LE(loss, 1e-12);
  }
}

TEST(LossAndGrad, RejectsNonOneHotTargets) {
  Network net({2}, {LayerSpec::affine(2, 3), LayerSpec::softmax_output()});
  const Tensor x(Shape{1, 2}, 1.0);
  EXPECT_THROW(loss_and_grad(net, x, Tensor::matrix({{0.5, 0.5, 0}})), std::invalid_argument);
  EXPECT_THROW(loss_and_grad(net, x, Tensor::matrix({{1, 1, 0}})), std::invalid_argument);
  EXPECT_THROW(loss_and_grad(net, x, Tensor::matrix({{0, 0, 0}})), std::invalid_argument);
}

TEST(LossAndGrad, MatchesOracle) {
  auto check = [](Network net, const std::vector<std::size_t>& shape, const std::vector<double>& x,
                  const std::vector<std::uint32_t>& labels, double loss,
                  const std::vector<std::vector<double>>& grads) {
    const Tensor y = one_hot(labels, net.output_dim());
    const LossAndGrad lg = loss_and_grad(net, Tensor(shape, x), y);
    EXPECT_NEAR(lg.loss, loss, 1e-13);
    for (std::size_t t = 0; t < grads.size(); ++t) {
      for (std::size_t i = 0; i < grads[t].size(); ++i) EXPECT_NEAR(lg.grads[t][i], grads[t][i], 1e-13);
    }
  };
  check(oracle_mlp(), oracle::mlp::x_shape, oracle::mlp::x, oracle::mlp::labels, oracle::mlp::loss,
        oracle::mlp::grads);
  check(oracle_conv_pool(), oracle::conv_pool::x_shape, oracle::conv_pool::x, oracle::conv_pool::labels,
        oracle::conv_pool::loss, oracle::conv_pool::grads);
  check(oracle_conv_stride(), oracle::conv_stride::x_shape, oracle::conv_stride::x, oracle::conv_stride::labels,
        oracle::conv_stride::loss, oracle::conv_stride::grads);
}

TEST(LossAndGrad, MatchesFiniteDifferences) {
  std::mt19937_64 rng(30);
  for (int trial = 0; trial < 20; ++trial) {
    auto [net, classes] = support::random_net(rng);
    const Tensor x = support::random_input(rng, net.input_shape(), 3);
    const Tensor y = support::random_targets(rng, 3, classes);
    const LossAndGrad lg = loss_and_grad(net, x, y);
    for (std::size_t t = 0; t < lg.grads.size(); ++t) {
      for (std::size_t i = 0; i < lg.grads[t].size(); ++i) {
        const auto d = support::central_difference(net, t, i, 1e-6, [&] { return cross_entropy(net.predict(x), y); });
        if (!d.smooth) continue;
        EXPECT_LT(support::rel_error(lg.grads[t][i], d.central, 1e-4), 1e-6);
      }
    }
  }
}

TEST(LossAndGrad, OutputSeedBoundedByOne) {
  // ∂L/∂z_k = p_k − y*_k for one sample.
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    auto [net, classes] = support::random_net(rng, 3.0);
    const Tensor x = support::random_input(rng, net.input_shape(), 4);
    const Tensor y = support::random_targets(rng, 4, classes);
    const Tensor p = net.forward(x);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_LE(std::fabs(p[i] - y[i]), 1.0);
  }
}

TEST(InitParams, DeterministicAndZeroBiases) {
  Network a = lenet300(), b = lenet300(), c = lenet300();
  init_params(a, InitScheme::glorot_uniform, 42);
  init_params(b, InitScheme::glorot_uniform, 42);
  init_params(c, InitScheme::glorot_uniform, 43);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_NE(a.params(), c.params());
  for (std::size_t t = 0; t < a.params().size(); ++t) {
    if (!a.param_info()[t].is_bias) continue;
    for (double v : a.params()[t].data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(InitParams, SampleStatistics) {
  // Uniform on ±sqrt(6/(fan_in+fan_out)) has standard deviation sqrt(2/(fan_in+fan_out)).
  Network net = lenet300();
  init_params(net, InitScheme::glorot_uniform, 9);
  const Tensor& w = net.params()[0];
  const double bound = std::sqrt(6.0 / (784.0 + 300.0));
  double m = 0.0, ss = 0.0;
  for (double v : w.data()) {
    EXPECT_LE(std::fabs(v), bound);
    m += v;
  }
  m /= static_cast<double>(w.size());
  for (double v : w.data()) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / static_cast<double>(w.size() - 1));
  EXPECT_NEAR(sd, std::sqrt(2.0 / (784.0 + 300.0)), 0.05 * std::sqrt(2.0 / (784.0 + 300.0)));
}

TEST(Architectures, ParameterCounts) {
  EXPECT_EQ(lenet300().num_params(), 266610u);
  EXPECT_EQ(lenet5().num_params(), 431080u);
  EXPECT_EQ(lenet300().groups(), (std::vector<std::string>{"fc1", "fc2", "fc3"}));
  EXPECT_EQ(lenet5().groups(), (std::vector<std::string>{"conv1", "conv2", "fc1", "fc2"}));
}

TEST(Architectures, Lenet5ForwardShape) {
  Network net = lenet5();
  init_params(net, InitScheme::glorot_uniform, 1);
  const Tensor y = net.forward(Tensor(Shape{2, 1, 28, 28}, 0.5));
  EXPECT_EQ(y.shape(), (Shape{2, 10}));
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < 10; ++k) s += y.at(r, k);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(MaxPool, TiesRouteToFirstIndex) {
  // Zero 1x1 kernel plus unit bias: all four pooled values tie, so the weight
  // gradient picks up the input at whichever position wins the tie.
  Network net({1, 2, 2}, {LayerSpec::conv2d(1, 1), LayerSpec::maxpool2d(2), LayerSpec::affine(1, 1)});
  net.params()[1][0] = 1.0;
  net.params()[2][0] = 1.0;
  net.forward(Tensor(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
  const ParamSet g = net.backward(Tensor::matrix({{1}}));
  EXPECT_DOUBLE_EQ(g[0][0], 1.0);
}

TEST(Relu, DerivativeAtZeroIsZero) {
  Network net({1}, {LayerSpec::affine(1, 1), LayerSpec::relu()});
  net.params()[0][0] = 1.0;
  net.forward(Tensor::matrix({{0.0}}));
  const ParamSet g = net.backward(Tensor::matrix({{1}}));
  EXPECT_EQ(g[1][0], 0.0);
}
