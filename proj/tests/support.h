#pragma once

// Helpers shared by the unit tests and the acceptance binary: random small
// networks and finite-difference reference computations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "sensprune/data.h"
#include "sensprune/network.h"
#include "sensprune/sensitivity.h"

namespace support {

using namespace sensprune;

inline std::size_t uniform_int(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct RandomNet {
  Network net;
  std::size_t classes;
};

namespace detail {

inline std::size_t flat_dim(const Shape& input, const std::vector<LayerSpec>& layers) {
  return Network(input, layers).output_dim();
}

inline std::vector<LayerSpec> build(std::mt19937_64& rng, Shape& input, std::size_t classes) {
  std::vector<LayerSpec> layers;
  switch (uniform_int(rng, 0, 2)) {
    case 0: {  // 2-4 affine layers
      input = {uniform_int(rng, 2, 5)};
      std::size_t width = input[0];
      const std::size_t hidden = uniform_int(rng, 1, 3);
      for (std::size_t h = 0; h < hidden; ++h) {
        const std::size_t next = uniform_int(rng, 2, 6);
        layers.push_back(LayerSpec::affine(width, next));
        layers.push_back(LayerSpec::relu());
        width = next;
      }
      layers.push_back(LayerSpec::affine(width, classes));
      break;
    }
    case 1: {  // conv, optional pool, affine
      const std::size_t side = 2 * uniform_int(rng, 2, 3);
      input = {uniform_int(rng, 1, 2), side, side};
      const std::size_t kernel = uniform_int(rng, 2, 3);
      const std::size_t stride = uniform_int(rng, 1, 2);
      layers.push_back(LayerSpec::conv2d(uniform_int(rng, 1, 3), kernel, stride));
      layers.push_back(LayerSpec::relu());
      const Shape after = Network(input, layers).output_shape();
      if (after[1] % 2 == 0 && after[2] % 2 == 0 && uniform_int(rng, 0, 1)) layers.push_back(LayerSpec::maxpool2d(2));
      layers.push_back(LayerSpec::affine(flat_dim(input, layers), classes));
      break;
    }
    default: {  // conv, conv, affine
      input = {1, uniform_int(rng, 5, 6), uniform_int(rng, 5, 6)};
      layers.push_back(LayerSpec::conv2d(uniform_int(rng, 1, 2), 2));
      layers.push_back(LayerSpec::relu());
      layers.push_back(LayerSpec::conv2d(uniform_int(rng, 1, 2), 2, uniform_int(rng, 1, 2)));
      layers.push_back(LayerSpec::relu());
      layers.push_back(LayerSpec::affine(flat_dim(input, layers), classes));
      break;
    }
  }
  layers.push_back(LayerSpec::softmax_output());
  return layers;
}

}  // namespace detail

/// Random classifier with 2-4 parameterized layers and at most 200
/// parameters, mixing affine, ReLU, conv and pooling layers. Parameters,
/// biases included, are uniform in ±scale.
inline RandomNet random_net(std::mt19937_64& rng, double scale = 0.8) {
  for (;;) {
    const std::size_t classes = uniform_int(rng, 2, 4);
    Shape input;
    std::vector<LayerSpec> layers = detail::build(rng, input, classes);
    Network net(input, layers);
    if (net.num_params() > 200) continue;
    for (Tensor& p : net.params()) {
      for (double& v : p.data()) v = uniform(rng, -scale, scale);
    }
    return {std::move(net), classes};
  }
}

inline Tensor random_input(std::mt19937_64& rng, const Shape& sample_shape, std::size_t batch) {
  Shape s{batch};
  s.insert(s.end(), sample_shape.begin(), sample_shape.end());
  Tensor x(s);
  for (double& v : x.data()) v = uniform(rng, 0.0, 1.0);
  return x;
}

inline Tensor random_targets(std::mt19937_64& rng, std::size_t batch, std::size_t classes) {
  Tensor y(Shape{batch, classes});
  for (std::size_t i = 0; i < batch; ++i) y.at(i, uniform_int(rng, 0, classes - 1)) = 1.0;
  return y;
}

/// Relative error with an absolute floor so that two values both within
/// `floor` of zero count as equal.
inline double rel_error(double a, double b, double floor = 1e-9) {
  const double diff = std::fabs(a - b);
  const double mag = std::max(std::fabs(a), std::fabs(b));
  if (mag < floor) return diff < floor ? 0.0 : diff / floor;
  return diff / mag;
}

inline Tensor sample(const Tensor& x, std::size_t i) {
  Shape s = x.shape();
  const std::size_t width = x.size() / s[0];
  s[0] = 1;
  Tensor out(s);
  std::copy(x.raw() + i * width, x.raw() + (i + 1) * width, out.raw());
  return out;
}

/// Outcome of a central difference, with the one-sided slopes used to spot
/// a kink (ReLU or max-pool switching) inside the stencil.
struct Difference {
  double central = 0.0;
  bool smooth = true;
};

template <typename F>
Difference central_difference(Network& net, std::size_t t, std::size_t i, double h, F&& f) {
  double& w = net.params()[t][i];
  const double w0 = w;
  const double f0 = f();
  w = w0 + h;
  const double fp = f();
  w = w0 - h;
  const double fm = f();
  w = w0;
  Difference d;
  d.central = (fp - fm) / (2.0 * h);
  const double right = (fp - f0) / h, left = (f0 - fm) / h;
  d.smooth = std::fabs(right - left) <= 1e-4 * std::max({1.0, std::fabs(right), std::fabs(left)});
  return d;
}

/// Finite-difference Σ_k α_k |Δy_k/Δw| averaged over samples, with y the
/// probabilities or the logits. `smooth` turns false if any stencil crossed
/// a kink.
inline double fd_sensitivity(Network& net, const Tensor& x, const Tensor* targets, SensitivityMode mode,
                             SensitivityOutput output, std::size_t t, std::size_t i, double h, bool& smooth) {
  const std::size_t n = x.dim(0);
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const Tensor xs = sample(x, s);
    Tensor y_plus, y_minus, y0;
    auto eval = [&] {
      net.forward(xs);
      return output == SensitivityOutput::logits ? net.logits() : net.output();
    };
    double& w = net.params()[t][i];
    const double w0 = w;
    y0 = eval();
    w = w0 + h;
    y_plus = eval();
    w = w0 - h;
    y_minus = eval();
    w = w0;
    const std::size_t classes = y0.size();
    for (std::size_t k = 0; k < classes; ++k) {
      const double alpha = mode == SensitivityMode::unspecific ? 1.0 / static_cast<double>(classes) : targets->at(s, k);
      if (alpha == 0.0) continue;
      const double right = (y_plus[k] - y0[k]) / h, left = (y0[k] - y_minus[k]) / h;
      if (std::fabs(right - left) > 1e-4 * std::max({1.0, std::fabs(right), std::fabs(left)})) smooth = false;
      total += alpha * std::fabs((y_plus[k] - y_minus[k]) / (2.0 * h));
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace support
