#include "sensprune/network.h"

#include <cmath>
#include <limits>
#include <numeric>

#include "layers.h"
#include "random.h"

namespace sensprune {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::affine: return "affine";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::relu: return "relu";
    case LayerKind::softmax_output: return "softmax_output";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (LayerKind k : {LayerKind::affine, LayerKind::conv2d, LayerKind::maxpool2d, LayerKind::relu,
                      LayerKind::softmax_output}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown layer kind '" + name + "'");
}

LayerSpec LayerSpec::affine(std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::affine;
  s.in_features = in;
  s.out_features = out;
  return s;
}

LayerSpec LayerSpec::conv2d(std::size_t filters, std::size_t kernel, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.filters = filters;
  s.kernel = kernel;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::maxpool2d(std::size_t pool) {
  LayerSpec s;
  s.kind = LayerKind::maxpool2d;
  s.pool = pool;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::softmax_output() {
  LayerSpec s;
  s.kind = LayerKind::softmax_output;
  return s;
}

Network::Network(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), specs_(std::move(layers)) {
  if (specs_.empty()) throw DimensionError("network needs at least one layer");
  if (input_shape_.empty() || shape_numel(input_shape_) == 0) {
    throw DimensionError("network input shape must be non-empty with positive dimensions");
  }
  Shape current = input_shape_;
  std::size_t fc = 0, conv = 0;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& spec = specs_[i];
    if (spec.kind == LayerKind::softmax_output && i + 1 != specs_.size()) {
      throw DimensionError("softmax output must be the last layer");
    }
    auto layer = detail::make_layer(spec, current);
    try {
      current = layer->output_shape(current);
    } catch (const DimensionError& e) {
      throw DimensionError("layer " + std::to_string(i) + " (" + to_string(spec.kind) + "): " + e.what());
    }
    param_offset_.push_back(params_.size());
    const auto shapes = layer->param_shapes(shapes_.empty() ? input_shape_ : shapes_.back());
    param_count_.push_back(shapes.size());
    if (!shapes.empty()) {
      const std::string group = spec.kind == LayerKind::conv2d ? "conv" + std::to_string(++conv) : "fc" + std::to_string(++fc);
      for (std::size_t p = 0; p < shapes.size(); ++p) {
        params_.emplace_back(shapes[p]);
        const bool bias = p == 1;
        info_.push_back(ParamInfo{group + (bias ? ".bias" : ".weight"), group, i, bias});
      }
    }
    layers_.push_back(std::move(layer));
    shapes_.push_back(current);
  }
  cache_.resize(layers_.size());
}

bool Network::has_softmax_output() const { return specs_.back().kind == LayerKind::softmax_output; }

std::vector<std::string> Network::groups() const {
  std::vector<std::string> out;
  for (const ParamInfo& p : info_) {
    if (out.empty() || out.back() != p.group) out.push_back(p.group);
  }
  return out;
}

std::size_t Network::num_params() const {
  std::size_t n = 0;
  for (const Tensor& p : params_) n += p.size();
  return n;
}

ParamSet Network::zeros_like_params() const {
  ParamSet out;
  out.reserve(params_.size());
  for (const Tensor& p : params_) out.emplace_back(p.shape());
  return out;
}

std::span<const Tensor> Network::layer_params(std::size_t layer) const {
  return std::span<const Tensor>(params_).subspan(param_offset_[layer], param_count_[layer]);
}

Tensor Network::run(const Tensor& x, std::vector<detail::LayerCache>& caches) const {
  if (x.rank() != input_shape_.size() + 1 || !std::equal(input_shape_.begin(), input_shape_.end(), x.shape().begin() + 1)) {
    throw DimensionError("network input must have shape [batch, " + shape_str(input_shape_).substr(1) + ", got " +
                         shape_str(x.shape()));
  }
  Tensor current = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    current = layers_[i]->forward(current, layer_params(i), caches[i]);
    if (!all_finite(current.data())) {
      throw NonFiniteError("non-finite activation after layer " + std::to_string(i) + " (" + to_string(specs_[i].kind) + ")");
    }
  }
  return current;
}

Tensor Network::forward(const Tensor& x) {
  cached_rows_ = 0;
  output_ = run(x, cache_);
  cached_rows_ = x.dim(0);
  return output_;
}

Tensor Network::predict(const Tensor& x) const {
  std::vector<detail::LayerCache> scratch(layers_.size());
  return run(x, scratch);
}

const Tensor& Network::output() const {
  if (!has_cache()) throw StateError("output() requested before forward()");
  return output_;
}

const Tensor& Network::logits() const {
  if (!has_cache()) throw StateError("logits() requested before forward()");
  return has_softmax_output() ? cache_.back().input : output_;
}

std::size_t Network::seed_layer(SeedPoint at) const {
  if (at == SeedPoint::logits) {
    if (!has_softmax_output()) throw StateError("logit seeding requires a softmax output layer");
    return layers_.size() - 1;
  }
  return layers_.size();
}

void Network::check_seed(const Tensor& seed, std::size_t replicas, SeedPoint at) const {
  if (!has_cache()) throw StateError("backward called before forward");
  if (replicas == 0) throw DimensionError("replicas must be positive");
  (void)at;
  const Shape& out = shapes_.back();
  if (seed.rank() != out.size() + 1 || seed.dim(0) != cached_rows_ * replicas ||
      !std::equal(out.begin(), out.end(), seed.shape().begin() + 1)) {
    throw DimensionError("backward seed must have shape [" + std::to_string(cached_rows_ * replicas) + ", " +
                         shape_str(out).substr(1) + ", got " + shape_str(seed.shape()));
  }
}

ParamSet Network::backward(const Tensor& seed, SeedPoint at) const {
  check_seed(seed, 1, at);
  ParamSet grads = zeros_like_params();
  Tensor delta = seed;
  for (std::size_t i = seed_layer(at); i-- > 0;) {
    std::span<Tensor> g = std::span<Tensor>(grads).subspan(param_offset_[i], param_count_[i]);
    layers_[i]->accumulate_grads(delta, cache_[i], 1, g);
    if (param_offset_[i] == 0) break;  // no parameters below this layer
    delta = layers_[i]->backward_input(delta, layer_params(i), cache_[i], 1);
  }
  return grads;
}

ParamSet Network::backward_abs(const Tensor& seed, std::size_t replicas, std::span<const double> row_weights,
                               SeedPoint at) const {
  check_seed(seed, replicas, at);
  if (row_weights.size() != seed.dim(0)) {
    throw DimensionError("backward_abs: " + std::to_string(row_weights.size()) + " row weights for " +
                         std::to_string(seed.dim(0)) + " seed rows");
  }
  ParamSet out = zeros_like_params();
  Tensor delta = seed;
  for (std::size_t i = seed_layer(at); i-- > 0;) {
    std::span<Tensor> o = std::span<Tensor>(out).subspan(param_offset_[i], param_count_[i]);
    layers_[i]->accumulate_abs_grads(delta, cache_[i], replicas, row_weights, o);
    if (param_offset_[i] == 0) break;
    delta = layers_[i]->backward_input(delta, layer_params(i), cache_[i], replicas);
  }
  return out;
}

void check_one_hot(const Tensor& targets, std::size_t rows, std::size_t classes) {
  if (targets.rank() != 2 || targets.dim(0) != rows || targets.dim(1) != classes) {
    throw DimensionError("targets must have shape [" + std::to_string(rows) + ", " + std::to_string(classes) + "], got " +
                         shape_str(targets.shape()));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t ones = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double v = targets.at(r, c);
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        throw std::invalid_argument("target row " + std::to_string(r) + " is not one-hot");
      }
    }
    if (ones != 1) throw std::invalid_argument("target row " + std::to_string(r) + " is not one-hot");
  }
}

double cross_entropy(const Tensor& probs, const Tensor& targets) {
  check_one_hot(targets, probs.dim(0), probs.dim(1));
  const std::size_t rows = probs.dim(0);
  const std::size_t classes = probs.dim(1);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < classes; ++c) {
      if (targets.at(r, c) == 1.0) total -= std::log(std::max(probs.at(r, c), std::numeric_limits<double>::min()));
    }
  }
  return total / static_cast<double>(rows);
}

LossAndGrad loss_and_grad(Network& net, const Tensor& x, const Tensor& targets) {
  if (!net.has_softmax_output()) throw std::invalid_argument("loss_and_grad requires a softmax output layer");
  const std::size_t rows = x.dim(0);
  const std::size_t classes = net.output_dim();
  check_one_hot(targets, rows, classes);
  net.forward(x);
  const Tensor& z = net.logits();
  const Tensor& p = net.output();

  // Log-sum-exp on the logits keeps the loss finite for saturated softmax.
  double loss = 0.0;
  Tensor seed(Shape{rows, classes});
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.raw() + r * classes;
    const double zmax = *std::max_element(zr, zr + classes);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) total += std::exp(zr[c] - zmax);
    const double lse = zmax + std::log(total);
    for (std::size_t c = 0; c < classes; ++c) {
      const double t = targets.at(r, c);
      if (t == 1.0) loss += lse - zr[c];
      seed.at(r, c) = (p.at(r, c) - t) * inv_rows;
    }
  }
  LossAndGrad out;
  out.loss = loss * inv_rows;
  if (!std::isfinite(out.loss)) throw NonFiniteError("cross-entropy loss is not finite");
  out.grads = net.backward(seed, SeedPoint::logits);
  return out;
}

void init_params(Network& net, InitScheme scheme, std::uint64_t seed) {
  (void)scheme;  // glorot_uniform is the only scheme
  detail::SplitMix64 rng(seed);
  const auto& info = net.param_info();
  for (std::size_t i = 0; i < info.size(); ++i) {
    Tensor& p = net.params()[i];
    if (info[i].is_bias) {
      p.fill(0.0);
      continue;
    }
    std::size_t fan_in = 0, fan_out = 0;
    const Shape& s = p.shape();
    if (s.size() == 2) {
      fan_out = s[0];
      fan_in = s[1];
    } else {
      const std::size_t receptive = s[2] * s[3];
      fan_out = s[0] * receptive;
      fan_in = s[1] * receptive;
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : p.data()) {
      v = (2.0 * rng.uniform() - 1.0) * limit;
    }
  }
}

Network lenet300() {
  return Network({784}, {LayerSpec::affine(784, 300), LayerSpec::relu(), LayerSpec::affine(300, 100), LayerSpec::relu(),
                         LayerSpec::affine(100, 10), LayerSpec::softmax_output()});
}

Network lenet5() {
  return Network({1, 28, 28}, {LayerSpec::conv2d(20, 5), LayerSpec::maxpool2d(2), LayerSpec::conv2d(50, 5),
                               LayerSpec::maxpool2d(2), LayerSpec::affine(800, 500), LayerSpec::relu(),
                               LayerSpec::affine(500, 10), LayerSpec::softmax_output()});
}

}  // namespace sensprune
