#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sensprune/tensor.h"

namespace sensprune {

/// One tensor per learnable parameter tensor, in network order.
using ParamSet = std::vector<Tensor>;

/// Misuse of stateful network API, e.g. backward without a preceding forward.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class LayerKind { affine, conv2d, maxpool2d, relu, softmax_output };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // affine
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  // conv2d
  std::size_t filters = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  // maxpool2d; window and stride are equal
  std::size_t pool = 0;

  static LayerSpec affine(std::size_t in, std::size_t out);
  static LayerSpec conv2d(std::size_t filters, std::size_t kernel, std::size_t stride = 1);
  static LayerSpec maxpool2d(std::size_t pool);
  static LayerSpec relu();
  static LayerSpec softmax_output();

  bool operator==(const LayerSpec&) const = default;
};

struct ParamInfo {
  std::string name;   // e.g. "fc1.weight"
  std::string group;  // parameterized layer name, e.g. "fc1"
  std::size_t layer = 0;
  bool is_bias = false;
};

/// Where a backward seed is injected. `output` seeds y itself (through the
/// softmax Jacobian when the network ends in softmax); `logits` seeds the
/// softmax input.
enum class SeedPoint { output, logits };

namespace detail {
class Layer;
struct LayerCache {
  Tensor input;
  Tensor aux;  // relu: input copy; conv: im2col patches; softmax: probabilities
  std::vector<std::uint32_t> index;  // maxpool argmax positions
};
}  // namespace detail

/// Feed-forward network: an ordered list of layers with their parameters and
/// the activation cache of the most recent forward pass.
///
/// Batches carry the sample index on axis 0. Per-sample input shapes are
/// {features} for fully connected stacks and {channels, height, width} for
/// convolutional ones.
class Network {
 public:
  Network(Shape input_shape, std::vector<LayerSpec> layers);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return shapes_.back(); }
  std::size_t output_dim() const { return shape_numel(shapes_.back()); }
  const std::vector<LayerSpec>& specs() const { return specs_; }
  bool has_softmax_output() const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const std::vector<ParamInfo>& param_info() const { return info_; }
  /// Names of parameterized layers in order ("fc1", "conv1", ...).
  std::vector<std::string> groups() const;
  std::size_t num_params() const;
  ParamSet zeros_like_params() const;

  /// Runs the batch through every layer and caches activations.
  Tensor forward(const Tensor& x);
  /// Forward pass that leaves the cache untouched.
  Tensor predict(const Tensor& x) const;

  bool has_cache() const { return cached_rows_ > 0; }
  std::size_t cached_batch() const { return cached_rows_; }
  const Tensor& output() const;
  /// Softmax input of the cached pass, or the output if there is no softmax.
  const Tensor& logits() const;

  /// Gradient of Σ_rows seed·y with respect to every parameter, summed over
  /// the batch. Does not modify parameters.
  ParamSet backward(const Tensor& seed, SeedPoint at = SeedPoint::output) const;

  /// Multi-seed backward pass. `seed` has replicas × batch rows laid out
  /// sample-major (row r belongs to sample r / replicas). For every parameter
  /// w returns Σ_r row_weight[r]·|∂(seed_r·y)/∂w|, the absolute value being
  /// taken per row after summing over shared-parameter application sites.
  ParamSet backward_abs(const Tensor& seed, std::size_t replicas, std::span<const double> row_weights,
                        SeedPoint at = SeedPoint::output) const;

 private:
  Tensor run(const Tensor& x, std::vector<detail::LayerCache>& caches) const;
  void check_seed(const Tensor& seed, std::size_t replicas, SeedPoint at) const;
  std::size_t seed_layer(SeedPoint at) const;
  std::span<const Tensor> layer_params(std::size_t layer) const;

  Shape input_shape_;
  std::vector<LayerSpec> specs_;
  std::vector<std::shared_ptr<const detail::Layer>> layers_;
  std::vector<Shape> shapes_;  // per-sample shape after each layer
  std::vector<std::size_t> param_offset_;  // first param index per layer
  std::vector<std::size_t> param_count_;
  ParamSet params_;
  std::vector<ParamInfo> info_;
  std::vector<detail::LayerCache> cache_;
  Tensor output_;
  std::size_t cached_rows_ = 0;
};

struct LossAndGrad {
  double loss = 0.0;  // mean cross-entropy over the batch
  ParamSet grads;
};

/// Mean softmax cross-entropy and its parameter gradient. The network must
/// end in a softmax output layer; `targets` rows must be one-hot. Leaves the
/// forward cache populated for this batch.
LossAndGrad loss_and_grad(Network& net, const Tensor& x, const Tensor& targets);

/// Mean cross-entropy of probability rows against one-hot targets.
double cross_entropy(const Tensor& probs, const Tensor& targets);
void check_one_hot(const Tensor& targets, std::size_t rows, std::size_t classes);

enum class InitScheme { glorot_uniform };

/// Weights uniform in ±sqrt(6/(fan_in+fan_out)), biases zero.
void init_params(Network& net, InitScheme scheme, std::uint64_t seed);

/// 784-300-100-10 fully connected ReLU network with softmax output.
Network lenet300();
/// conv20@5 - pool2 - conv50@5 - pool2 - fc500 - relu - fc10, softmax output.
Network lenet5();

}  // namespace sensprune
