#pragma once

#include <memory>
#include <span>

#include "sensprune/network.h"

namespace sensprune::detail {

// Stateless layer kernels. Parameters live in the owning Network and caches
// are passed in, so one Layer instance can be shared between network copies.
//
// Backward tensors may carry more rows than the cached batch: with
// `replicas` > 1, row r of a delta belongs to sample r / replicas.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Shape output_shape(const Shape& in) const = 0;
  virtual std::vector<Shape> param_shapes(const Shape& /*in*/) const { return {}; }

  virtual Tensor forward(const Tensor& in, std::span<const Tensor> params, LayerCache& cache) const = 0;
  virtual Tensor backward_input(const Tensor& delta, std::span<const Tensor> params, const LayerCache& cache,
                                std::size_t replicas) const = 0;
  virtual void accumulate_grads(const Tensor& /*delta*/, const LayerCache& /*cache*/, std::size_t /*replicas*/,
                                std::span<Tensor> /*grads*/) const {}
  virtual void accumulate_abs_grads(const Tensor& /*delta*/, const LayerCache& /*cache*/, std::size_t /*replicas*/,
                                    std::span<const double> /*row_weights*/, std::span<Tensor> /*out*/) const {}
};

std::shared_ptr<const Layer> make_layer(const LayerSpec& spec, const Shape& in);

}  // namespace sensprune::detail
