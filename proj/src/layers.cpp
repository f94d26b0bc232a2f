#include "layers.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace sensprune::detail {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using ConstMap = Eigen::Map<const RowMat>;
using Idx = Eigen::Index;

Idx ix(std::size_t v) { return static_cast<Idx>(v); }

Shape with_rows(std::size_t rows, const Shape& per_sample) {
  Shape s{rows};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

Shape per_sample_shape(const Tensor& t) { return Shape(t.shape().begin() + 1, t.shape().end()); }

// Sums the replica rows of each sample: [batch*replicas, n] -> [batch, n].
RowMat collapse_replicas(const Tensor& delta, std::size_t replicas, std::size_t width) {
  const std::size_t rows = delta.dim(0);
  ConstMap d(delta.raw(), ix(rows), ix(width));
  if (replicas == 1) return d;
  RowMat out = RowMat::Zero(ix(rows / replicas), ix(width));
  for (std::size_t r = 0; r < rows; ++r) out.row(ix(r / replicas)) += d.row(ix(r));
  return out;
}

class Affine final : public Layer {
 public:
  Affine(std::size_t in, std::size_t out) : in_(in), out_(out) {}

  Shape output_shape(const Shape& in) const override {
    if (shape_numel(in) != in_) {
      throw DimensionError("affine layer expects " + std::to_string(in_) + " input features, got shape " + shape_str(in));
    }
    return {out_};
  }
  std::vector<Shape> param_shapes(const Shape&) const override { return {{out_, in_}, {out_}}; }

  Tensor forward(const Tensor& in, std::span<const Tensor> params, LayerCache& cache) const override {
    const std::size_t rows = in.dim(0);
    cache.input = in;
    Tensor out(Shape{rows, out_});
    Map y(out.raw(), ix(rows), ix(out_));
    y.noalias() = ConstMap(in.raw(), ix(rows), ix(in_)) * ConstMap(params[0].raw(), ix(out_), ix(in_)).transpose();
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(params[1].raw(), ix(out_));
    return out;
  }

  Tensor backward_input(const Tensor& delta, std::span<const Tensor> params, const LayerCache& cache,
                        std::size_t) const override {
    const std::size_t rows = delta.dim(0);
    Tensor dx(with_rows(rows, per_sample_shape(cache.input)));
    Map(dx.raw(), ix(rows), ix(in_)).noalias() =
        ConstMap(delta.raw(), ix(rows), ix(out_)) * ConstMap(params[0].raw(), ix(out_), ix(in_));
    return dx;
  }

  void accumulate_grads(const Tensor& delta, const LayerCache& cache, std::size_t replicas,
                        std::span<Tensor> grads) const override {
    const std::size_t batch = cache.input.dim(0);
    const RowMat d = collapse_replicas(delta, replicas, out_);
    ConstMap x(cache.input.raw(), ix(batch), ix(in_));
    Map(grads[0].raw(), ix(out_), ix(in_)).noalias() += d.transpose() * x;
    Eigen::Map<Eigen::RowVectorXd>(grads[1].raw(), ix(out_)) += d.colwise().sum();
  }

  // ∂(seed_r·y)/∂W_ij = δ_ri·x_sj for a single application site, so
  // Σ_r w_r|δ_ri||x_sj| factors into Aᵀ|X| with A_si = Σ_{r∈s} w_r|δ_ri|.
  void accumulate_abs_grads(const Tensor& delta, const LayerCache& cache, std::size_t replicas,
                            std::span<const double> row_weights, std::span<Tensor> out) const override {
    const std::size_t batch = cache.input.dim(0);
    const std::size_t rows = delta.dim(0);
    ConstMap d(delta.raw(), ix(rows), ix(out_));
    RowMat a = RowMat::Zero(ix(batch), ix(out_));
    for (std::size_t r = 0; r < rows; ++r) {
      if (row_weights[r] != 0.0) a.row(ix(r / replicas)) += row_weights[r] * d.row(ix(r)).cwiseAbs();
    }
    const RowMat x_abs = ConstMap(cache.input.raw(), ix(batch), ix(in_)).cwiseAbs();
    Map(out[0].raw(), ix(out_), ix(in_)).noalias() += a.transpose() * x_abs;
    Eigen::Map<Eigen::RowVectorXd>(out[1].raw(), ix(out_)) += a.colwise().sum();
  }

 private:
  std::size_t in_, out_;
};

class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t filters, std::size_t kernel, std::size_t stride, const Shape& in)
      : filters_(filters), kernel_(kernel), stride_(stride) {
    if (in.size() != 3) throw DimensionError("conv2d expects {channels, height, width} input, got " + shape_str(in));
    if (kernel == 0 || stride == 0 || filters == 0) throw DimensionError("conv2d needs positive filters, kernel and stride");
    channels_ = in[0];
    height_ = in[1];
    width_ = in[2];
    if (height_ < kernel_ || width_ < kernel_) {
      throw DimensionError("conv2d kernel " + std::to_string(kernel_) + " larger than input " + shape_str(in));
    }
    out_h_ = (height_ - kernel_) / stride_ + 1;
    out_w_ = (width_ - kernel_) / stride_ + 1;
  }

  Shape output_shape(const Shape&) const override { return {filters_, out_h_, out_w_}; }
  std::vector<Shape> param_shapes(const Shape&) const override {
    return {{filters_, channels_, kernel_, kernel_}, {filters_}};
  }

  Tensor forward(const Tensor& in, std::span<const Tensor> params, LayerCache& cache) const override {
    const std::size_t batch = in.dim(0);
    const std::size_t positions = out_h_ * out_w_;
    const std::size_t k = patch_size();
    cache.aux = Tensor(Shape{batch, positions, k});
    Tensor out(Shape{batch, filters_, out_h_, out_w_});
    ConstMap w(params[0].raw(), ix(filters_), ix(k));
    Eigen::Map<const Eigen::VectorXd> b(params[1].raw(), ix(filters_));
    const std::size_t in_stride = channels_ * height_ * width_;
    for (std::size_t s = 0; s < batch; ++s) {
      double* patches = cache.aux.raw() + s * positions * k;
      im2col(in.raw() + s * in_stride, patches);
      Map y(out.raw() + s * filters_ * positions, ix(filters_), ix(positions));
      y.noalias() = w * ConstMap(patches, ix(positions), ix(k)).transpose();
      y.colwise() += b;
    }
    return out;
  }

  Tensor backward_input(const Tensor& delta, std::span<const Tensor> params, const LayerCache&,
                        std::size_t) const override {
    const std::size_t rows = delta.dim(0);
    const std::size_t positions = out_h_ * out_w_;
    const std::size_t k = patch_size();
    Tensor dx(Shape{rows, channels_, height_, width_});
    ConstMap w(params[0].raw(), ix(filters_), ix(k));
    RowMat dpatch(ix(positions), ix(k));
    for (std::size_t r = 0; r < rows; ++r) {
      dpatch.noalias() = ConstMap(delta.raw() + r * filters_ * positions, ix(filters_), ix(positions)).transpose() * w;
      col2im(dpatch.data(), dx.raw() + r * channels_ * height_ * width_);
    }
    return dx;
  }

  void accumulate_grads(const Tensor& delta, const LayerCache& cache, std::size_t replicas,
                        std::span<Tensor> grads) const override {
    const std::size_t positions = out_h_ * out_w_;
    const std::size_t k = patch_size();
    const RowMat d = collapse_replicas(delta, replicas, filters_ * positions);
    Map gw(grads[0].raw(), ix(filters_), ix(k));
    Eigen::Map<Eigen::VectorXd> gb(grads[1].raw(), ix(filters_));
    for (Idx s = 0; s < d.rows(); ++s) {
      ConstMap ds(d.data() + s * d.cols(), ix(filters_), ix(positions));
      gw.noalias() += ds * ConstMap(cache.aux.raw() + static_cast<std::size_t>(s) * positions * k, ix(positions), ix(k));
      gb += ds.rowwise().sum();
    }
  }

  // Shared weights: each row's gradient is summed over all application sites
  // before the absolute value is taken.
  void accumulate_abs_grads(const Tensor& delta, const LayerCache& cache, std::size_t replicas,
                            std::span<const double> row_weights, std::span<Tensor> out) const override {
    const std::size_t rows = delta.dim(0);
    const std::size_t positions = out_h_ * out_w_;
    const std::size_t k = patch_size();
    Map ow(out[0].raw(), ix(filters_), ix(k));
    Eigen::Map<Eigen::VectorXd> ob(out[1].raw(), ix(filters_));
    RowMat g(ix(filters_), ix(k));
    for (std::size_t r = 0; r < rows; ++r) {
      if (row_weights[r] == 0.0) continue;
      ConstMap dr(delta.raw() + r * filters_ * positions, ix(filters_), ix(positions));
      const std::size_t s = r / replicas;
      g.noalias() = dr * ConstMap(cache.aux.raw() + s * positions * k, ix(positions), ix(k));
      ow += row_weights[r] * g.cwiseAbs();
      ob += row_weights[r] * dr.rowwise().sum().cwiseAbs();
    }
  }

 private:
  std::size_t patch_size() const { return channels_ * kernel_ * kernel_; }

  void im2col(const double* x, double* patches) const {
    const std::size_t k = patch_size();
    for (std::size_t oi = 0; oi < out_h_; ++oi) {
      for (std::size_t oj = 0; oj < out_w_; ++oj) {
        double* p = patches + (oi * out_w_ + oj) * k;
        for (std::size_t c = 0; c < channels_; ++c) {
          for (std::size_t ki = 0; ki < kernel_; ++ki) {
            const double* src = x + (c * height_ + oi * stride_ + ki) * width_ + oj * stride_;
            std::copy(src, src + kernel_, p);
            p += kernel_;
          }
        }
      }
    }
  }

  void col2im(const double* dpatches, double* dx) const {
    const std::size_t k = patch_size();
    for (std::size_t oi = 0; oi < out_h_; ++oi) {
      for (std::size_t oj = 0; oj < out_w_; ++oj) {
        const double* p = dpatches + (oi * out_w_ + oj) * k;
        for (std::size_t c = 0; c < channels_; ++c) {
          for (std::size_t ki = 0; ki < kernel_; ++ki) {
            double* dst = dx + (c * height_ + oi * stride_ + ki) * width_ + oj * stride_;
            for (std::size_t kj = 0; kj < kernel_; ++kj) dst[kj] += p[kj];
            p += kernel_;
          }
        }
      }
    }
  }

  std::size_t filters_, kernel_, stride_;
  std::size_t channels_ = 0, height_ = 0, width_ = 0, out_h_ = 0, out_w_ = 0;
};

class MaxPool2d final : public Layer {
 public:
  MaxPool2d(std::size_t pool, const Shape& in) : pool_(pool) {
    if (in.size() != 3) throw DimensionError("maxpool2d expects {channels, height, width} input, got " + shape_str(in));
    if (pool == 0 || in[1] < pool || in[2] < pool) {
      throw DimensionError("maxpool2d window " + std::to_string(pool) + " does not fit input " + shape_str(in));
    }
    channels_ = in[0];
    height_ = in[1];
    width_ = in[2];
    out_h_ = height_ / pool_;
    out_w_ = width_ / pool_;
  }

  Shape output_shape(const Shape&) const override { return {channels_, out_h_, out_w_}; }

  Tensor forward(const Tensor& in, std::span<const Tensor>, LayerCache& cache) const override {
    const std::size_t batch = in.dim(0);
    const std::size_t in_size = channels_ * height_ * width_;
    const std::size_t out_size = channels_ * out_h_ * out_w_;
    Tensor out(Shape{batch, channels_, out_h_, out_w_});
    cache.index.assign(batch * out_size, 0);
    for (std::size_t s = 0; s < batch; ++s) {
      const double* x = in.raw() + s * in_size;
      for (std::size_t c = 0; c < channels_; ++c) {
        for (std::size_t oi = 0; oi < out_h_; ++oi) {
          for (std::size_t oj = 0; oj < out_w_; ++oj) {
            std::size_t best = (c * height_ + oi * pool_) * width_ + oj * pool_;
            for (std::size_t pi = 0; pi < pool_; ++pi) {
              for (std::size_t pj = 0; pj < pool_; ++pj) {
                const std::size_t at = (c * height_ + oi * pool_ + pi) * width_ + oj * pool_ + pj;
                if (x[at] > x[best]) best = at;  // strict: first index wins ties
              }
            }
            const std::size_t o = (c * out_h_ + oi) * out_w_ + oj;
            out[s * out_size + o] = x[best];
            cache.index[s * out_size + o] = static_cast<std::uint32_t>(best);
          }
        }
      }
    }
    return out;
  }

  Tensor backward_input(const Tensor& delta, std::span<const Tensor>, const LayerCache& cache,
                        std::size_t replicas) const override {
    const std::size_t rows = delta.dim(0);
    const std::size_t in_size = channels_ * height_ * width_;
    const std::size_t out_size = channels_ * out_h_ * out_w_;
    Tensor dx(Shape{rows, channels_, height_, width_});
    for (std::size_t r = 0; r < rows; ++r) {
      const std::uint32_t* idx = cache.index.data() + (r / replicas) * out_size;
      double* d = dx.raw() + r * in_size;
      const double* g = delta.raw() + r * out_size;
      for (std::size_t o = 0; o < out_size; ++o) d[idx[o]] += g[o];
    }
    return dx;
  }

 private:
  std::size_t pool_;
  std::size_t channels_ = 0, height_ = 0, width_ = 0, out_h_ = 0, out_w_ = 0;
};

class Relu final : public Layer {
 public:
  Shape output_shape(const Shape& in) const override { return in; }

  Tensor forward(const Tensor& in, std::span<const Tensor>, LayerCache& cache) const override {
    cache.aux = in;
    return relu(in);
  }

  // Derivative at exactly zero is taken as 0.
  Tensor backward_input(const Tensor& delta, std::span<const Tensor>, const LayerCache& cache,
                        std::size_t replicas) const override {
    const std::size_t rows = delta.dim(0);
    const std::size_t width = delta.size() / rows;
    Tensor dx(delta.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const double* pre = cache.aux.raw() + (r / replicas) * width;
      const double* g = delta.raw() + r * width;
      double* d = dx.raw() + r * width;
      for (std::size_t i = 0; i < width; ++i) d[i] = pre[i] > 0.0 ? g[i] : 0.0;
    }
    return dx;
  }
};

class SoftmaxOutput final : public Layer {
 public:
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 1) throw DimensionError("softmax output expects a feature vector, got " + shape_str(in));
    if (in[0] < 2) throw DimensionError("softmax output needs at least 2 classes");
    return in;
  }

  Tensor forward(const Tensor& in, std::span<const Tensor>, LayerCache& cache) const override {
    const std::size_t rows = in.dim(0);
    const std::size_t classes = in.dim(1);
    Tensor out(in.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const double* z = in.raw() + r * classes;
      double* p = out.raw() + r * classes;
      const double zmax = *std::max_element(z, z + classes);
      double total = 0.0;
      for (std::size_t c = 0; c < classes; ++c) total += (p[c] = std::exp(z[c] - zmax));
      for (std::size_t c = 0; c < classes; ++c) p[c] /= total;
    }
    cache.input = in;
    cache.aux = out;
    return out;
  }

  // δz = p ⊙ (δ − ⟨δ, p⟩)
  Tensor backward_input(const Tensor& delta, std::span<const Tensor>, const LayerCache& cache,
                        std::size_t replicas) const override {
    const std::size_t rows = delta.dim(0);
    const std::size_t classes = delta.dim(1);
    Tensor dz(delta.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const double* p = cache.aux.raw() + (r / replicas) * classes;
      const double* g = delta.raw() + r * classes;
      double dot = 0.0;
      for (std::size_t c = 0; c < classes; ++c) dot += g[c] * p[c];
      for (std::size_t c = 0; c < classes; ++c) dz[r * classes + c] = p[c] * (g[c] - dot);
    }
    return dz;
  }
};

}  // namespace

std::shared_ptr<const Layer> make_layer(const LayerSpec& spec, const Shape& in) {
  switch (spec.kind) {
    case LayerKind::affine:
      return std::make_shared<Affine>(spec.in_features, spec.out_features);
    case LayerKind::conv2d:
      return std::make_shared<Conv2d>(spec.filters, spec.kernel, spec.stride, in);
    case LayerKind::maxpool2d:
      return std::make_shared<MaxPool2d>(spec.pool, in);
    case LayerKind::relu:
      return std::make_shared<Relu>();
    case LayerKind::softmax_output:
      return std::make_shared<SoftmaxOutput>();
  }
  throw std::invalid_argument("unknown layer kind");
}

}  // namespace sensprune::detail
