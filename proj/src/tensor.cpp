#include "sensprune/tensor.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace sensprune {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t) { return ConstMap(t.raw(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1))); }

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 operand, got shape " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <typename F>
Tensor map_unary(const Tensor& a, F f, const char* op) {
  Tensor out(a.shape());
  std::transform(a.data().begin(), a.data().end(), out.data().begin(), f);
  check_finite(out, op);
  return out;
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f, const char* op) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  std::transform(a.data().begin(), a.data().end(), b.data().begin(), out.data().begin(), f);
  check_finite(out, op);
  return out;
}

// Splits `shape` around `axis` into (outer, length, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, length = 1, inner = 1;
  Shape reduced;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i < axis) s.outer *= shape[i];
    if (i > axis) s.inner *= shape[i];
    if (i != axis) s.reduced.push_back(shape[i]);
  }
  s.length = shape[axis];
  return s;
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape_));
  }
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape_));
  }
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw DimensionError("matrix literal has no rows");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor(Shape{rows.size(), cols}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
  }
  return shape_[axis];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void check_finite(const Tensor& t, const std::string& what) {
  if (!all_finite(t.data())) throw NonFiniteError(what + ": non-finite value in tensor of shape " + shape_str(t.shape()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor out(Shape{a.dim(0), b.dim(1)});
  MutMap(out.raw(), static_cast<Eigen::Index>(a.dim(0)), static_cast<Eigen::Index>(b.dim(1))).noalias() =
      as_matrix(a) * as_matrix(b);
  check_finite(out, "matmul");
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_tn");
  require_rank2(b, "matmul_tn");
  if (a.dim(0) != b.dim(0)) {
    throw DimensionError("matmul_tn: leading dimensions differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out(Shape{a.dim(1), b.dim(1)});
  MutMap(out.raw(), static_cast<Eigen::Index>(a.dim(1)), static_cast<Eigen::Index>(b.dim(1))).noalias() =
      as_matrix(a).transpose() * as_matrix(b);
  check_finite(out, "matmul_tn");
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: trailing dimensions differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out(Shape{a.dim(0), b.dim(0)});
  MutMap(out.raw(), static_cast<Eigen::Index>(a.dim(0)), static_cast<Eigen::Index>(b.dim(0))).noalias() =
      as_matrix(a) * as_matrix(b).transpose();
  check_finite(out, "matmul_nt");
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  Tensor out(Shape{a.dim(1), a.dim(0)});
  for (std::size_t r = 0; r < a.dim(0); ++r) {
    for (std::size_t c = 0; c < a.dim(1); ++c) out.at(c, r) = a.at(r, c);
  }
  return out;
}

Tensor identity(std::size_t n) {
  Tensor out(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) out.at(i, i) = 1.0;
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return map_binary(a, b, std::plus<>(), "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return map_binary(a, b, std::minus<>(), "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return map_binary(a, b, std::multiplies<>(), "mul"); }

Tensor scale(const Tensor& a, double s) {
  return map_unary(a, [s](double v) { return v * s; }, "scale");
}

Tensor relu(const Tensor& a) {
  return map_unary(a, [](double v) { return v > 0.0 ? v : 0.0; }, "relu");
}

Tensor abs(const Tensor& a) {
  return map_unary(a, [](double v) { return std::fabs(v); }, "abs");
}

Tensor max_scalar(const Tensor& a, double s) {
  return map_unary(a, [s](double v) { return std::max(v, s); }, "max_scalar");
}

Tensor sum(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  check_finite(out, "sum");
  return out;
}

Tensor sum(const Tensor& t, std::size_t axis) {
  const AxisSplit s = split_axis(t.shape(), axis, "sum");
  Tensor out(s.reduced);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.length; ++l) {
      const double* src = t.raw() + (o * s.length + l) * s.inner;
      double* dst = out.raw() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  check_finite(out, "sum");
  return out;
}

Tensor mean(const Tensor& t) { return Tensor::scalar(sum(t).item() / static_cast<double>(t.size())); }

Tensor mean(const Tensor& t, std::size_t axis) {
  Tensor out = sum(t, axis);
  out *= 1.0 / static_cast<double>(t.shape()[axis]);
  return out;
}

Tensor argmax(const Tensor& t, std::size_t axis) {
  const AxisSplit s = split_axis(t.shape(), axis, "argmax");
  Tensor out(s.reduced);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = 0;
      double best_v = t[o * s.length * s.inner + i];
      for (std::size_t l = 1; l < s.length; ++l) {
        const double v = t[(o * s.length + l) * s.inner + i];
        if (v > best_v) {
          best_v = v;
          best = l;
        }
      }
      out[o * s.inner + i] = static_cast<double>(best);
    }
  }
  return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& t) {
  require_rank2(t, "argmax_rows");
  std::vector<std::size_t> out(t.dim(0));
  const std::size_t cols = t.dim(1);
  for (std::size_t r = 0; r < t.dim(0); ++r) {
    const double* row = t.raw() + r * cols;
    out[r] = static_cast<std::size_t>(std::max_element(row, row + cols) - row);
  }
  return out;
}

}  // namespace sensprune
