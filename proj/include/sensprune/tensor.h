#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sensprune {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes are incompatible or an axis is out of range.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation would produce NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles. A rank-0 tensor (empty shape) holds one
/// scalar. Every dimension is positive, so a tensor is never empty.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  /// Scalar value of a single-element tensor.
  double item() const;

  /// Copy with a different shape of equal element count.
  Tensor reshaped(Shape shape) const;

  void fill(double v);

  // In-place accumulation, reserved for single-owner training state.
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Throws NonFiniteError naming `what` if any element is NaN or Inf.
void check_finite(const Tensor& t, const std::string& what);
bool all_finite(std::span<const double> values);

// Matrix products on rank-2 tensors.
Tensor matmul(const Tensor& a, const Tensor& b);
/// aᵀ·b
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// a·bᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor identity(std::size_t n);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);
/// Elementwise max(a, s).
Tensor max_scalar(const Tensor& a, double s);

/// Total sum as a rank-0 tensor.
Tensor sum(const Tensor& t);
Tensor sum(const Tensor& t, std::size_t axis);
Tensor mean(const Tensor& t);
Tensor mean(const Tensor& t, std::size_t axis);
/// Index of the maximum along `axis`, lowest index on ties. Indices are
/// stored as doubles in the returned tensor.
Tensor argmax(const Tensor& t, std::size_t axis);
/// argmax of each row of a rank-2 tensor.
std::vector<std::size_t> argmax_rows(const Tensor& t);

}  // namespace sensprune
