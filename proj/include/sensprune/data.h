#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "sensprune/tensor.h"

namespace sensprune {

/// Malformed or inconsistent IDX input. The message names the offending file.
class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class IdxMagicError : public IdxError {
 public:
  using IdxError::IdxError;
};
class IdxTruncatedError : public IdxError {
 public:
  using IdxError::IdxError;
};
class IdxMismatchError : public IdxError {
 public:
  using IdxError::IdxError;
};

struct Dataset {
  Tensor images;  // [n, features...], values in [0, 1]
  std::vector<std::uint32_t> labels;
  std::size_t classes = 10;

  std::size_t size() const { return labels.size(); }
  /// Same samples with each image reshaped to `sample_shape`.
  Dataset reshaped(const Shape& sample_shape) const;
  /// Samples [first, first + count).
  Dataset slice(std::size_t first, std::size_t count) const;
};

/// Raw bytes of a file, transparently inflated if it starts with the gzip
/// magic 0x1f8b.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path);

/// Parses an MNIST image/label IDX pair. Pixels are scaled by 1/255 and
/// images are flattened to [n, rows*cols].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Loads `train` or `t10k` from a directory holding the standard MNIST file
/// names, with or without a .gz suffix.
Dataset load_mnist_split(const std::filesystem::path& dir, const std::string& split);

/// Gaussian clusters with unit σ whose class means are `separation` apart,
/// min-max scaled into [0, 1]. Deterministic in `seed`.
Dataset synthetic_blobs(std::size_t n, std::size_t classes, std::size_t dim, std::uint64_t seed,
                        double separation = 6.0);

Tensor one_hot(const std::vector<std::uint32_t>& labels, std::size_t classes);

struct Batch {
  Tensor x;
  Tensor y;  // one-hot targets
  std::vector<std::uint32_t> labels;
  std::vector<std::size_t> indices;  // positions in the source dataset
};

/// Epoch-seeded shuffled minibatches; the last batch may be smaller. Together
/// the batches cover every sample exactly once.
class BatchSampler {
 public:
  BatchSampler(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch);

  std::size_t count() const { return (order_.size() + batch_size_ - 1) / batch_size_; }
  Batch batch(std::size_t i) const;
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const Dataset* ds_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
};

std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch);

/// Rows `indices` of `ds` as a batch, in the given order.
Batch gather(const Dataset& ds, const std::vector<std::size_t>& indices);

}  // namespace sensprune
