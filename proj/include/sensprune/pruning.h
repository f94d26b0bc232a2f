#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "sensprune/network.h"

namespace sensprune {

/// One alive-flag array per parameter tensor. Dead entries are permanently
/// zero in the matching parameter tensor.
class PruneMask {
 public:
  PruneMask() = default;
  /// All entries alive.
  explicit PruneMask(const Network& net);

  std::size_t tensors() const { return alive_.size(); }
  const Shape& shape(std::size_t t) const { return shapes_[t]; }
  bool alive(std::size_t t, std::size_t i) const { return alive_[t][i] != 0; }
  void kill(std::size_t t, std::size_t i) { alive_[t][i] = 0; }
  const std::vector<std::uint8_t>& flags(std::size_t t) const { return alive_[t]; }
  std::vector<std::uint8_t>& flags(std::size_t t) { return alive_[t]; }

  std::size_t alive_count(std::size_t t) const;
  std::size_t alive_count() const;
  /// Throws DimensionError unless the mask mirrors the network's parameters.
  void check_matches(const Network& net) const;

  bool operator==(const PruneMask&) const = default;

 private:
  std::vector<Shape> shapes_;
  std::vector<std::vector<std::uint8_t>> alive_;
};

/// Zeroes every alive parameter with |w| < threshold and marks it dead.
/// Returns the number of newly pruned entries.
std::size_t apply_threshold(Network& net, PruneMask& mask, double threshold);

/// Sets every dead entry to exactly zero.
void enforce_mask(Network& net, const PruneMask& mask);

struct LayerSparsity {
  std::string name;
  std::size_t total = 0;
  std::size_t alive = 0;
  double percent = 0.0;
};

struct SparsityReport {
  std::vector<LayerSparsity> layers;
  std::size_t total = 0;
  std::size_t alive = 0;
  /// total / alive; +inf once everything is pruned.
  double ratio = 1.0;
  /// 4 bytes per alive parameter.
  std::size_t footprint_bytes = 0;
};

/// Per parameterized layer (weights and biases together) and overall counts.
SparsityReport sparsity_report(const Network& net, const PruneMask& mask);

// Sparse model file:
//   magic "SPRSMDL1" (8 bytes) | header length (u64 LE) | JSON header
//   then per tensor, in header order, `count` entries of
//   (flat index: u64 LE, value: f64 LE) with strictly increasing indices.
// The header records the input shape, the layer list and, per tensor, its
// name, shape and alive count. Exactly the alive entries are stored.

class SparseFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class SparseHeaderError : public SparseFormatError {
 public:
  using SparseFormatError::SparseFormatError;
};
class SparseTruncatedError : public SparseFormatError {
 public:
  using SparseFormatError::SparseFormatError;
};
class SparseIndexOrderError : public SparseFormatError {
 public:
  using SparseFormatError::SparseFormatError;
};
class SparseIndexRangeError : public SparseFormatError {
 public:
  using SparseFormatError::SparseFormatError;
};

struct SparseModel {
  Network net;
  PruneMask mask;
};

void save_sparse(const Network& net, const PruneMask& mask, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_sparse(const Network& net, const PruneMask& mask);
SparseModel load_sparse(const std::filesystem::path& path);
SparseModel decode_sparse(const std::vector<std::uint8_t>& bytes);

}  // namespace sensprune
