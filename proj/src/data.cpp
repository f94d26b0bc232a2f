#include "sensprune/data.h"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "random.h"

namespace sensprune {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in, const std::filesystem::path& path) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw IdxError(path.string() + ": cannot initialise gzip decoder");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  std::vector<std::uint8_t> out;
  std::uint8_t chunk[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk;
    zs.avail_out = sizeof(chunk);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw IdxTruncatedError(path.string() + ": corrupt or truncated gzip stream");
    }
    out.insert(out.end(), chunk, chunk + (sizeof(chunk) - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw IdxTruncatedError(path.string() + ": truncated gzip stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

}  // namespace

std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(path.string() + ": cannot open file");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return gunzip(bytes, path);
  return bytes;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_maybe_gzip(images);
  const auto lab = read_maybe_gzip(labels);

  if (img.size() < 16) throw IdxTruncatedError(images.string() + ": header truncated");
  if (read_be32(img, 0) != kImageMagic) throw IdxMagicError(images.string() + ": bad magic, expected 0x00000803");
  if (lab.size() < 8) throw IdxTruncatedError(labels.string() + ": header truncated");
  if (read_be32(lab, 0) != kLabelMagic) throw IdxMagicError(labels.string() + ": bad magic, expected 0x00000801");

  const std::size_t n = read_be32(img, 4);
  const std::size_t rows = read_be32(img, 8);
  const std::size_t cols = read_be32(img, 12);
  const std::size_t n_labels = read_be32(lab, 4);
  if (n != n_labels) {
    throw IdxMismatchError(images.string() + " holds " + std::to_string(n) + " images but " + labels.string() + " holds " +
                           std::to_string(n_labels) + " labels");
  }
  if (n == 0 || rows == 0 || cols == 0) throw IdxMismatchError(images.string() + ": empty image set");
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + n * pixels) throw IdxTruncatedError(images.string() + ": pixel payload truncated");
  if (lab.size() < 8 + n) throw IdxTruncatedError(labels.string() + ": label payload truncated");

  Dataset ds;
  ds.images = Tensor(Shape{n, pixels});
  for (std::size_t i = 0; i < n * pixels; ++i) ds.images[i] = static_cast<double>(img[16 + i]) / 255.0;
  ds.labels.resize(n);
  std::uint32_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = lab[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.classes = std::max<std::size_t>(10, max_label + 1);
  return ds;
}

Dataset load_mnist_split(const std::filesystem::path& dir, const std::string& split) {
  auto find = [&](const std::string& stem) {
    for (const char* suffix : {"", ".gz"}) {
      const auto p = dir / (stem + suffix);
      if (std::filesystem::exists(p)) return p;
    }
    throw IdxError((dir / stem).string() + ": file not found (also tried .gz)");
  };
  return load_idx(find(split + "-images-idx3-ubyte"), find(split + "-labels-idx1-ubyte"));
}

Dataset Dataset::reshaped(const Shape& sample_shape) const {
  Shape s{size()};
  s.insert(s.end(), sample_shape.begin(), sample_shape.end());
  Dataset out{images.reshaped(s), labels, classes};
  return out;
}

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
  if (first + count > size() || count == 0) throw DimensionError("dataset slice out of range");
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), first);
  Batch b = gather(*this, idx);
  return Dataset{std::move(b.x), std::move(b.labels), classes};
}

Dataset synthetic_blobs(std::size_t n, std::size_t classes, std::size_t dim, std::uint64_t seed, double separation) {
  if (n == 0 || classes == 0 || dim == 0) throw std::invalid_argument("synthetic_blobs: n, classes and dim must be >= 1");
  // Means on scaled axes (pairwise distance = separation) when there is room,
  // otherwise evenly spaced along the first axis.
  std::vector<std::vector<double>> means(classes, std::vector<double>(dim, 0.0));
  for (std::size_t c = 0; c < classes; ++c) {
    if (classes <= dim) {
      means[c][c] = separation / std::sqrt(2.0);
    } else {
      means[c][0] = separation * static_cast<double>(c);
    }
  }
  detail::SplitMix64 rng(seed);
  Dataset ds;
  ds.classes = classes;
  ds.images = Tensor(Shape{n, dim});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::uint32_t>(i % classes);
    ds.labels[i] = c;
    for (std::size_t d = 0; d < dim; ++d) ds.images.at(i, d) = means[c][d] + rng.normal();
  }
  const auto [lo_it, hi_it] = std::minmax_element(ds.images.data().begin(), ds.images.data().end());
  const double lo = *lo_it, span = std::max(*hi_it - *lo_it, 1e-12);
  for (double& v : ds.images.data()) v = (v - lo) / span;
  return ds;
}

Tensor one_hot(const std::vector<std::uint32_t>& labels, std::size_t classes) {
  Tensor out(Shape{labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw std::out_of_range("label " + std::to_string(labels[i]) + " >= classes");
    out.at(i, labels[i]) = 1.0;
  }
  return out;
}

Batch gather(const Dataset& ds, const std::vector<std::size_t>& indices) {
  const Shape& full = ds.images.shape();
  Shape s{indices.size()};
  s.insert(s.end(), full.begin() + 1, full.end());
  const std::size_t width = ds.images.size() / ds.size();
  Batch b;
  b.x = Tensor(s);
  b.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const double* src = ds.images.raw() + indices[i] * width;
    std::copy(src, src + width, b.x.raw() + i * width);
    b.labels.push_back(ds.labels[indices[i]]);
  }
  b.y = one_hot(b.labels, ds.classes);
  b.indices = indices;
  return b;
}

BatchSampler::BatchSampler(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch)
    : ds_(&ds), batch_size_(batch_size), order_(ds.size()) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  detail::SplitMix64 rng(detail::mix_seed(seed, epoch));
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
}

Batch BatchSampler::batch(std::size_t i) const {
  const std::size_t first = i * batch_size_;
  const std::size_t last = std::min(first + batch_size_, order_.size());
  return gather(*ds_, std::vector<std::size_t>(order_.begin() + static_cast<std::ptrdiff_t>(first),
                                               order_.begin() + static_cast<std::ptrdiff_t>(last)));
}

std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch) {
  BatchSampler sampler(ds, batch_size, seed, epoch);
  std::vector<Batch> out;
  out.reserve(sampler.count());
  for (std::size_t i = 0; i < sampler.count(); ++i) out.push_back(sampler.batch(i));
  return out;
}

}  // namespace sensprune
