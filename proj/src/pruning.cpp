#include "sensprune/pruning.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>

#include <json.hpp>

namespace sensprune {

using nlohmann::json;

PruneMask::PruneMask(const Network& net) {
  for (const Tensor& p : net.params()) {
    shapes_.push_back(p.shape());
    alive_.emplace_back(p.size(), std::uint8_t{1});
  }
}

std::size_t PruneMask::alive_count(std::size_t t) const {
  std::size_t n = 0;
  for (std::uint8_t f : alive_[t]) n += f;
  return n;
}

std::size_t PruneMask::alive_count() const {
  std::size_t n = 0;
  for (std::size_t t = 0; t < alive_.size(); ++t) n += alive_count(t);
  return n;
}

void PruneMask::check_matches(const Network& net) const {
  const ParamSet& params = net.params();
  if (params.size() != shapes_.size()) {
    throw DimensionError("mask covers " + std::to_string(shapes_.size()) + " tensors, network has " +
                         std::to_string(params.size()));
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].shape() != shapes_[t]) {
      throw DimensionError("mask tensor " + std::to_string(t) + " has shape " + shape_str(shapes_[t]) + ", parameter has " +
                           shape_str(params[t].shape()));
    }
  }
}

std::size_t apply_threshold(Network& net, PruneMask& mask, double threshold) {
  if (!(threshold >= 0.0)) throw std::invalid_argument("pruning threshold must be >= 0");
  mask.check_matches(net);
  std::size_t pruned = 0;
  for (std::size_t t = 0; t < mask.tensors(); ++t) {
    Tensor& p = net.params()[t];
    auto& flags = mask.flags(t);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (flags[i] && std::fabs(p[i]) < threshold) {
        flags[i] = 0;
        p[i] = 0.0;
        ++pruned;
      }
    }
  }
  return pruned;
}

void enforce_mask(Network& net, const PruneMask& mask) {
  mask.check_matches(net);
  for (std::size_t t = 0; t < mask.tensors(); ++t) {
    Tensor& p = net.params()[t];
    const auto& flags = mask.flags(t);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!flags[i]) p[i] = 0.0;
    }
  }
}

SparsityReport sparsity_report(const Network& net, const PruneMask& mask) {
  mask.check_matches(net);
  SparsityReport r;
  const auto& info = net.param_info();
  for (std::size_t t = 0; t < info.size(); ++t) {
    if (r.layers.empty() || r.layers.back().name != info[t].group) r.layers.push_back(LayerSparsity{info[t].group});
    LayerSparsity& layer = r.layers.back();
    layer.total += net.params()[t].size();
    layer.alive += mask.alive_count(t);
  }
  for (LayerSparsity& layer : r.layers) {
    layer.percent = 100.0 * static_cast<double>(layer.alive) / static_cast<double>(layer.total);
    r.total += layer.total;
    r.alive += layer.alive;
  }
  r.ratio = r.alive == 0 ? std::numeric_limits<double>::infinity()
                         : static_cast<double>(r.total) / static_cast<double>(r.alive);
  r.footprint_bytes = 4 * r.alive;
  return r;
}

namespace {

constexpr char kMagic[8] = {'S', 'P', 'R', 'S', 'M', 'D', 'L', '1'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int b = 7; b >= 0; --b) v = (v << 8) | p[b];
  return v;
}

json layer_to_json(const LayerSpec& s) {
  json j{{"kind", to_string(s.kind)}};
  switch (s.kind) {
    case LayerKind::affine:
      j["in"] = s.in_features;
      j["out"] = s.out_features;
      break;
    case LayerKind::conv2d:
      j["filters"] = s.filters;
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      break;
    case LayerKind::maxpool2d:
      j["pool"] = s.pool;
      break;
    default:
      break;
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  const LayerKind kind = layer_kind_from_string(j.at("kind").get<std::string>());
  switch (kind) {
    case LayerKind::affine:
      return LayerSpec::affine(j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>());
    case LayerKind::conv2d:
      return LayerSpec::conv2d(j.at("filters").get<std::size_t>(), j.at("kernel").get<std::size_t>(),
                               j.at("stride").get<std::size_t>());
    case LayerKind::maxpool2d:
      return LayerSpec::maxpool2d(j.at("pool").get<std::size_t>());
    case LayerKind::relu:
      return LayerSpec::relu();
    case LayerKind::softmax_output:
      return LayerSpec::softmax_output();
  }
  throw std::invalid_argument("unknown layer kind");
}

}  // namespace

std::vector<std::uint8_t> encode_sparse(const Network& net, const PruneMask& mask) {
  mask.check_matches(net);
  json header;
  header["input_shape"] = net.input_shape();
  header["layers"] = json::array();
  for (const LayerSpec& s : net.specs()) header["layers"].push_back(layer_to_json(s));
  header["tensors"] = json::array();
  for (std::size_t t = 0; t < mask.tensors(); ++t) {
    header["tensors"].push_back({{"name", net.param_info()[t].name},
                                 {"shape", net.params()[t].shape()},
                                 {"count", mask.alive_count(t)}});
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (std::size_t t = 0; t < mask.tensors(); ++t) {
    const Tensor& p = net.params()[t];
    const auto& flags = mask.flags(t);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!flags[i]) continue;
      put_u64(out, i);
      put_u64(out, std::bit_cast<std::uint64_t>(p[i]));
    }
  }
  return out;
}

void save_sparse(const Network& net, const PruneMask& mask, const std::filesystem::path& path) {
  const auto bytes = encode_sparse(net, mask);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

SparseModel decode_sparse(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw SparseHeaderError("not a sparse model file (bad magic)");
  }
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) throw SparseTruncatedError("header extends past end of file");

  json header;
  std::vector<LayerSpec> layers;
  Shape input_shape;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
    input_shape = header.at("input_shape").get<Shape>();
    for (const json& l : header.at("layers")) layers.push_back(layer_from_json(l));
  } catch (const std::exception& e) {
    throw SparseHeaderError(std::string("corrupt header: ") + e.what());
  }

  std::optional<Network> net;
  try {
    net.emplace(input_shape, layers);
  } catch (const std::exception& e) {
    throw SparseHeaderError(std::string("header describes an invalid network: ") + e.what());
  }
  const json tensors = header.value("tensors", json());
  if (!tensors.is_array() || tensors.size() != net->params().size()) {
    throw SparseHeaderError("header tensor list does not match the architecture");
  }
  std::vector<std::size_t> counts;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    try {
      if (tensors[t].at("shape").get<Shape>() != net->params()[t].shape()) {
        throw SparseHeaderError("tensor " + std::to_string(t) + " shape does not match the architecture");
      }
      counts.push_back(tensors[t].at("count").get<std::size_t>());
    } catch (const SparseHeaderError&) {
      throw;
    } catch (const std::exception& e) {
      throw SparseHeaderError(std::string("corrupt tensor entry: ") + e.what());
    }
    if (counts.back() > net->params()[t].size()) {
      throw SparseHeaderError("tensor " + std::to_string(t) + " claims more entries than it has");
    }
  }

  PruneMask mask(*net);
  std::size_t pos = 16 + header_len;
  for (std::size_t t = 0; t < counts.size(); ++t) {
    Tensor& p = net->params()[t];
    auto& flags = mask.flags(t);
    std::fill(flags.begin(), flags.end(), std::uint8_t{0});
    p.fill(0.0);
    if (bytes.size() - pos < counts[t] * 16) {
      throw SparseTruncatedError("payload of tensor " + std::to_string(t) + " is truncated");
    }
    std::uint64_t prev = 0;
    for (std::size_t e = 0; e < counts[t]; ++e, pos += 16) {
      const std::uint64_t idx = get_u64(bytes.data() + pos);
      if (e > 0 && idx <= prev) throw SparseIndexOrderError("indices of tensor " + std::to_string(t) + " are not strictly increasing");
      if (idx >= p.size()) throw SparseIndexRangeError("index " + std::to_string(idx) + " out of range in tensor " + std::to_string(t));
      prev = idx;
      p[idx] = std::bit_cast<double>(get_u64(bytes.data() + pos + 8));
      flags[idx] = 1;
    }
  }
  if (pos != bytes.size()) throw SparseHeaderError("trailing bytes after payload");
  return SparseModel{std::move(*net), std::move(mask)};
}

SparseModel load_sparse(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_sparse(bytes);
}

}  // namespace sensprune
