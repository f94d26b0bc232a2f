#include "sensprune/sensitivity.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "random.h"

namespace sensprune {

std::string to_string(SensitivityMode m) { return m == SensitivityMode::unspecific ? "unspecific" : "specific"; }

SensitivityMode sensitivity_mode_from_string(const std::string& s) {
  if (s == "unspecific" || s == "unspec") return SensitivityMode::unspecific;
  if (s == "specific" || s == "spec") return SensitivityMode::specific;
  throw std::invalid_argument("unknown sensitivity mode '" + s + "'");
}

std::string to_string(SensitivityOutput o) { return o == SensitivityOutput::probabilities ? "probabilities" : "logits"; }

SensitivityOutput sensitivity_output_from_string(const std::string& s) {
  if (s == "probabilities" || s == "probs") return SensitivityOutput::probabilities;
  if (s == "logits") return SensitivityOutput::logits;
  throw std::invalid_argument("unknown sensitivity output '" + s + "'");
}

SensitivityState::SensitivityState(const Network& net) : sums_(net.zeros_like_params()) {}

void SensitivityState::add(const ParamSet& sums, std::size_t samples) {
  if (sums_.empty()) {
    sums_ = sums;
  } else {
    if (sums.size() != sums_.size()) throw DimensionError("sensitivity state: parameter count mismatch");
    for (std::size_t i = 0; i < sums.size(); ++i) sums_[i] += sums[i];
  }
  samples_ += samples;
}

void SensitivityState::merge(const SensitivityState& other) {
  if (other.samples_ == 0) return;
  add(other.sums_, other.samples_);
}

ParamSet SensitivityState::mean() const {
  if (samples_ == 0) throw StateError("sensitivity state holds no samples");
  ParamSet out = sums_;
  const double inv = 1.0 / static_cast<double>(samples_);
  for (Tensor& t : out) t *= inv;
  return out;
}

void accumulate_sensitivity_cached(const Network& net, const Tensor* targets, const SensitivityOptions& opts,
                                   SensitivityState& state) {
  const std::size_t batch = net.cached_batch();
  if (batch == 0) throw StateError("sensitivity requested before forward()");
  const std::size_t classes = net.output_dim();
  const SeedPoint at = opts.output == SensitivityOutput::logits ? SeedPoint::logits : SeedPoint::output;

  Tensor seed;
  std::vector<double> weights;
  std::size_t replicas = 1;
  if (opts.mode == SensitivityMode::specific) {
    if (targets == nullptr) throw std::invalid_argument("specific sensitivity needs one-hot targets");
    check_one_hot(*targets, batch, classes);
    seed = *targets;
    weights.assign(batch, 1.0);
  } else {
    // One basis seed e_k per (sample, class) row, each weighted 1/C, or 1/n
    // over n classes drawn for this batch when subsampling.
    std::vector<std::size_t> picked(classes);
    std::iota(picked.begin(), picked.end(), std::size_t{0});
    if (opts.class_subsample > 0 && opts.class_subsample < classes) {
      detail::SplitMix64 rng(opts.subsample_seed);
      for (std::size_t i = 0; i < opts.class_subsample; ++i) {
        std::swap(picked[i], picked[i + rng.below(classes - i)]);
      }
      picked.resize(opts.class_subsample);
    }
    replicas = picked.size();
    seed = Tensor(Shape{batch * replicas, classes});
    for (std::size_t s = 0; s < batch; ++s) {
      for (std::size_t j = 0; j < replicas; ++j) seed.at(s * replicas + j, picked[j]) = 1.0;
    }
    weights.assign(batch * replicas, 1.0 / static_cast<double>(replicas));
  }
  state.add(net.backward_abs(seed, replicas, weights, at), batch);
}

SensitivityState accumulate_sensitivity(Network& net, const Tensor& x, const Tensor* targets,
                                        const SensitivityOptions& opts) {
  net.forward(x);
  SensitivityState state(net);
  accumulate_sensitivity_cached(net, targets, opts, state);
  return state;
}

ParamSet bounded_insensitivity(const SensitivityState& state) {
  ParamSet s = state.mean();
  for (Tensor& t : s) {
    for (double& v : t.data()) v = std::max(0.0, 1.0 - v);
  }
  return s;
}

HolderReport check_holder_bound(Network& net, const Tensor& x, const Tensor& targets, SensitivityOutput against,
                                double tolerance) {
  if (!net.has_softmax_output()) throw std::invalid_argument("Hölder bound check needs softmax cross-entropy");
  const std::size_t batch = x.dim(0);
  const std::size_t classes = net.output_dim();
  check_one_hot(targets, batch, classes);
  const std::size_t width = x.size() / batch;
  const SeedPoint at = against == SensitivityOutput::logits ? SeedPoint::logits : SeedPoint::output;

  Tensor basis = identity(classes);
  const std::vector<double> ones(classes, 1.0);
  HolderReport report;
  report.worst_margin = -std::numeric_limits<double>::infinity();
  Shape one_shape = x.shape();
  one_shape[0] = 1;
  for (std::size_t s = 0; s < batch; ++s) {
    Tensor xs(one_shape, std::vector<double>(x.raw() + s * width, x.raw() + (s + 1) * width));
    Tensor ts(Shape{1, classes}, std::vector<double>(targets.raw() + s * classes, targets.raw() + (s + 1) * classes));
    const LossAndGrad lg = loss_and_grad(net, xs, ts);
    const ParamSet l1 = net.backward_abs(basis, classes, ones, at);
    for (std::size_t p = 0; p < l1.size(); ++p) {
      for (std::size_t i = 0; i < l1[p].size(); ++i) {
        const double margin = std::fabs(lg.grads[p][i]) - l1[p][i];
        report.worst_margin = std::max(report.worst_margin, margin);
        ++report.checked;
        if (margin > tolerance) ++report.violations;
      }
    }
  }
  return report;
}

}  // namespace sensprune
