#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "sensprune/network.h"

namespace sensprune {

/// How the per-output terms |∂y_k/∂w| are weighted: all classes at 1/C
/// (unspecific) or only the target class (specific).
enum class SensitivityMode { unspecific, specific };

/// Which network quantity plays the role of y: softmax probabilities or the
/// logits feeding the softmax.
enum class SensitivityOutput { probabilities, logits };

std::string to_string(SensitivityMode m);
SensitivityMode sensitivity_mode_from_string(const std::string& s);
std::string to_string(SensitivityOutput o);
SensitivityOutput sensitivity_output_from_string(const std::string& s);

struct SensitivityOptions {
  SensitivityMode mode = SensitivityMode::unspecific;
  SensitivityOutput output = SensitivityOutput::probabilities;
  /// Unspecific mode only: when 0 < n < C, estimate the class average from n
  /// classes drawn per batch instead of all C.
  std::size_t class_subsample = 0;
  std::uint64_t subsample_seed = 0;
};

/// Running per-parameter sum over samples of Σ_k α_k |∂y_k/∂w|.
class SensitivityState {
 public:
  SensitivityState() = default;
  explicit SensitivityState(const Network& net);

  /// Adds a per-parameter sum covering `samples` samples.
  void add(const ParamSet& sums, std::size_t samples);
  void merge(const SensitivityState& other);

  std::size_t samples_seen() const { return samples_; }
  const ParamSet& sums() const { return sums_; }
  /// Mean over samples: the sensitivity S of every parameter.
  ParamSet mean() const;

 private:
  ParamSet sums_;
  std::size_t samples_ = 0;
};

/// Runs a forward pass on `x` and returns the sensitivity state of the batch.
/// `targets` (one-hot) is required for specific mode and ignored otherwise.
SensitivityState accumulate_sensitivity(Network& net, const Tensor& x, const Tensor* targets,
                                        const SensitivityOptions& opts);

/// Same, reusing the activations of the most recent forward pass.
void accumulate_sensitivity_cached(const Network& net, const Tensor* targets, const SensitivityOptions& opts,
                                   SensitivityState& state);

/// max(0, 1 − S) for every parameter. Throws on an empty state.
ParamSet bounded_insensitivity(const SensitivityState& state);

struct HolderReport {
  std::size_t checked = 0;     // (sample, parameter) pairs compared
  std::size_t violations = 0;  // pairs with |∂L/∂w| − Σ_k|∂y_k/∂w| > tolerance
  double worst_margin = 0.0;   // largest |∂L/∂w| − Σ_k|∂y_k/∂w| seen
};

/// Per-sample check of |∂L/∂w| ≤ Σ_k |∂y_k/∂w| for softmax cross-entropy.
/// The bound is exact when y is the softmax input, which is the default.
HolderReport check_holder_bound(Network& net, const Tensor& x, const Tensor& targets,
                                SensitivityOutput against = SensitivityOutput::logits, double tolerance = 1e-9);

}  // namespace sensprune
