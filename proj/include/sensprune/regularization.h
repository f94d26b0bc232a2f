#pragma once

#include <string>

#include "sensprune/network.h"
#include "sensprune/pruning.h"
#include "sensprune/sensitivity.h"

namespace sensprune {

enum class RegularizerKind { none, l1, l2, sensitivity };

std::string to_string(RegularizerKind k);
RegularizerKind regularizer_from_string(const std::string& s);

struct UpdateStep {
  double eta = 0.1;     // learning rate, > 0
  double lambda = 0.0;  // regularization factor, >= 0
};

/// w ← (w − η·∂L/∂w) − λ·w·S̄_b for every alive entry. λ is not scaled by η.
/// Dead entries (per `mask`) are left untouched. With
/// `regularize_biases` false, bias tensors get the plain SGD step.
void sgd_step_sensitivity(Network& net, const ParamSet& grads, const ParamSet& sbar_b, const UpdateStep& step,
                          const PruneMask* mask = nullptr, bool regularize_biases = true);

/// none: w − η·g;  l2: w − η·g − λ·w;  l1: w − η·g − λ·sign(w), sign(0) = 0.
void sgd_step_baseline(Network& net, const ParamSet& grads, RegularizerKind kind, const UpdateStep& step,
                       const PruneMask* mask = nullptr);

/// Diagnostic value Σ (w²/2)(1 − S) over sub-sensitive parameters; the
/// closed form of the regularizer that the sensitivity update descends for
/// ReLU networks at fixed S. Parameters with S ≥ 1 contribute nothing.
double relu_reg_value(const Network& net, const SensitivityState& state);

}  // namespace sensprune
