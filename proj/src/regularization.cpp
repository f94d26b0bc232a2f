#include "sensprune/regularization.h"

#include <cmath>

namespace sensprune {

std::string to_string(RegularizerKind k) {
  switch (k) {
    case RegularizerKind::none: return "none";
    case RegularizerKind::l1: return "l1";
    case RegularizerKind::l2: return "l2";
    case RegularizerKind::sensitivity: return "sensitivity";
  }
  return "unknown";
}

RegularizerKind regularizer_from_string(const std::string& s) {
  for (RegularizerKind k : {RegularizerKind::none, RegularizerKind::l1, RegularizerKind::l2, RegularizerKind::sensitivity}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown regularizer '" + s + "'");
}

namespace {

void validate(const Network& net, const ParamSet& grads, const UpdateStep& step, const PruneMask* mask) {
  if (!(step.eta > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (!(step.lambda >= 0.0)) throw std::invalid_argument("regularization factor must be >= 0");
  const ParamSet& params = net.params();
  if (grads.size() != params.size()) throw DimensionError("gradient count does not match parameter count");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (grads[t].shape() != params[t].shape()) {
      throw DimensionError(net.param_info()[t].name + ": gradient shape " + shape_str(grads[t].shape()) +
                           " vs parameter shape " + shape_str(params[t].shape()));
    }
  }
  if (mask) mask->check_matches(net);
}

template <typename Update>
void apply(Network& net, const PruneMask* mask, Update update) {
  ParamSet& params = net.params();
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = params[t];
    const std::uint8_t* alive = mask ? mask->flags(t).data() : nullptr;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (alive && !alive[i]) continue;
      p[i] = update(t, i, p[i]);
    }
    check_finite(p, "update of " + net.param_info()[t].name);
  }
}

}  // namespace

void sgd_step_sensitivity(Network& net, const ParamSet& grads, const ParamSet& sbar_b, const UpdateStep& step,
                          const PruneMask* mask, bool regularize_biases) {
  validate(net, grads, step, mask);
  if (sbar_b.size() != grads.size()) throw DimensionError("insensitivity count does not match parameter count");
  for (std::size_t t = 0; t < grads.size(); ++t) {
    if (sbar_b[t].shape() != grads[t].shape()) throw DimensionError(net.param_info()[t].name + ": insensitivity shape mismatch");
  }
  const auto& info = net.param_info();
  apply(net, mask, [&](std::size_t t, std::size_t i, double w) {
    const double plain = w - step.eta * grads[t][i];
    if (!regularize_biases && info[t].is_bias) return plain;
    return plain - step.lambda * w * sbar_b[t][i];
  });
}

void sgd_step_baseline(Network& net, const ParamSet& grads, RegularizerKind kind, const UpdateStep& step,
                       const PruneMask* mask) {
  validate(net, grads, step, mask);
  if (kind == RegularizerKind::sensitivity) {
    throw std::invalid_argument("sensitivity regularization needs sgd_step_sensitivity");
  }
  apply(net, mask, [&](std::size_t t, std::size_t i, double w) {
    const double plain = w - step.eta * grads[t][i];
    switch (kind) {
      case RegularizerKind::l2:
        return plain - step.lambda * w;
      case RegularizerKind::l1: {
        const double sign = w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0);
        return plain - step.lambda * sign;
      }
      default:
        return plain;
    }
  });
}

double relu_reg_value(const Network& net, const SensitivityState& state) {
  const ParamSet s = state.mean();
  const ParamSet& params = net.params();
  if (s.size() != params.size()) throw DimensionError("sensitivity state does not match the network");
  double total = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double insens = 1.0 - s[t][i];
      if (insens > 0.0) total += 0.5 * params[t][i] * params[t][i] * insens;
    }
  }
  return total;
}

}  // namespace sensprune
