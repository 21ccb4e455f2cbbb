#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vdmask/ops.hpp"
#include "vdmask/rng.hpp"

// Stretched-and-clamped Hard Concrete gates: sampling for training, the
// closed-form P(z>0) backing the L0 surrogate, and the deterministic gate
// used at inference.

namespace vdm {

struct HCParams {
  double l = -0.2;  // stretch lower limit, <= 0
  double r = 1.0;   // stretch upper limit, >= 1
  double tau = 0.2; // temperature

  void validate() const {
    if (!(l <= 0.0) || !(r >= 1.0)) {
      throw ContractError("hard concrete: need l <= 0 <= 1 <= r, got l=" +
                          std::to_string(l) + " r=" + std::to_string(r));
    }
    if (!(tau > 0.0)) {
      throw ContractError("hard concrete: temperature must be positive");
    }
  }
};

// z = clamp(sigma((logit(eps) + u)/tau) * (r-l) + l, 0, 1), differentiable
// in u through the reparameterization. `noise` entries must lie strictly
// inside (0,1).
template <typename S>
TensorT<S> hc_sample(const TensorT<S>& u, const TensorT<S>& noise,
                     const HCParams& hc) {
  hc.validate();
  if (noise.shape() != u.shape()) {
    throw DimensionError("hard concrete sample: noise shape " +
                         shape_str(noise.shape()) + " != logits shape " +
                         shape_str(u.shape()));
  }
  std::vector<S> lg(noise.values().size());
  for (std::size_t i = 0; i < lg.size(); ++i) {
    double e = static_cast<double>(noise.values()[i]);
    if (!(e > 0.0) || !(e < 1.0)) {
      throw NumericError("hard concrete sample: noise must be inside (0,1)");
    }
    lg[i] = static_cast<S>(std::log(e) - std::log1p(-e));
  }
  auto logit_eps = TensorT<S>::from(u.shape(), std::move(lg));
  auto pre = affine(add(u, logit_eps), 1.0 / hc.tau, 0.0);
  auto s = sigmoid(pre);
  auto stretched = affine(s, hc.r - hc.l, hc.l);
  return clamp(stretched, 0.0, 1.0);
}

// Closed-form P(z > 0) = sigma(u - tau*log(-l/r)), elementwise.
template <typename S>
TensorT<S> hc_prob_nonzero(const TensorT<S>& u, const HCParams& hc) {
  hc.validate();
  if (hc.l == 0.0) {
    throw NumericError("hard concrete prob_nonzero: l must be negative");
  }
  double shift = -hc.tau * std::log(-hc.l / hc.r);
  return sigmoid(affine(u, 1.0, shift));
}

inline double hc_prob_nonzero_scalar(double u, const HCParams& hc) {
  if (hc.l == 0.0) {
    throw NumericError("hard concrete prob_nonzero: l must be negative");
  }
  double x = u - hc.tau * std::log(-hc.l / hc.r);
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Differentiable L0 surrogate: sum of P(z_i > 0) over every entry.
template <typename S>
TensorT<S> hc_expected_l0(const TensorT<S>& u, const HCParams& hc) {
  return sum(hc_prob_nonzero(u, hc));
}

// Deterministic inference gate: clamp(sigma(u)*(r-l)+l, 0, 1). Monotone in
// u; stands in for the expected value, which has no simple closed form.
template <typename S>
TensorT<S> hc_deterministic_gate(const TensorT<S>& u, const HCParams& hc) {
  hc.validate();
  return clamp(affine(sigmoid(u), hc.r - hc.l, hc.l), 0.0, 1.0);
}

inline double hc_deterministic_gate_scalar(double u, const HCParams& hc) {
  double s = u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
  double v = s * (hc.r - hc.l) + hc.l;
  return std::min(std::max(v, 0.0), 1.0);
}

inline double hc_sample_scalar(double u, double eps, const HCParams& hc) {
  double pre = (std::log(eps) - std::log1p(-eps) + u) / hc.tau;
  double s = pre >= 0 ? 1.0 / (1.0 + std::exp(-pre))
                      : std::exp(pre) / (1.0 + std::exp(pre));
  double v = s * (hc.r - hc.l) + hc.l;
  return std::min(std::max(v, 0.0), 1.0);
}

}  // namespace vdm
