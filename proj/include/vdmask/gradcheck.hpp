#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vdmask/ops.hpp"
#include "vdmask/rng.hpp"

namespace vdm {

// Max over coordinates of |analytic - central difference| / max(1, |cd|).
// Runs in the scalar type of `point`; checks are meant to run in double so
// rounding noise stays far below the 1e-3 acceptance line.
template <typename S, typename F>
double grad_check(F f, const TensorT<S>& point, double eps) {
  auto& tape = active_tape<S>();
  tape.clear();

  TensorT<S> x = point.clone();
  x.set_requires_grad(true);
  TensorT<S> loss = f(x);
  if (loss.numel() != 1) throw ContractError("grad_check: f must be scalar");
  tape.backward(loss);
  std::vector<S> analytic = x.grad();

  TensorT<S> probe = point.clone();
  probe.set_requires_grad(false);
  double max_err = 0.0;
  for (std::int64_t i = 0; i < probe.numel(); ++i) {
    S keep = probe.values()[i];
    probe.values()[i] = keep + static_cast<S>(eps);
    double fp = static_cast<double>(f(probe).item());
    probe.values()[i] = keep - static_cast<S>(eps);
    double fm = static_cast<double>(f(probe).item());
    probe.values()[i] = keep;
    double cd = (fp - fm) / (2.0 * eps);
    double err = std::abs(static_cast<double>(analytic[i]) - cd) /
                 std::max(1.0, std::abs(cd));
    if (!std::isfinite(err)) throw NumericError("grad_check: non-finite error");
    max_err = std::max(max_err, err);
  }
  return max_err;
}

struct OpCheckResult {
  OpKind kind;
  double max_err;
};

namespace detail {

inline TensorT<double> random_tensor(Rng& rng, Shape shape, double lo,
                                     double hi) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return TensorT<double>::from(std::move(shape), std::move(v));
}

// Scalarizes an op output with fixed random weights so every output
// coordinate contributes a distinct cotangent.
inline double check_op_input(OpKind kind, const std::vector<TensorT<double>>& inputs,
                             const OpAttrs& attrs, std::size_t which,
                             Rng& rng, double eps) {
  TensorT<double> probe_out = apply(kind, inputs, attrs);
  active_tape<double>().clear();
  TensorT<double> w = random_tensor(rng, probe_out.shape(), -1.0, 1.0);
  auto f = [&](const TensorT<double>& x) {
    std::vector<TensorT<double>> ins = inputs;
    ins[which] = x;
    return sum(mul(w, apply(kind, ins, attrs)));
  };
  return grad_check(f, inputs[which], eps);
}

}  // namespace detail

// Gradient check for one op kind at `points` random points, all inputs.
inline OpCheckResult check_op_gradients(OpKind kind, Rng& rng, int points = 10,
                                        double eps = 1e-3) {
  double worst = 0.0;
  for (int p = 0; p < points; ++p) {
    std::vector<TensorT<double>> inputs;
    OpAttrs attrs;
    switch (kind) {
      case OpKind::Matmul:
        inputs = {detail::random_tensor(rng, {3, 4}, -1, 1),
                  detail::random_tensor(rng, {4, 5}, -1, 1)};
        break;
      case OpKind::Add:
      case OpKind::Mul:
        inputs = {detail::random_tensor(rng, {2, 3}, -1, 1),
                  detail::random_tensor(rng, {3}, -1, 1)};
        break;
      case OpKind::Affine:
        attrs.scale = 1.7;
        attrs.shift = -0.3;
        inputs = {detail::random_tensor(rng, {2, 4}, -1, 1)};
        break;
      case OpKind::ConcatLastDim:
        inputs = {detail::random_tensor(rng, {2, 3}, -1, 1),
                  detail::random_tensor(rng, {2, 2}, -1, 1),
                  detail::random_tensor(rng, {2, 4}, -1, 1)};
        break;
      case OpKind::SoftmaxRows:
        inputs = {detail::random_tensor(rng, {3, 5}, -2, 2)};
        break;
      case OpKind::LayerNorm:
        attrs.eps = 1e-5;
        inputs = {detail::random_tensor(rng, {4, 6}, -1, 1),
                  detail::random_tensor(rng, {6}, 0.5, 1.5),
                  detail::random_tensor(rng, {6}, -0.5, 0.5)};
        break;
      case OpKind::Tanh:
      case OpKind::Sigmoid:
      case OpKind::Gelu:
      case OpKind::Exp:
        inputs = {detail::random_tensor(rng, {2, 5}, -2, 2)};
        break;
      case OpKind::Log:
        inputs = {detail::random_tensor(rng, {2, 5}, 0.5, 2.0)};
        break;
      case OpKind::Clamp: {
        attrs.lo = 0.0;
        attrs.hi = 1.0;
        // keep samples away from the kinks by a 10*eps margin
        std::vector<double> v(10);
        for (auto& x : v) {
          do {
            x = rng.uniform(-0.5, 1.5);
          } while (std::abs(x - attrs.lo) < 10 * eps ||
                   std::abs(x - attrs.hi) < 10 * eps);
        }
        inputs = {TensorT<double>::from({2, 5}, std::move(v))};
        break;
      }
      case OpKind::Sum:
      case OpKind::Mean:
        inputs = {detail::random_tensor(rng, {2, 4}, -1, 1)};
        break;
    }
    for (std::size_t which = 0; which < inputs.size(); ++which) {
      worst = std::max(worst,
                       detail::check_op_input(kind, inputs, attrs, which, rng, eps));
    }
  }
  return {kind, worst};
}

// One result per op kind, in enum order.
inline std::vector<OpCheckResult> run_op_gradcheck_suite(std::uint64_t seed) {
  std::vector<OpCheckResult> results;
  for (OpKind kind : kAllOpKinds) {
    Rng rng(seed ^ (0x100 + static_cast<std::uint64_t>(kind)));
    results.push_back(check_op_gradients(kind, rng));
  }
  return results;
}

}  // namespace vdm
