#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vdmask/common.hpp"
#include "vdmask/kernels.hpp"
#include "vdmask/tape.hpp"
#include "vdmask/tensor.hpp"

// Differentiable tensor ops. Every op validates shapes, checks its output
// for non-finite values, and records itself on the active tape when any
// input requires grad. Elementwise binaries broadcast a scalar or a tensor
// whose shape is a trailing suffix of the other operand's (leading batch
// dims only).

namespace vdm {

namespace detail {

template <typename S>
void check_finite(OpKind kind, const std::vector<S>& v) {
  for (S x : v) {
    if (!std::isfinite(static_cast<double>(x))) {
      throw NumericError(std::string(op_name(kind)) +
                         ": non-finite value in output");
    }
  }
}

enum class Bcast { Same, ScalarA, ScalarB, LeadA, LeadB };

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  for (std::size_t i = 0; i < small.size(); ++i) {
    if (small[small.size() - 1 - i] != big[big.size() - 1 - i]) return false;
  }
  return true;
}

inline Bcast broadcast_kind(OpKind kind, const Shape& a, const Shape& b) {
  if (a == b) return Bcast::Same;
  if (shape_numel(b) == 1) return Bcast::ScalarB;
  if (shape_numel(a) == 1) return Bcast::ScalarA;
  if (is_suffix(b, a)) return Bcast::LeadB;
  if (is_suffix(a, b)) return Bcast::LeadA;
  throw DimensionError(std::string(op_name(kind)) + ": shapes " + shape_str(a) +
                       " and " + shape_str(b) + " do not broadcast");
}

template <typename S>
TensorT<S> make_output(Shape shape) {
  return TensorT<S>::zeros(std::move(shape));
}

template <typename S>
void finish(OpKind kind, OpAttrs attrs, std::vector<TensorT<S>> inputs,
            TensorT<S>& out) {
  detail::check_finite(kind, out.values());
  auto& tape = active_tape<S>();
  bool rg = false;
  for (const auto& t : inputs) rg = rg || t.requires_grad();
  rg = rg && tape.recording();
  out.set_requires_grad(rg);
  if (!rg) return;
  TapeOpT<S> op;
  op.kind = kind;
  op.attrs = attrs;
  op.inputs.reserve(inputs.size());
  for (auto& t : inputs) op.inputs.push_back(t.node());
  op.output = out.node();
  tape.record(std::move(op));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// forward ops

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b,
                  bool transpose_a = false, bool transpose_b = false) {
  if (a.shape().size() != 2 || b.shape().size() != 2) {
    throw DimensionError("matmul: expects rank-2 tensors, got " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::int64_t m = transpose_a ? a.shape()[1] : a.shape()[0];
  std::int64_t k = transpose_a ? a.shape()[0] : a.shape()[1];
  std::int64_t kb = transpose_b ? b.shape()[1] : b.shape()[0];
  std::int64_t n = transpose_b ? b.shape()[0] : b.shape()[1];
  if (k != kb) {
    throw DimensionError("matmul: inner dimensions differ, " +
                         shape_str(a.shape()) + (transpose_a ? "^T" : "") +
                         " x " + shape_str(b.shape()) +
                         (transpose_b ? "^T" : ""));
  }
  auto out = detail::make_output<S>({m, n});
  gemm_acc(transpose_a, transpose_b, m, k, n, a.values().data(),
           b.values().data(), out.values().data());
  OpAttrs attrs;
  attrs.transpose_a = transpose_a;
  attrs.transpose_b = transpose_b;
  detail::finish(OpKind::Matmul, attrs, {a, b}, out);
  return out;
}

namespace detail {

template <typename S, typename F>
TensorT<S> binary_elementwise(OpKind kind, const TensorT<S>& a,
                              const TensorT<S>& b, F f) {
  Bcast bc = broadcast_kind(kind, a.shape(), b.shape());
  const Shape& out_shape =
      (bc == Bcast::ScalarA || bc == Bcast::LeadA) ? b.shape() : a.shape();
  auto out = make_output<S>(out_shape);
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  std::int64_t n = out.numel();
  std::int64_t na = a.numel(), nb = b.numel();
  switch (bc) {
    case Bcast::Same:
      for (std::int64_t i = 0; i < n; ++i) ov[i] = f(av[i], bv[i]);
      break;
    case Bcast::ScalarA:
      for (std::int64_t i = 0; i < n; ++i) ov[i] = f(av[0], bv[i]);
      break;
    case Bcast::ScalarB:
      for (std::int64_t i = 0; i < n; ++i) ov[i] = f(av[i], bv[0]);
      break;
    case Bcast::LeadA:
      for (std::int64_t i = 0; i < n; ++i) ov[i] = f(av[i % na], bv[i]);
      break;
    case Bcast::LeadB:
      for (std::int64_t i = 0; i < n; ++i) ov[i] = f(av[i], bv[i % nb]);
      break;
  }
  finish(kind, OpAttrs{}, {a, b}, out);
  return out;
}

}  // namespace detail

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  return detail::binary_elementwise(OpKind::Add, a, b,
                                    [](S x, S y) { return x + y; });
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  return detail::binary_elementwise(OpKind::Mul, a, b,
                                    [](S x, S y) { return x * y; });
}

// y = scale*x + shift with constant coefficients.
template <typename S>
TensorT<S> affine(const TensorT<S>& x, double scale, double shift) {
  auto out = detail::make_output<S>(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  S s = static_cast<S>(scale), c = static_cast<S>(shift);
  for (std::int64_t i = 0; i < x.numel(); ++i) ov[i] = s * xv[i] + c;
  OpAttrs attrs;
  attrs.scale = scale;
  attrs.shift = shift;
  detail::finish(OpKind::Affine, attrs, {x}, out);
  return out;
}

template <typename S>
TensorT<S> concat_last_dim(const std::vector<TensorT<S>>& xs) {
  if (xs.empty()) throw ContractError("concat_last_dim: no inputs");
  const Shape& s0 = xs[0].shape();
  std::int64_t total_last = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    if (s.size() != s0.size()) {
      throw DimensionError("concat_last_dim: rank mismatch " + shape_str(s0) +
                           " vs " + shape_str(s));
    }
    for (std::size_t d = 0; d + 1 < s.size(); ++d) {
      if (s[d] != s0[d]) {
        throw DimensionError("concat_last_dim: leading dims differ " +
                             shape_str(s0) + " vs " + shape_str(s));
      }
    }
    total_last += s.back();
  }
  Shape out_shape = s0;
  out_shape.back() = total_last;
  auto out = detail::make_output<S>(out_shape);
  std::int64_t rows = shape_numel(out_shape) / total_last;
  auto& ov = out.values();
  for (std::int64_t r = 0; r < rows; ++r) {
    std::int64_t off = 0;
    for (const auto& x : xs) {
      std::int64_t w = x.shape().back();
      const S* src = x.values().data() + r * w;
      S* dst = ov.data() + r * total_last + off;
      for (std::int64_t j = 0; j < w; ++j) dst[j] = src[j];
      off += w;
    }
  }
  detail::finish(OpKind::ConcatLastDim, OpAttrs{}, xs, out);
  return out;
}

// Softmax over the last dimension, independently per row.
template <typename S>
TensorT<S> softmax_rows(const TensorT<S>& x) {
  std::int64_t cols = x.shape().back();
  std::int64_t rows = x.numel() / cols;
  auto out = detail::make_output<S>(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::int64_t r = 0; r < rows; ++r) {
    const S* xr = xv.data() + r * cols;
    S* yr = ov.data() + r * cols;
    S mx = xr[0];
    for (std::int64_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    S sum = S(0);
    for (std::int64_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    for (std::int64_t j = 0; j < cols; ++j) yr[j] /= sum;
  }
  detail::finish(OpKind::SoftmaxRows, OpAttrs{}, {x}, out);
  return out;
}

// Normalizes the last dimension to zero mean / unit variance, then applies
// the learned elementwise scale and shift.
template <typename S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gamma,
                      const TensorT<S>& beta, double eps = 1e-5) {
  std::int64_t cols = x.shape().back();
  if (gamma.shape() != Shape{cols} || beta.shape() != Shape{cols}) {
    throw DimensionError("layer_norm: scale/shift must be [" +
                         std::to_string(cols) + "], got " +
                         shape_str(gamma.shape()) + " and " +
                         shape_str(beta.shape()));
  }
  std::int64_t rows = x.numel() / cols;
  auto out = detail::make_output<S>(x.shape());
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  auto& ov = out.values();
  for (std::int64_t r = 0; r < rows; ++r) {
    const S* xr = xv.data() + r * cols;
    S* yr = ov.data() + r * cols;
    S mean = S(0);
    for (std::int64_t j = 0; j < cols; ++j) mean += xr[j];
    mean /= static_cast<S>(cols);
    S var = S(0);
    for (std::int64_t j = 0; j < cols; ++j) {
      S d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<S>(cols);
    S inv = S(1) / std::sqrt(var + static_cast<S>(eps));
    for (std::int64_t j = 0; j < cols; ++j) {
      yr[j] = (xr[j] - mean) * inv * gv[j] + bv[j];
    }
  }
  OpAttrs attrs;
  attrs.eps = eps;
  detail::finish(OpKind::LayerNorm, attrs, {x, gamma, beta}, out);
  return out;
}

namespace detail {

template <typename S, typename F>
TensorT<S> unary_elementwise(OpKind kind, const TensorT<S>& x, F f,
                             OpAttrs attrs = {}) {
  auto out = make_output<S>(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::int64_t i = 0; i < x.numel(); ++i) ov[i] = f(xv[i]);
  finish(kind, attrs, {x}, out);
  return out;
}

template <typename S>
S sigmoid_scalar(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  S e = std::exp(x);
  return e / (S(1) + e);
}

// tanh-approximated gelu
template <typename S>
S gelu_scalar(S x) {
  const S c = static_cast<S>(0.7978845608028654);  // sqrt(2/pi)
  const S a = static_cast<S>(0.044715);
  return S(0.5) * x * (S(1) + std::tanh(c * (x + a * x * x * x)));
}

template <typename S>
S gelu_grad_scalar(S x) {
  const S c = static_cast<S>(0.7978845608028654);
  const S a = static_cast<S>(0.044715);
  S u = c * (x + a * x * x * x);
  S t = std::tanh(u);
  S sech2 = S(1) - t * t;
  return S(0.5) * (S(1) + t) + S(0.5) * x * sech2 * c * (S(1) + S(3) * a * x * x);
}

}  // namespace detail

template <typename S>
TensorT<S> tanh(const TensorT<S>& x) {
  return detail::unary_elementwise(OpKind::Tanh, x,
                                   [](S v) { return std::tanh(v); });
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& x) {
  return detail::unary_elementwise(OpKind::Sigmoid, x,
                                   [](S v) { return detail::sigmoid_scalar(v); });
}

template <typename S>
TensorT<S> gelu(const TensorT<S>& x) {
  return detail::unary_elementwise(OpKind::Gelu, x,
                                   [](S v) { return detail::gelu_scalar(v); });
}

template <typename S>
TensorT<S> exp(const TensorT<S>& x) {
  return detail::unary_elementwise(OpKind::Exp, x,
                                   [](S v) { return std::exp(v); });
}

template <typename S>
TensorT<S> log(const TensorT<S>& x) {
  for (S v : x.values()) {
    if (!(v > S(0))) {
      throw NumericError("log: argument outside domain (got " +
                         std::to_string(static_cast<double>(v)) + ")");
    }
  }
  return detail::unary_elementwise(OpKind::Log, x,
                                   [](S v) { return std::log(v); });
}

// Gradient is 1 inside [lo,hi] (inclusive) and 0 outside.
template <typename S>
TensorT<S> clamp(const TensorT<S>& x, double lo, double hi) {
  OpAttrs attrs;
  attrs.lo = lo;
  attrs.hi = hi;
  S l = static_cast<S>(lo), h = static_cast<S>(hi);
  return detail::unary_elementwise(
      OpKind::Clamp, x, [l, h](S v) { return std::min(std::max(v, l), h); },
      attrs);
}

template <typename S>
TensorT<S> sum(const TensorT<S>& x) {
  auto out = detail::make_output<S>({1});
  S acc = S(0);
  for (S v : x.values()) acc += v;
  out.values()[0] = acc;
  detail::finish(OpKind::Sum, OpAttrs{}, {x}, out);
  return out;
}

template <typename S>
TensorT<S> mean(const TensorT<S>& x) {
  auto out = detail::make_output<S>({1});
  S acc = S(0);
  for (S v : x.values()) acc += v;
  out.values()[0] = acc / static_cast<S>(x.numel());
  detail::finish(OpKind::Mean, OpAttrs{}, {x}, out);
  return out;
}

// Uniform entry point used by the grad-check suite.
template <typename S>
TensorT<S> apply(OpKind kind, const std::vector<TensorT<S>>& inputs,
                 const OpAttrs& attrs = {}) {
  auto arity = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ContractError(std::string(op_name(kind)) + ": expected " +
                          std::to_string(n) + " inputs, got " +
                          std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::Matmul:
      arity(2);
      return matmul(inputs[0], inputs[1], attrs.transpose_a, attrs.transpose_b);
    case OpKind::Add:
      arity(2);
      return add(inputs[0], inputs[1]);
    case OpKind::Mul:
      arity(2);
      return mul(inputs[0], inputs[1]);
    case OpKind::Affine:
      arity(1);
      return affine(inputs[0], attrs.scale, attrs.shift);
    case OpKind::ConcatLastDim:
      return concat_last_dim(inputs);
    case OpKind::SoftmaxRows:
      arity(1);
      return softmax_rows(inputs[0]);
    case OpKind::LayerNorm:
      arity(3);
      return layer_norm(inputs[0], inputs[1], inputs[2], attrs.eps);
    case OpKind::Tanh:
      arity(1);
      return tanh(inputs[0]);
    case OpKind::Sigmoid:
      arity(1);
      return sigmoid(inputs[0]);
    case OpKind::Gelu:
      arity(1);
      return gelu(inputs[0]);
    case OpKind::Exp:
      arity(1);
      return exp(inputs[0]);
    case OpKind::Log:
      arity(1);
      return log(inputs[0]);
    case OpKind::Clamp:
      arity(1);
      return clamp(inputs[0], attrs.lo, attrs.hi);
    case OpKind::Sum:
      arity(1);
      return sum(inputs[0]);
    case OpKind::Mean:
      arity(1);
      return mean(inputs[0]);
  }
  throw ContractError("apply: unknown op kind");
}

// ---------------------------------------------------------------------------
// backward

namespace detail {

// Test-harness hook: when set, the tanh backward is deliberately corrupted
// so gradient-check failure paths can be exercised end to end.
inline bool tanh_backward_corrupted() {
  static const bool corrupted = [] {
    const char* v = std::getenv("VDMASK_CORRUPT_TANH_BACKWARD");
    return v != nullptr && v[0] != '\0' && v[0] != '0';
  }();
  return corrupted;
}

// Accumulates `g` (shaped like the op output) into the grad buffer of an
// input that was broadcast, reducing over the broadcast dims.
template <typename S>
void accumulate_reduced(const std::vector<S>& g, NodeT<S>& input,
                        std::int64_t out_numel) {
  auto& gi = input.grad_buffer();
  std::int64_t ni = input.numel();
  if (ni == out_numel) {
    for (std::int64_t i = 0; i < out_numel; ++i) gi[i] += g[i];
  } else if (ni == 1) {
    S acc = S(0);
    for (std::int64_t i = 0; i < out_numel; ++i) acc += g[i];
    gi[0] += acc;
  } else {
    for (std::int64_t i = 0; i < out_numel; ++i) gi[i % ni] += g[i];
  }
}

}  // namespace detail

template <typename S>
void backward_op(const TapeOpT<S>& op) {
  const std::vector<S>& go = op.output->grad;
  const std::int64_t n_out = op.output->numel();
  auto in = [&](std::size_t i) -> NodeT<S>& { return *op.inputs[i]; };
  auto wants = [&](std::size_t i) { return op.inputs[i]->requires_grad; };

  switch (op.kind) {
    case OpKind::Matmul: {
      NodeT<S>& a = in(0);
      NodeT<S>& b = in(1);
      bool ta = op.attrs.transpose_a, tb = op.attrs.transpose_b;
      std::int64_t m = ta ? a.shape[1] : a.shape[0];
      std::int64_t k = ta ? a.shape[0] : a.shape[1];
      std::int64_t n = tb ? b.shape[0] : b.shape[1];
      if (wants(0)) {
        auto& ga = a.grad_buffer();
        if (!ta) {
          gemm_acc(false, !tb, m, n, k, go.data(), b.value.data(), ga.data());
        } else {
          gemm_acc(tb, true, k, n, m, b.value.data(), go.data(), ga.data());
        }
      }
      if (wants(1)) {
        auto& gb = b.grad_buffer();
        if (!tb) {
          gemm_acc(!ta, false, k, m, n, a.value.data(), go.data(), gb.data());
        } else {
          gemm_acc(true, ta, n, m, k, go.data(), a.value.data(), gb.data());
        }
      }
      break;
    }
    case OpKind::Add: {
      if (wants(0)) detail::accumulate_reduced(go, in(0), n_out);
      if (wants(1)) detail::accumulate_reduced(go, in(1), n_out);
      break;
    }
    case OpKind::Mul: {
      NodeT<S>& a = in(0);
      NodeT<S>& b = in(1);
      std::int64_t na = a.numel(), nb = b.numel();
      auto a_at = [&](std::int64_t i) {
        return a.value[na == n_out ? i : (na == 1 ? 0 : i % na)];
      };
      auto b_at = [&](std::int64_t i) {
        return b.value[nb == n_out ? i : (nb == 1 ? 0 : i % nb)];
      };
      if (wants(0)) {
        std::vector<S> g(n_out);
        for (std::int64_t i = 0; i < n_out; ++i) g[i] = go[i] * b_at(i);
        detail::accumulate_reduced(g, a, n_out);
      }
      if (wants(1)) {
        std::vector<S> g(n_out);
        for (std::int64_t i = 0; i < n_out; ++i) g[i] = go[i] * a_at(i);
        detail::accumulate_reduced(g, b, n_out);
      }
      break;
    }
    case OpKind::Affine: {
      if (!wants(0)) break;
      auto& g = in(0).grad_buffer();
      S s = static_cast<S>(op.attrs.scale);
      for (std::int64_t i = 0; i < n_out; ++i) g[i] += s * go[i];
      break;
    }
    case OpKind::ConcatLastDim: {
      std::int64_t total_last = op.output->shape.back();
      std::int64_t rows = n_out / total_last;
      std::int64_t off = 0;
      for (std::size_t ii = 0; ii < op.inputs.size(); ++ii) {
        std::int64_t w = in(ii).shape.back();
        if (wants(ii)) {
          auto& g = in(ii).grad_buffer();
          for (std::int64_t r = 0; r < rows; ++r) {
            const S* src = go.data() + r * total_last + off;
            S* dst = g.data() + r * w;
            for (std::int64_t j = 0; j < w; ++j) dst[j] += src[j];
          }
        }
        off += w;
      }
      break;
    }
    case OpKind::SoftmaxRows: {
      if (!wants(0)) break;
      auto& g = in(0).grad_buffer();
      const auto& y = op.output->value;
      std::int64_t cols = op.output->shape.back();
      std::int64_t rows = n_out / cols;
      for (std::int64_t r = 0; r < rows; ++r) {
        const S* yr = y.data() + r * cols;
        const S* gr = go.data() + r * cols;
        S dot = S(0);
        for (std::int64_t j = 0; j < cols; ++j) dot += gr[j] * yr[j];
        S* out = g.data() + r * cols;
        for (std::int64_t j = 0; j < cols; ++j) out[j] += yr[j] * (gr[j] - dot);
      }
      break;
    }
    case OpKind::LayerNorm: {
      NodeT<S>& x = in(0);
      NodeT<S>& gamma = in(1);
      std::int64_t cols = x.shape.back();
      std::int64_t rows = x.numel() / cols;
      S eps = static_cast<S>(op.attrs.eps);
      std::vector<S> xhat(cols);
      for (std::int64_t r = 0; r < rows; ++r) {
        const S* xr = x.value.data() + r * cols;
        const S* gr = go.data() + r * cols;
        S mean = S(0);
        for (std::int64_t j = 0; j < cols; ++j) mean += xr[j];
        mean /= static_cast<S>(cols);
        S var = S(0);
        for (std::int64_t j = 0; j < cols; ++j) {
          S d = xr[j] - mean;
          var += d * d;
        }
        var /= static_cast<S>(cols);
        S inv = S(1) / std::sqrt(var + eps);
        for (std::int64_t j = 0; j < cols; ++j) xhat[j] = (xr[j] - mean) * inv;
        if (wants(1)) {
          auto& gg = gamma.grad_buffer();
          for (std::int64_t j = 0; j < cols; ++j) gg[j] += gr[j] * xhat[j];
        }
        if (wants(2)) {
          auto& gb = in(2).grad_buffer();
          for (std::int64_t j = 0; j < cols; ++j) gb[j] += gr[j];
        }
        if (wants(0)) {
          auto& gx = x.grad_buffer();
          S mean_dxhat = S(0), mean_dxhat_xhat = S(0);
          std::vector<S> dxhat(cols);
          for (std::int64_t j = 0; j < cols; ++j) {
            dxhat[j] = gr[j] * gamma.value[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xhat[j];
          }
          mean_dxhat /= static_cast<S>(cols);
          mean_dxhat_xhat /= static_cast<S>(cols);
          S* out = gx.data() + r * cols;
          for (std::int64_t j = 0; j < cols; ++j) {
            out[j] += inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
          }
        }
      }
      break;
    }
    case OpKind::Tanh: {
      if (!wants(0)) break;
      auto& g = in(0).grad_buffer();
      const auto& y = op.output->value;
      S fudge = detail::tanh_backward_corrupted() ? S(1.05) : S(1);
      for (std::int64_t i = 0; i < n_out; ++i) {
        g[i] += fudge * go[i] * (S(1) - y[i] * y[i]);
      }
      break;
    }
    case OpKind::Sigmoid: {
      if (!wants(0)) break;
      auto& g = in(0).grad_buffer();
      const auto& y = op.output->value;
      for (std::int64_t i = 0; i < n_out; ++i) {
        g[i] += go[i] * y[i] * (S(1) - y[i]);
      }
      break;
    }
    case OpKind::Gelu: {
      if (!wants(0)) break;
      auto& g = in(0).grad_buffer();
      const auto& x = in(0).value;
      for (std::int64_t i = 0; i < n_out; ++i) {
        g[i] += go[i] * detail::gelu_grad_scalar(x[i]);
      }
      break;
    }
    case OpKind::Exp: {
      if (!wants(0)) break;
      auto& g = in(0).grad_buffer();
      const auto& y = op.output->value;
      for (std::int64_t i = 0; i < n_out; ++i) g[i] += go[i] * y[i];
      break;
    }
    case OpKind::Log: {
      if (!wants(0)) break;
      auto& g = in(0).grad_buffer();
      const auto& x = in(0).value;
      for (std::int64_t i = 0; i < n_out; ++i) g[i] += go[i] / x[i];
      break;
    }
    case OpKind::Clamp: {
      if (!wants(0)) break;
      auto& g = in(0).grad_buffer();
      const auto& x = in(0).value;
      S lo = static_cast<S>(op.attrs.lo), hi = static_cast<S>(op.attrs.hi);
      for (std::int64_t i = 0; i < n_out; ++i) {
        if (x[i] >= lo && x[i] <= hi) g[i] += go[i];
      }
      break;
    }
    case OpKind::Sum: {
      if (!wants(0)) break;
      auto& g = in(0).grad_buffer();
      for (auto& v : g) v += go[0];
      break;
    }
    case OpKind::Mean: {
      if (!wants(0)) break;
      auto& g = in(0).grad_buffer();
      S scale = go[0] / static_cast<S>(in(0).numel());
      for (auto& v : g) v += scale;
      break;
    }
  }
}

}  // namespace vdm
