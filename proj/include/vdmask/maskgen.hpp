#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vdmask/hardconcrete.hpp"
#include "vdmask/vit.hpp"

// The interpreter stack: L+2 gating MLPs over the ViT trace, a linear
// stretch (alpha, beta), per-layer Hard Concrete gates aggregated by
// product, and bilinear upsampling of the patch mask to pixels.
//
// Gate k reads hbar(0) for k=0 and h(k-1) for k>=1, always concatenated
// with hbar(0); CLS rows are dropped before gating, so masks are defined
// over patches only.

namespace vdm {

template <typename S>
struct GateMlpT {
  TensorT<S> w1, b1;  // [2d, hidden], [hidden]
  TensorT<S> w2, b2;  // [hidden, 1], [1]
};

template <typename S>
struct GateStackT {
  std::vector<GateMlpT<S>> gates;  // L+2
  TensorT<S> alpha, beta;          // [1] linear stretch, trained with the gates
  TensorT<S> baseline;             // [1, d] learned masked-patch embedding
  HCParams hc;

  // phi: everything the gates' learning-rate group owns.
  void for_each_gate_param(const std::function<void(const std::string&, TensorT<S>&)>& fn) {
    for (std::size_t k = 0; k < gates.size(); ++k) {
      std::string p = "gates." + std::to_string(k) + ".";
      fn(p + "w1", gates[k].w1);
      fn(p + "b1", gates[k].b1);
      fn(p + "w2", gates[k].w2);
      fn(p + "b2", gates[k].b2);
    }
    fn("alpha", alpha);
    fn("beta", beta);
  }

  void for_each_param(const std::function<void(const std::string&, TensorT<S>&)>& fn) {
    for_each_gate_param(fn);
    fn("baseline", baseline);
  }

  void set_requires_grad(bool rg) {
    for_each_param([rg](const std::string&, TensorT<S>& t) { t.set_requires_grad(rg); });
  }
};

// Output-layer weights start at zero so the initial logits are exactly
// beta, which controls the initial masked fraction on its own.
template <typename S>
GateStackT<S> init_gate_stack(const ViTConfig& cfg, double alpha0, double beta0,
                              const HCParams& hc, Rng rng) {
  hc.validate();
  GateStackT<S> stack;
  stack.hc = hc;
  std::int64_t d = cfg.d_model;
  std::int64_t in_dim = 2 * d;
  double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (int k = 0; k < cfg.n_layers + 2; ++k) {
    GateMlpT<S> g;
    std::vector<S> w1(static_cast<std::size_t>(in_dim * d));
    for (auto& x : w1) x = static_cast<S>(rng.uniform(-bound, bound));
    std::vector<S> b1(static_cast<std::size_t>(d));
    for (auto& x : b1) x = static_cast<S>(rng.uniform(-bound, bound));
    g.w1 = TensorT<S>::param({in_dim, d}, std::move(w1));
    g.b1 = TensorT<S>::param({d}, std::move(b1));
    g.w2 = TensorT<S>::param({d, 1}, std::vector<S>(static_cast<std::size_t>(d), S(0)));
    g.b2 = TensorT<S>::param({1}, {S(0)});
    stack.gates.push_back(std::move(g));
  }
  stack.alpha = TensorT<S>::param({1}, {static_cast<S>(alpha0)});
  stack.beta = TensorT<S>::param({1}, {static_cast<S>(beta0)});
  stack.baseline = TensorT<S>::param({1, d}, std::vector<S>(static_cast<std::size_t>(d), S(0)));
  return stack;
}

namespace detail {

// Constant [N,T] selector dropping the CLS row.
template <typename S>
TensorT<S> drop_cls(const TensorT<S>& h) {
  std::int64_t t = h.shape()[0];
  std::int64_t n = t - 1;
  std::vector<S> sel(static_cast<std::size_t>(n * t), S(0));
  for (std::int64_t i = 0; i < n; ++i) sel[i * t + i + 1] = S(1);
  return matmul(TensorT<S>::from({n, t}, std::move(sel)), h);
}

}  // namespace detail

// u(k) = alpha * MLP([hbar0; state_k]) + beta, one [N,1] tensor per gate.
template <typename S>
std::vector<TensorT<S>> gate_logits(const ForwardTraceT<S>& trace,
                                    const GateStackT<S>& stack) {
  std::size_t expected = trace.h.size() + 1;  // hbar0 gate + one per state
  if (stack.gates.size() != expected) {
    throw DimensionError("gate_logits: stack has " +
                         std::to_string(stack.gates.size()) +
                         " gates but trace provides " + std::to_string(expected));
  }
  std::vector<TensorT<S>> us;
  us.reserve(stack.gates.size());
  for (std::size_t k = 0; k < stack.gates.size(); ++k) {
    try {
      TensorT<S> state =
          k == 0 ? trace.hbar0 : detail::drop_cls(trace.h[k - 1]);
      auto in = concat_last_dim<S>({trace.hbar0, state});
      const auto& g = stack.gates[k];
      auto hidden = tanh(add(matmul(in, g.w1), g.b1));
      auto raw = add(matmul(hidden, g.w2), g.b2);
      us.push_back(add(mul(raw, stack.alpha), stack.beta));
    } catch (const DimensionError& e) {
      throw DimensionError(std::string(e.what()) + " (gate " +
                           std::to_string(k) + ")");
    }
  }
  return us;
}

enum class MaskMode { Train, Infer };

template <typename S>
struct MaskTensorsT {
  std::vector<TensorT<S>> per_layer;  // [N,1] each
  TensorT<S> z;                       // elementwise product, [N,1]
};

// Train mode samples each layer's Hard Concrete gate with the provided
// noise; infer mode uses the deterministic gate. z is the product over all
// gates, so any layer can veto a patch.
template <typename S>
MaskTensorsT<S> make_mask(const std::vector<TensorT<S>>& us, MaskMode mode,
                          const std::vector<TensorT<S>>* noise,
                          const HCParams& hc) {
  if (mode == MaskMode::Train && (noise == nullptr || noise->size() != us.size())) {
    throw ContractError("make_mask: train mode requires one noise tensor per gate");
  }
  MaskTensorsT<S> out;
  for (std::size_t k = 0; k < us.size(); ++k) {
    TensorT<S> z = mode == MaskMode::Train
                       ? hc_sample(us[k], (*noise)[k], hc)
                       : hc_deterministic_gate(us[k], hc);
    out.per_layer.push_back(z);
    out.z = k == 0 ? z : mul(out.z, z);
  }
  return out;
}

// Value-level mask snapshot.
struct PatchMask {
  std::vector<float> z;
  std::vector<std::vector<float>> per_layer;
};

template <typename S>
PatchMask snapshot_mask(const MaskTensorsT<S>& m) {
  PatchMask pm;
  pm.z.assign(m.z.values().begin(), m.z.values().end());
  for (const auto& layer : m.per_layer) {
    pm.per_layer.emplace_back(layer.values().begin(), layer.values().end());
  }
  return pm;
}

// Bilinear upsampling of per-patch values to a pixel grid. Each patch value
// sits at its patch-center pixel (i*P + P/2); pixels outside the outer
// centers clamp to the nearest center, so output stays within [min z, max z].
inline std::vector<float> upsample_mask(const std::vector<float>& z,
                                        const ViTConfig& cfg) {
  int g = cfg.n_patches_side(), ps = cfg.patch_size, size = cfg.image_size;
  if (static_cast<int>(z.size()) != g * g) {
    throw DimensionError("upsample: mask has " + std::to_string(z.size()) +
                         " entries, expected " + std::to_string(g * g));
  }
  auto axis = [&](int pos, int& i0, float& t) {
    double c0 = ps / 2;
    double off = (pos - c0) / ps;
    if (off <= 0 || g == 1) {
      i0 = 0;
      t = 0;
    } else if (off >= g - 1) {
      i0 = g - 2 >= 0 ? g - 2 : 0;
      t = 1;
    } else {
      i0 = static_cast<int>(off);
      t = static_cast<float>(off - i0);
    }
  };
  std::vector<float> out(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    int iy;
    float ty;
    axis(y, iy, ty);
    int iy1 = g == 1 ? 0 : iy + 1;
    for (int x = 0; x < size; ++x) {
      int ix;
      float tx;
      axis(x, ix, tx);
      int ix1 = g == 1 ? 0 : ix + 1;
      float v00 = z[static_cast<std::size_t>(iy) * g + ix];
      float v01 = z[static_cast<std::size_t>(iy) * g + ix1];
      float v10 = z[static_cast<std::size_t>(iy1) * g + ix];
      float v11 = z[static_cast<std::size_t>(iy1) * g + ix1];
      float top = v00 + (v01 - v00) * tx;
      float bot = v10 + (v11 - v10) * tx;
      out[static_cast<std::size_t>(y) * size + x] = top + (bot - top) * ty;
    }
  }
  return out;
}

inline double kl_divergence(const std::vector<float>& p,
                            const std::vector<float>& q) {
  double kl = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0) continue;
    double qq = std::max(static_cast<double>(q[i]), 1e-38);
    kl += static_cast<double>(p[i]) * (std::log(static_cast<double>(p[i])) - std::log(qq));
  }
  return kl;
}

struct ExplainResult {
  PatchMask mask;
  std::vector<float> saliency;  // image_size x image_size
  double kl = 0;
  int class_unmasked = 0;
  int class_masked = 0;
};

// Full inference pipeline: forward -> gates -> deterministic mask ->
// masked forward -> KL against the unmasked distribution.
template <typename S>
ExplainResult explain(const std::vector<S>& image, const ViTParamsT<S>& vit,
                      const ViTConfig& cfg, const GateStackT<S>& stack) {
  NoGradGuardT<S> guard;
  auto trace = vit_forward(image, vit, cfg);
  auto us = gate_logits(trace, stack);
  const std::vector<TensorT<S>>* no_noise = nullptr;
  auto mask = make_mask(us, MaskMode::Infer, no_noise, stack.hc);
  auto masked = vit_masked_forward_embedded(trace.hbar0, mask.z,
                                            stack.baseline, vit, cfg);
  ExplainResult res;
  res.mask = snapshot_mask(mask);
  res.saliency = upsample_mask(res.mask.z, cfg);
  std::vector<float> p(trace.probs.values().begin(), trace.probs.values().end());
  std::vector<float> q(masked.probs.values().begin(), masked.probs.values().end());
  res.kl = kl_divergence(p, q);
  res.class_unmasked = classify(trace);
  res.class_masked = classify(masked);
  return res;
}

}  // namespace vdm
