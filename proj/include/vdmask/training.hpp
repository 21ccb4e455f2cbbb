#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vdmask/data.hpp"
#include "vdmask/maskgen.hpp"
#include "vdmask/optimizer.hpp"
#include "vdmask/vit.hpp"

// Lagrangian-relaxed training: minimize the expected-L0 surrogate subject
// to KL(y || y_masked) <= margin, with the multiplier lambda ascending on
// the constraint violation. Three learning-rate groups: gates (phi),
// baseline vector, lambda.

namespace vdm {

struct TrainConfig {
  double lr_gates = 2e-5;
  double lr_baseline = 1e-3;
  double lr_lambda = 0.3;
  double margin = 0.1;
  double lambda_init = 20.0;
  int epochs = 100;
  int batch_size = 16;
  int lookahead_k = 5;
  double lookahead_alpha = 0.5;
  std::uint64_t seed = 0;
  // Guardrails realizing the known divergence modes: (a) lambda pinned at
  // zero while nearly everything is masked, (b) KL stuck far above the
  // margin, (c) nothing masked at all after the warmup epochs.
  double guard_lambda_floor = 1e-3;
  double guard_masked_hi = 0.95;
  double guard_kl_factor = 50.0;
  int guard_window = 100;
  double guard_masked_lo = 0.01;
  int guard_warmup_epochs = 3;

  void validate() const {
    if (lr_gates <= 0 || lr_baseline <= 0) {
      throw ContractError("train config: learning rates must be positive");
    }
    if (lr_lambda < 0) throw ContractError("train config: lr_lambda must be >= 0");
    if (margin <= 0) throw ContractError("train config: margin must be positive");
    if (lambda_init < 0) throw ContractError("train config: lambda_init must be >= 0");
    if (lookahead_alpha <= 0 || lookahead_alpha > 1) {
      throw ContractError("train config: lookahead_alpha must be in (0,1]");
    }
    if (batch_size < 1 || epochs < 0) {
      throw ContractError("train config: bad batch size or epoch count");
    }
  }
};

struct StepStats {
  std::int64_t step = 0;
  double l0 = 0;
  double kl = 0;
  double lambda = 0;
  double masked_fraction = 0;
};

struct LagrangianState {
  double lambda = 0;
  std::vector<StepStats> history;
};

// lambda <- max(0, lambda + lr * (kl - margin)); exact gradient ascent on
// the relaxation, projected onto lambda >= 0.
inline double lambda_step(double lambda, double kl, double margin, double lr) {
  return std::max(0.0, lambda + lr * (kl - margin));
}

// Per-image constants captured from the frozen ViT's unmasked forward pass.
template <typename S>
struct TraceCacheEntryT {
  TensorT<S> hbar0;                     // [N, d]
  std::vector<TensorT<S>> gate_states;  // L+2 states, CLS dropped
  TensorT<S> y;                         // [1, C] unmasked probs
  double sum_y_log_y = 0;               // sum_i y_i ln y_i
};

template <typename S>
TraceCacheEntryT<S> make_cache_entry(const ForwardTraceT<S>& trace) {
  TraceCacheEntryT<S> e;
  e.hbar0 = trace.hbar0.clone();
  e.hbar0.set_requires_grad(false);
  e.gate_states.push_back(e.hbar0);
  for (const auto& h : trace.h) {
    auto s = detail::drop_cls(h).clone();
    s.set_requires_grad(false);
    e.gate_states.push_back(s);
  }
  e.y = trace.probs.clone();
  e.y.set_requires_grad(false);
  for (S p : e.y.values()) {
    if (p > S(0)) {
      e.sum_y_log_y += static_cast<double>(p) * std::log(static_cast<double>(p));
    }
  }
  return e;
}

// Gate logits straight from cached states (same math as gate_logits on a
// live trace).
template <typename S>
std::vector<TensorT<S>> gate_logits_cached(const TraceCacheEntryT<S>& entry,
                                           const GateStackT<S>& stack) {
  if (stack.gates.size() != entry.gate_states.size()) {
    throw DimensionError("gate_logits: stack has " +
                         std::to_string(stack.gates.size()) +
                         " gates but cache provides " +
                         std::to_string(entry.gate_states.size()));
  }
  std::vector<TensorT<S>> us;
  us.reserve(stack.gates.size());
  for (std::size_t k = 0; k < stack.gates.size(); ++k) {
    auto in = concat_last_dim<S>({entry.hbar0, entry.gate_states[k]});
    const auto& g = stack.gates[k];
    auto hidden = tanh(add(matmul(in, g.w1), g.b1));
    auto raw = add(matmul(hidden, g.w2), g.b2);
    us.push_back(add(mul(raw, stack.alpha), stack.beta));
  }
  return us;
}

// KL(y || softmax(masked_logits)) as a graph node; y is a constant. The
// max-shift is treated as a constant, which leaves both the value and the
// gradient of log-sum-exp exact.
template <typename S>
TensorT<S> kl_to_masked(const TensorT<S>& y, double sum_y_log_y,
                        const TensorT<S>& masked_logits) {
  S mx = masked_logits.values()[0];
  for (S v : masked_logits.values()) mx = std::max(mx, v);
  auto shifted = affine(masked_logits, 1.0, -static_cast<double>(mx));
  auto lse = add(log(sum(exp(shifted))), TensorT<S>::scalar(mx));
  auto logq = add(masked_logits, affine(lse, -1.0, 0.0));
  auto cross = sum(mul(y, logq));
  return affine(cross, -1.0, sum_y_log_y);
}

template <typename S>
struct DiffmaskLossT {
  TensorT<S> total;  // l0 + lambda*(kl - margin)
  TensorT<S> l0;
  TensorT<S> kl;
  double masked_fraction = 0;  // deterministic product mask, binarized at 0.5
};

// Noise layout: noise[item][gate] with shape [N,1].
template <typename S>
using DiffmaskNoise = std::vector<std::vector<TensorT<S>>>;

template <typename S>
DiffmaskNoise<S> draw_diffmask_noise(Rng& rng, std::size_t n_items,
                                     std::size_t n_gates, std::int64_t n_patches) {
  DiffmaskNoise<S> noise(n_items);
  for (auto& item : noise) {
    item.reserve(n_gates);
    for (std::size_t k = 0; k < n_gates; ++k) {
      std::vector<S> v(static_cast<std::size_t>(n_patches));
      for (auto& x : v) x = static_cast<S>(rng.uniform01());
      item.push_back(TensorT<S>::from({n_patches, 1}, std::move(v)));
    }
  }
  return noise;
}

// Mean-over-batch loss. The ViT must be frozen (its params not requiring
// grad); gradient flows only to phi and the baseline.
template <typename S>
DiffmaskLossT<S> diffmask_loss(const std::vector<const TraceCacheEntryT<S>*>& batch,
                               const ViTParamsT<S>& vit, const ViTConfig& cfg,
                               const GateStackT<S>& stack, double lambda,
                               double margin, const DiffmaskNoise<S>& noise) {
  if (noise.size() != batch.size()) {
    throw ContractError("diffmask_loss: need one noise set per batch item");
  }
  std::vector<TensorT<S>> kls, l0s;
  double masked = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& entry = *batch[i];
    auto us = gate_logits_cached(entry, stack);
    auto mask = make_mask(us, MaskMode::Train, &noise[i], stack.hc);
    auto traced = vit_masked_forward_embedded(entry.hbar0, mask.z,
                                              stack.baseline, vit, cfg);
    kls.push_back(kl_to_masked(entry.y, entry.sum_y_log_y, traced.logits));
    TensorT<S> item_l0;
    for (std::size_t k = 0; k < us.size(); ++k) {
      auto s = hc_expected_l0(us[k], stack.hc);
      item_l0 = k == 0 ? s : add(item_l0, s);
    }
    l0s.push_back(item_l0);
    // diagnostic: expected fraction of patches whose deterministic product
    // gate falls below 1/2
    std::int64_t n = cfg.n_patches();
    for (std::int64_t pi = 0; pi < n; ++pi) {
      double prod = 1.0;
      for (const auto& u : us) {
        prod *= hc_deterministic_gate_scalar(
            static_cast<double>(u.values()[static_cast<std::size_t>(pi)]), stack.hc);
      }
      if (prod < 0.5) masked += 1.0;
    }
  }
  DiffmaskLossT<S> out;
  out.kl = mean(concat_last_dim(kls));
  out.l0 = mean(concat_last_dim(l0s));
  auto penalty = mul(TensorT<S>::scalar(static_cast<S>(lambda)),
                     affine(out.kl, 1.0, -margin));
  out.total = add(out.l0, penalty);
  out.masked_fraction =
      masked / (static_cast<double>(batch.size()) * cfg.n_patches());
  return out;
}

struct EpochStats {
  int epoch = 0;
  double mean_kl = 0;
  double mean_l0 = 0;
  double mean_masked_fraction = 0;
  double lambda_end = 0;
};

struct DiffmaskReport {
  LagrangianState state;
  std::vector<EpochStats> epochs;
  double final_eval_kl = 0;           // deterministic masks on the eval split
  double final_eval_masked_fraction = 0;
};

struct VitTrainConfig {
  int max_epochs = 20;
  int batch_size = 16;
  double lr = 5e-5;
  double weight_decay = 1e-2;
  int patience = 5;
  std::uint64_t seed = 0;
};

struct VitEpochStats {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_accuracy = 0;
};

struct VitTrainReport {
  std::vector<VitEpochStats> epochs;
  double best_val_accuracy = 0;
  int best_epoch = -1;
  bool early_stopped = false;
};

// Cross-entropy training with a per-epoch linear learning-rate decay and
// early stopping on validation accuracy. Returns best-on-validation params
// in `params`.
VitTrainReport train_vit(ViTParamsT<float>& params, const ViTConfig& cfg,
                         const std::vector<LabeledImage>& train,
                         const std::vector<LabeledImage>& val,
                         const VitTrainConfig& rc);

double evaluate_vit_accuracy(const ViTParamsT<float>& params, const ViTConfig& cfg,
                             const std::vector<LabeledImage>& images);

// Trains the gate stack against the ViT, which is frozen on entry (its
// parameters stop requiring grad). Appends one StepStats row per step;
// throws TrainingDivergedError when a guardrail fires.
DiffmaskReport train_diffmask(GateStackT<float>& stack, ViTParamsT<float>& vit,
                              const ViTConfig& cfg,
                              const std::vector<LabeledImage>& train,
                              const std::vector<LabeledImage>& eval_split,
                              const TrainConfig& tc);

// Mean eval-split KL and binarized masked fraction under deterministic masks.
std::pair<double, double> eval_diffmask_kl(const GateStackT<float>& stack,
                                           const ViTParamsT<float>& vit,
                                           const ViTConfig& cfg,
                                           const std::vector<LabeledImage>& images);

}  // namespace vdm
