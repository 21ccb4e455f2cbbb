#include "vdmask/training.hpp"

#include <algorithm>
#include <numeric>

namespace vdm {

namespace {

TensorT<float> cross_entropy(const TensorT<float>& logits, int label) {
  float mx = logits.values()[0];
  for (float v : logits.values()) mx = std::max(mx, v);
  auto shifted = affine(logits, 1.0, -static_cast<double>(mx));
  auto lse = add(log(sum(exp(shifted))), TensorT<float>::scalar(mx));
  std::vector<float> onehot(logits.values().size(), 0.0f);
  onehot[static_cast<std::size_t>(label)] = 1.0f;
  auto pick = sum(mul(TensorT<float>::from(logits.shape(), std::move(onehot)), logits));
  return add(lse, affine(pick, -1.0, 0.0));
}

std::vector<std::vector<float>> normalize_all(const std::vector<LabeledImage>& imgs) {
  std::vector<std::vector<float>> out;
  out.reserve(imgs.size());
  for (const auto& img : imgs) out.push_back(normalize_image(img.pixels));
  return out;
}

}  // namespace

double evaluate_vit_accuracy(const ViTParamsT<float>& params, const ViTConfig& cfg,
                             const std::vector<LabeledImage>& images) {
  NoGradGuard guard;
  std::size_t correct = 0;
  for (const auto& img : images) {
    auto trace = vit_forward(normalize_image(img.pixels), params, cfg);
    if (classify(trace) == img.label) ++correct;
  }
  return images.empty() ? 0.0 : static_cast<double>(correct) / images.size();
}

VitTrainReport train_vit(ViTParamsT<float>& params, const ViTConfig& cfg,
                         const std::vector<LabeledImage>& train,
                         const std::vector<LabeledImage>& val,
                         const VitTrainConfig& rc) {
  cfg.validate();
  if (train.empty() || val.empty()) {
    throw ContractError("train_vit: empty train or validation split");
  }
  auto train_floats = normalize_all(train);

  params.set_requires_grad(true);
  std::vector<TensorT<float>> tensors;
  params.for_each_param(
      [&](const std::string&, TensorT<float>& t) { tensors.push_back(t); });
  AdamConfig ac;
  ac.lr = rc.lr;
  ac.weight_decay = rc.weight_decay;
  AdamT<float> opt(tensors, ac);

  Rng shuffle_rng = Rng(rc.seed).derive(0xA11CE);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  VitTrainReport report;
  std::vector<std::vector<float>> best_values;
  auto snapshot = [&] {
    best_values.clear();
    params.for_each_param([&](const std::string&, TensorT<float>& t) {
      best_values.push_back(t.values());
    });
  };

  for (int epoch = 0; epoch < rc.max_epochs; ++epoch) {
    // linear decay to zero at max_epochs
    double lr = rc.lr * (1.0 - static_cast<double>(epoch) / rc.max_epochs);
    opt.config().lr = lr;
    shuffle_rng.shuffle(order);

    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += rc.batch_size) {
      std::size_t end = std::min(order.size(), start + rc.batch_size);
      std::vector<TensorT<float>> ces;
      for (std::size_t i = start; i < end; ++i) {
        auto trace = vit_forward(train_floats[order[i]], params, cfg);
        ces.push_back(cross_entropy(trace.logits, train[order[i]].label));
      }
      auto loss = mean(concat_last_dim(ces));
      loss_sum += loss.item();
      ++batches;
      active_tape<float>().backward(loss);
      opt.step();
      opt.zero_grad();
    }

    double acc = evaluate_vit_accuracy(params, cfg, val);
    report.epochs.push_back({epoch, lr, loss_sum / std::max<std::size_t>(1, batches), acc});
    if (acc > report.best_val_accuracy) {
      report.best_val_accuracy = acc;
      report.best_epoch = epoch;
      snapshot();
    }
    if (epoch >= 3 && report.best_val_accuracy <= 1.0 / cfg.n_classes) {
      throw ConfigError(
          "train_vit: validation accuracy has not exceeded chance after 3 epochs");
    }
    if (epoch - report.best_epoch >= rc.patience) {
      report.early_stopped = true;
      break;
    }
  }

  if (!best_values.empty()) {
    std::size_t i = 0;
    params.for_each_param([&](const std::string&, TensorT<float>& t) {
      t.values() = best_values[i++];
    });
  }
  return report;
}

std::pair<double, double> eval_diffmask_kl(const GateStackT<float>& stack,
                                           const ViTParamsT<float>& vit,
                                           const ViTConfig& cfg,
                                           const std::vector<LabeledImage>& images) {
  double kl_sum = 0, masked_sum = 0;
  for (const auto& img : images) {
    auto res = explain(normalize_image(img.pixels), vit, cfg, stack);
    kl_sum += res.kl;
    int masked = 0;
    for (float z : res.mask.z) {
      if (z < 0.5f) ++masked;
    }
    masked_sum += static_cast<double>(masked) / res.mask.z.size();
  }
  double n = images.empty() ? 1.0 : static_cast<double>(images.size());
  return {kl_sum / n, masked_sum / n};
}

DiffmaskReport train_diffmask(GateStackT<float>& stack, ViTParamsT<float>& vit,
                              const ViTConfig& cfg,
                              const std::vector<LabeledImage>& train,
                              const std::vector<LabeledImage>& eval_split,
                              const TrainConfig& tc) {
  tc.validate();
  cfg.validate();
  if (train.empty()) throw ContractError("train_diffmask: empty train split");

  // The interpreted model stays frozen; only phi and the baseline learn.
  vit.set_requires_grad(false);
  stack.set_requires_grad(true);

  std::vector<TraceCacheEntryT<float>> cache;
  cache.reserve(train.size());
  {
    NoGradGuard guard;
    for (const auto& img : train) {
      cache.push_back(make_cache_entry(vit_forward(normalize_image(img.pixels), vit, cfg)));
    }
  }

  std::vector<TensorT<float>> gate_tensors;
  stack.for_each_gate_param(
      [&](const std::string&, TensorT<float>& t) { gate_tensors.push_back(t); });
  AdamConfig gc;
  gc.lr = tc.lr_gates;
  LookAheadT<float> opt_gates(gate_tensors, gc, tc.lookahead_k, tc.lookahead_alpha);
  AdamConfig bc;
  bc.lr = tc.lr_baseline;
  LookAheadT<float> opt_baseline({stack.baseline}, bc, tc.lookahead_k,
                                 tc.lookahead_alpha);

  Rng shuffle_rng = Rng(tc.seed).derive(0x5AFF1E);
  Rng noise_rng = Rng(tc.seed).derive(0x0153);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  DiffmaskReport report;
  report.state.lambda = tc.lambda_init;
  std::int64_t step_idx = 0;
  int consec_full_mask = 0;
  int consec_high_kl = 0;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double kl_sum = 0, l0_sum = 0, frac_sum = 0;
    double frac_max = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(tc.batch_size)) {
      std::size_t end = std::min(order.size(), start + tc.batch_size);
      std::vector<const TraceCacheEntryT<float>*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&cache[order[i]]);

      auto noise = draw_diffmask_noise<float>(noise_rng, batch.size(),
                                              stack.gates.size(), cfg.n_patches());
      auto loss = diffmask_loss(batch, vit, cfg, stack, report.state.lambda,
                                tc.margin, noise);
      active_tape<float>().backward(loss.total);
      opt_gates.step();
      opt_baseline.step();
      opt_gates.zero_grad();
      opt_baseline.zero_grad();

      double kl = loss.kl.item();
      double l0 = loss.l0.item();
      report.state.lambda =
          lambda_step(report.state.lambda, kl, tc.margin, tc.lr_lambda);

      ++step_idx;
      report.state.history.push_back(
          {step_idx, l0, kl, report.state.lambda, loss.masked_fraction});
      kl_sum += kl;
      l0_sum += l0;
      frac_sum += loss.masked_fraction;
      frac_max = std::max(frac_max, loss.masked_fraction);
      ++batches;

      consec_full_mask = (report.state.lambda < tc.guard_lambda_floor &&
                          loss.masked_fraction > tc.guard_masked_hi)
                             ? consec_full_mask + 1
                             : 0;
      consec_high_kl =
          (kl > tc.guard_kl_factor * tc.margin) ? consec_high_kl + 1 : 0;
      if (consec_full_mask >= tc.guard_window) {
        throw TrainingDivergedError(
            "masking the whole image",
            "lambda below " + std::to_string(tc.guard_lambda_floor) +
                " with masked fraction above " +
                std::to_string(tc.guard_masked_hi) + " for " +
                std::to_string(tc.guard_window) + " steps (step " +
                std::to_string(step_idx) + ")");
      }
      if (consec_high_kl >= tc.guard_window) {
        throw TrainingDivergedError(
            "persistent high kl",
            "mean KL above " + std::to_string(tc.guard_kl_factor * tc.margin) +
                " for " + std::to_string(tc.guard_window) + " steps (step " +
                std::to_string(step_idx) + ")");
      }
    }
    double nb = static_cast<double>(std::max<std::size_t>(1, batches));
    report.epochs.push_back({epoch, kl_sum / nb, l0_sum / nb, frac_sum / nb,
                             report.state.lambda});
    if (epoch >= tc.guard_warmup_epochs && frac_max < tc.guard_masked_lo) {
      throw TrainingDivergedError(
          "not masking anything",
          "masked fraction stayed below " + std::to_string(tc.guard_masked_lo) +
              " for all of epoch " + std::to_string(epoch));
    }
  }

  if (!eval_split.empty()) {
    auto [kl, frac] = eval_diffmask_kl(stack, vit, cfg, eval_split);
    report.final_eval_kl = kl;
    report.final_eval_masked_fraction = frac;
  }
  return report;
}

}  // namespace vdm
