#include "vdmask/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vdmask/maskgen.hpp"

namespace vdm {

Attribution attention_rollout(const ForwardTraceT<float>& trace) {
  if (trace.attn.empty()) throw ContractError("attention_rollout: empty trace");
  std::size_t t = trace.attn[0][0].shape()[0];
  // rollout starts as identity
  std::vector<double> rollout(t * t, 0.0);
  for (std::size_t i = 0; i < t; ++i) rollout[i * t + i] = 1.0;

  std::vector<double> mixed(t * t);
  std::vector<double> next(t * t);
  for (const auto& layer : trace.attn) {
    std::fill(mixed.begin(), mixed.end(), 0.0);
    for (const auto& head : layer) {
      const auto& a = head.values();
      for (std::size_t i = 0; i < t * t; ++i) mixed[i] += a[i];
    }
    double inv_heads = 1.0 / static_cast<double>(layer.size());
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < t; ++j) {
        mixed[i * t + j] = 0.5 * mixed[i * t + j] * inv_heads +
                           (i == j ? 0.5 : 0.0);
      }
      double row_sum = 0;
      for (std::size_t j = 0; j < t; ++j) row_sum += mixed[i * t + j];
      for (std::size_t j = 0; j < t; ++j) mixed[i * t + j] /= row_sum;
    }
    // next = mixed * rollout (later layers multiply from the left)
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t k = 0; k < t; ++k) {
        double v = mixed[i * t + k];
        for (std::size_t j = 0; j < t; ++j) next[i * t + j] += v * rollout[k * t + j];
      }
    }
    rollout.swap(next);
  }

  Attribution attr;
  attr.method = "rollout";
  attr.scores.reserve(t - 1);
  for (std::size_t j = 1; j < t; ++j) {
    attr.scores.push_back(static_cast<float>(rollout[j]));  // CLS row
  }
  return attr;
}

namespace {

std::vector<int> removal_order(const std::vector<float>& scores,
                               PerturbOrder order) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) {
      return order == PerturbOrder::Positive ? scores[a] > scores[b]
                                             : scores[a] < scores[b];
    }
    return a < b;  // ties: ascending patch index
  });
  return idx;
}

}  // namespace

PerturbationCurve perturb_and_score(const std::vector<LabeledImage>& images,
                                    const ViTParamsT<float>& vit,
                                    const ViTConfig& cfg,
                                    const std::vector<Attribution>& attributions,
                                    PerturbOrder order) {
  if (images.size() != attributions.size()) {
    throw ContractError("perturb_and_score: need one attribution per image");
  }
  NoGradGuard guard;
  int n = cfg.n_patches();

  // dataset mean color, one value per channel
  std::array<double, 3> mean_byte = {0, 0, 0};
  std::size_t count = 0;
  for (const auto& img : images) {
    for (std::size_t i = 0; i + 2 < img.pixels.size(); i += 3) {
      mean_byte[0] += img.pixels[i];
      mean_byte[1] += img.pixels[i + 1];
      mean_byte[2] += img.pixels[i + 2];
      ++count;
    }
  }
  std::array<float, 3> mean_color;
  for (int c = 0; c < 3; ++c) {
    mean_color[c] = static_cast<float>(
        (mean_byte[c] / std::max<std::size_t>(1, count) / 255.0 - 0.5) / 0.5);
  }

  PerturbationCurve curve;
  curve.order = order;
  const int steps = 10;  // fractions i/10, i = 0..9
  curve.fractions.resize(steps);
  curve.kl.assign(steps, 0.0);
  curve.acc.assign(steps, 0.0);
  curve.kl_per_image.assign(steps, {});
  for (int i = 0; i < steps; ++i) curve.fractions[i] = i / 10.0;

  int g = cfg.n_patches_side(), ps = cfg.patch_size;
  for (std::size_t ii = 0; ii < images.size(); ++ii) {
    const auto& img = images[ii];
    auto base = normalize_image(img.pixels);
    auto base_trace = vit_forward(base, vit, cfg);
    std::vector<float> p0(base_trace.probs.values().begin(),
                          base_trace.probs.values().end());
    auto ordering = removal_order(attributions[ii].scores, order);

    for (int fi = 0; fi < steps; ++fi) {
      int remove = (fi * n + 9) / 10;  // ceil(f*N) on the i/10 grid
      std::vector<float> perturbed = base;
      for (int rj = 0; rj < remove; ++rj) {
        int patch = ordering[static_cast<std::size_t>(rj)];
        int py = patch / g, px = patch % g;
        for (int y = 0; y < ps; ++y) {
          float* row = perturbed.data() +
                       (static_cast<std::size_t>(py * ps + y) * cfg.image_size +
                        px * ps) * 3;
          for (int x = 0; x < ps; ++x) {
            row[x * 3 + 0] = mean_color[0];
            row[x * 3 + 1] = mean_color[1];
            row[x * 3 + 2] = mean_color[2];
          }
        }
      }
      auto trace = vit_forward(perturbed, vit, cfg);
      std::vector<float> q(trace.probs.values().begin(), trace.probs.values().end());
      double kl = kl_divergence(p0, q);
      curve.kl[fi] += kl;
      curve.kl_per_image[fi].push_back(kl);
      if (classify(trace) == img.label) curve.acc[fi] += 1.0;
    }
  }

  double m = static_cast<double>(std::max<std::size_t>(1, images.size()));
  for (int fi = 0; fi < steps; ++fi) {
    curve.kl[fi] /= m;
    curve.acc[fi] /= m;
  }
  return curve;
}

double curve_auc(const std::vector<double>& fractions,
                 const std::vector<double>& values) {
  if (fractions.size() != values.size() || fractions.size() < 2) {
    throw ContractError("auc: need matching fraction/value lists of length >= 2");
  }
  for (std::size_t i = 1; i < fractions.size(); ++i) {
    if (fractions[i] <= fractions[i - 1]) {
      throw ContractError("auc: fractions must be strictly ascending");
    }
  }
  double area = 0;
  for (std::size_t i = 1; i < fractions.size(); ++i) {
    area += 0.5 * (values[i] + values[i - 1]) * (fractions[i] - fractions[i - 1]);
  }
  return area / (fractions.back() - fractions.front());
}

FaithfulnessResult faithfulness_check(const std::vector<float>& mask,
                                      const std::vector<int>& red_set,
                                      int n_patches) {
  std::vector<bool> kept(static_cast<std::size_t>(n_patches), false);
  int kept_count = 0;
  for (int i = 0; i < n_patches; ++i) {
    if (mask[static_cast<std::size_t>(i)] >= 0.5f) {
      kept[static_cast<std::size_t>(i)] = true;
      ++kept_count;
    }
  }
  std::vector<bool> red(static_cast<std::size_t>(n_patches), false);
  for (int p : red_set) red[static_cast<std::size_t>(p)] = true;
  int n_red = static_cast<int>(red_set.size());

  FaithfulnessResult res;
  if (n_red == 0 || n_red == n_patches) {
    res.best_iou = 1.0;
    if (kept_count == 0) {
      res.match = n_red == 0 ? FaithfulnessMatch::Red : FaithfulnessMatch::Complement;
    } else if (kept_count == n_patches) {
      res.match = n_red == 0 ? FaithfulnessMatch::Complement : FaithfulnessMatch::Red;
    } else {
      res.match = FaithfulnessMatch::None;
      res.best_iou = 0.0;
    }
    return res;
  }

  auto iou_vs = [&](bool against_red) {
    int inter = 0, uni = 0;
    for (int i = 0; i < n_patches; ++i) {
      bool target = against_red ? red[static_cast<std::size_t>(i)]
                                : !red[static_cast<std::size_t>(i)];
      bool k = kept[static_cast<std::size_t>(i)];
      if (k && target) ++inter;
      if (k || target) ++uni;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
  };
  double iou_red = iou_vs(true);
  double iou_comp = iou_vs(false);
  res.best_iou = std::max(iou_red, iou_comp);
  if (res.best_iou >= 0.99) {
    res.match = iou_red >= iou_comp ? FaithfulnessMatch::Red
                                    : FaithfulnessMatch::Complement;
  }
  return res;
}

BootstrapInterval bootstrap_mean_ci(const std::vector<double>& values,
                                    int resamples, double confidence, Rng& rng) {
  if (values.empty()) throw ContractError("bootstrap: empty sample");
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (int r = 0; r < resamples; ++r) {
    double s = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      s += values[rng.bounded(static_cast<std::uint32_t>(values.size()))];
    }
    means[static_cast<std::size_t>(r)] = s / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  double tail = (1.0 - confidence) / 2.0;
  auto pick = [&](double q) {
    double pos = q * (means.size() - 1);
    std::size_t i = static_cast<std::size_t>(pos);
    double t = pos - static_cast<double>(i);
    if (i + 1 >= means.size()) return means.back();
    return means[i] * (1 - t) + means[i + 1] * t;
  };
  return {pick(tail), pick(1.0 - tail)};
}

}  // namespace vdm
