#pragma once

#include <string>
#include <vector>

#include "vdmask/data.hpp"
#include "vdmask/rng.hpp"
#include "vdmask/vit.hpp"

// Attribution baselines, positive/negative perturbation curves with KL and
// top-1 accuracy, AUC, and the counting-task faithfulness check.

namespace vdm {

struct Attribution {
  std::string method;         // diffmask | rollout | random
  std::vector<float> scores;  // per patch, higher = more important
};

enum class PerturbOrder { Positive, Negative };

inline const char* order_name(PerturbOrder o) {
  return o == PerturbOrder::Positive ? "positive" : "negative";
}

struct PerturbationCurve {
  PerturbOrder order = PerturbOrder::Positive;
  std::vector<double> fractions;  // 0.0, 0.1, ..., 0.9
  std::vector<double> kl;         // mean D_KL vs the unperturbed distribution
  std::vector<double> acc;        // top-1 accuracy
  // per-fraction, per-image KL (for bootstrap comparisons)
  std::vector<std::vector<double>> kl_per_image;
};

// Mean over heads with an identity skip, row-normalized, multiplied across
// layers; the CLS row restricted to patch columns is the attribution.
Attribution attention_rollout(const ForwardTraceT<float>& trace);

// Replaces the ceil(f*N) highest- (positive) or lowest-scored (negative)
// patches with the dataset mean color, ties broken by ascending patch
// index, and records mean KL / accuracy per fraction.
PerturbationCurve perturb_and_score(const std::vector<LabeledImage>& images,
                                    const ViTParamsT<float>& vit,
                                    const ViTConfig& cfg,
                                    const std::vector<Attribution>& attributions,
                                    PerturbOrder order);

// Trapezoidal mean height over the fraction grid.
double curve_auc(const std::vector<double>& fractions,
                 const std::vector<double>& values);

enum class FaithfulnessMatch { Red, Complement, None };

struct FaithfulnessResult {
  FaithfulnessMatch match = FaithfulnessMatch::None;
  double best_iou = 0;
};

// Binarizes the mask at 1/2 and compares the kept set against the red set
// and its complement (match when best IoU >= 0.99). The degenerate labels
// (no red / all red) match when the kept set is empty or full.
FaithfulnessResult faithfulness_check(const std::vector<float>& mask,
                                      const std::vector<int>& red_set,
                                      int n_patches);

struct BootstrapInterval {
  double lo = 0;
  double hi = 0;
};

// Percentile bootstrap CI for the mean.
BootstrapInterval bootstrap_mean_ci(const std::vector<double>& values,
                                    int resamples, double confidence, Rng& rng);

}  // namespace vdm
