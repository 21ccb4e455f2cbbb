#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vdmask/gradcheck.hpp"
#include "vdmask/maskgen.hpp"
#include "vdmask/training.hpp"

using namespace vdm;

namespace {

std::vector<float> random_image(Rng& rng, const ViTConfig& cfg) {
  std::vector<float> img(static_cast<std::size_t>(cfg.image_size) *
                         cfg.image_size * cfg.channels);
  for (auto& v : img) v = static_cast<float>(rng.uniform(-1, 1));
  return img;
}

}  // namespace

TEST_CASE("zero-initialized gates emit u = beta everywhere") {
  ViTConfig cfg;
  auto params = init_vit_params<float>(cfg, Rng(1));
  params.set_requires_grad(false);
  auto stack = init_gate_stack<float>(cfg, 15.0, 2.5, HCParams{}, Rng(2));
  stack.set_requires_grad(false);
  Rng rng(3);
  auto trace = vit_forward(random_image(rng, cfg), params, cfg);
  auto us = gate_logits(trace, stack);
  CHECK(us.size() == 6);  // L+2
  for (const auto& u : us) {
    CHECK(u.shape() == Shape{9, 1});
    for (float v : u.values()) CHECK(v == 2.5f);
  }
}

TEST_CASE("alpha = 0 collapses the logits to beta; doubling alpha doubles u-beta") {
  ViTConfig cfg;
  auto params = init_vit_params<float>(cfg, Rng(1));
  params.set_requires_grad(false);
  Rng rng(4);
  auto trace = vit_forward(random_image(rng, cfg), params, cfg);

  auto stack = init_gate_stack<float>(cfg, 0.0, 1.25, HCParams{}, Rng(5));
  stack.set_requires_grad(false);
  // push random output-layer weights so the MLP is nontrivial
  Rng wrng(6);
  for (auto& g : stack.gates) {
    for (auto& w : g.w2.values()) w = static_cast<float>(wrng.normal());
    g.b2.values()[0] = static_cast<float>(wrng.normal());
  }
  auto us0 = gate_logits(trace, stack);
  for (const auto& u : us0) {
    for (float v : u.values()) CHECK(v == 1.25f);
  }

  stack.alpha.values()[0] = 3.0f;
  auto us1 = gate_logits(trace, stack);
  stack.alpha.values()[0] = 6.0f;
  auto us2 = gate_logits(trace, stack);
  for (std::size_t k = 0; k < us1.size(); ++k) {
    for (std::size_t i = 0; i < us1[k].values().size(); ++i) {
      float d1 = us1[k].values()[i] - 1.25f;
      float d2 = us2[k].values()[i] - 1.25f;
      CHECK(d2 == doctest::Approx(2 * d1).epsilon(1e-6));
    }
  }
}

TEST_CASE("make_mask: product of ones, absorbing zero, infer determinism") {
  HCParams hc;
  std::vector<TensorT<float>> us = {Tensor::full({4, 1}, 100.0f),
                                    Tensor::full({4, 1}, 100.0f)};
  const std::vector<TensorT<float>>* no_noise = nullptr;
  auto ones = make_mask(us, MaskMode::Infer, no_noise, hc);
  for (float v : ones.z.values()) CHECK(v == 1.0f);

  // one layer vetoes patch 2
  us[1] = Tensor::from({4, 1}, {100, 100, -100, 100});
  auto veto = make_mask(us, MaskMode::Infer, no_noise, hc);
  CHECK(veto.z.values()[2] == 0.0f);
  CHECK(veto.z.values()[0] == 1.0f);

  auto again = make_mask(us, MaskMode::Infer, no_noise, hc);
  CHECK(veto.z.values() == again.z.values());

  CHECK_THROWS_AS(make_mask(us, MaskMode::Train, no_noise, hc), ContractError);
}

TEST_CASE("product mask never exceeds any per-layer mask") {
  HCParams hc;
  Rng rng(7);
  std::vector<TensorT<float>> us;
  std::vector<TensorT<float>> noise;
  for (int k = 0; k < 5; ++k) {
    std::vector<float> u(9), e(9);
    for (auto& v : u) v = static_cast<float>(rng.uniform(-3, 3));
    for (auto& v : e) v = static_cast<float>(rng.uniform01());
    us.push_back(Tensor::from({9, 1}, u));
    noise.push_back(Tensor::from({9, 1}, e));
  }
  auto m = make_mask(us, MaskMode::Train, &noise, hc);
  for (std::size_t i = 0; i < 9; ++i) {
    for (const auto& layer : m.per_layer) {
      CHECK(m.z.values()[i] <= layer.values()[i] + 1e-7f);
    }
    CHECK(m.z.values()[i] >= 0.0f);
    CHECK(m.z.values()[i] <= 1.0f);
  }
}

TEST_CASE("upsample: constants, node exactness, midpoint value, range") {
  ViTConfig cfg;  // 3x3 grid, P=16
  std::vector<float> constant(9, 0.7f);
  auto flat = upsample_mask(constant, cfg);
  for (float v : flat) CHECK(v == doctest::Approx(0.7).epsilon(1e-7));

  // single 1.0 at the grid center
  std::vector<float> center(9, 0.0f);
  center[4] = 1.0f;
  auto sal = upsample_mask(center, cfg);
  int s = cfg.image_size;
  // patch centers sit at 8, 24, 40
  CHECK(sal[24 * s + 24] == 1.0f);
  CHECK(sal[8 * s + 8] == 0.0f);
  // midpoint between the center patch and its right neighbor
  CHECK(sal[24 * s + 32] == doctest::Approx(0.5));

  Rng rng(8);
  std::vector<float> z(9);
  float lo = 1, hi = 0;
  for (auto& v : z) {
    v = static_cast<float>(rng.uniform01());
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (float v : upsample_mask(z, cfg)) {
    CHECK(v >= lo - 1e-6f);
    CHECK(v <= hi + 1e-6f);
  }
}

TEST_CASE("explain with saturated beta keeps everything and reports zero KL") {
  ViTConfig cfg;
  auto params = init_vit_params<float>(cfg, Rng(1));
  params.set_requires_grad(false);
  // beta = 20 saturates every deterministic gate at exactly 1 in float
  auto stack = init_gate_stack<float>(cfg, 15.0, 20.0, HCParams{}, Rng(2));
  stack.set_requires_grad(false);
  Rng rng(9);
  auto img = random_image(rng, cfg);
  auto res = explain(img, params, cfg, stack);
  for (float z : res.mask.z) CHECK(z == 1.0f);
  CHECK(res.kl == 0.0);
  CHECK(res.class_unmasked == res.class_masked);

  auto res2 = explain(img, params, cfg, stack);
  CHECK(res.mask.z == res2.mask.z);
  CHECK(res.saliency == res2.saliency);
  CHECK(res.kl == res2.kl);
}

TEST_CASE("explain masks stay in [0,1]") {
  ViTConfig cfg;
  auto params = init_vit_params<float>(cfg, Rng(1));
  params.set_requires_grad(false);
  auto stack = init_gate_stack<float>(cfg, 15.0, 0.5, HCParams{}, Rng(31));
  Rng wrng(32);
  for (auto& g : stack.gates) {
    for (auto& w : g.w2.values()) w = static_cast<float>(wrng.normal() * 0.2);
  }
  stack.set_requires_grad(false);
  Rng rng(10);
  auto res = explain(random_image(rng, cfg), params, cfg, stack);
  for (float z : res.mask.z) {
    CHECK(z >= 0.0f);
    CHECK(z <= 1.0f);
  }
}

TEST_CASE("gradient of expected_l0 + lambda*KL w.r.t. phi and b (frozen noise)") {
  ViTConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  auto params = init_vit_params<double>(cfg, Rng(41));
  params.set_requires_grad(false);
  auto stack = init_gate_stack<double>(cfg, 5.0, 1.0, HCParams{}, Rng(42));
  Rng wrng(43);
  for (auto& g : stack.gates) {
    for (auto& w : g.w2.values()) w = wrng.normal() * 0.1;
  }
  for (auto& v : stack.baseline.values()) v = wrng.normal() * 0.3;
  stack.set_requires_grad(false);

  Rng rng(44);
  std::vector<double> img(static_cast<std::size_t>(48) * 48 * 3);
  for (auto& v : img) v = rng.uniform(-1, 1);
  TraceCacheEntryT<double> entry;
  {
    NoGradGuardT<double> guard;
    entry = make_cache_entry(vit_forward(img, params, cfg));
  }
  Rng noise_rng(45);
  auto noise = draw_diffmask_noise<double>(noise_rng, 1, stack.gates.size(),
                                           cfg.n_patches());
  const double lambda = 3.0, margin = 0.1;

  auto loss_value = [&] {
    std::vector<const TraceCacheEntryT<double>*> batch = {&entry};
    return diffmask_loss(batch, params, cfg, stack, lambda, margin, noise).total;
  };

  // in-place gradient check of one model parameter against central
  // differences of the whole loss
  auto check_param = [&](TensorT<double>& target) {
    const double eps = 1e-4;
    target.set_requires_grad(true);
    active_tape<double>().clear();
    active_tape<double>().backward(loss_value());
    std::vector<double> analytic = target.grad();
    target.clear_grad();
    target.set_requires_grad(false);
    double max_err = 0;
    for (std::size_t i = 0; i < target.values().size(); ++i) {
      double keep = target.values()[i];
      target.values()[i] = keep + eps;
      double fp = loss_value().item();
      target.values()[i] = keep - eps;
      double fm = loss_value().item();
      target.values()[i] = keep;
      double cd = (fp - fm) / (2 * eps);
      max_err = std::max(max_err,
                         std::abs(analytic[i] - cd) / std::max(1.0, std::abs(cd)));
    }
    return max_err;
  };

  CHECK(check_param(stack.gates[0].w2) < 1e-3);
  CHECK(check_param(stack.gates[3].b1) < 1e-3);
  CHECK(check_param(stack.alpha) < 1e-3);
  CHECK(check_param(stack.beta) < 1e-3);
  CHECK(check_param(stack.baseline) < 1e-3);
}
