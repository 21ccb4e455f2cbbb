#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "vdmask/gradcheck.hpp"
#include "vdmask/rng.hpp"
#include "vdmask/vit.hpp"

using namespace vdm;

namespace {

ViTConfig desk_cfg() { return ViTConfig{}; }  // 48x48, P=16, d=64, L=4

std::vector<float> random_image(Rng& rng, const ViTConfig& cfg) {
  std::vector<float> img(static_cast<std::size_t>(cfg.image_size) *
                         cfg.image_size * cfg.channels);
  for (auto& v : img) v = static_cast<float>(rng.uniform(-1, 1));
  return img;
}

}  // namespace

TEST_CASE("patchify: 48x48x3 with P=16 gives 9 patches of 768 values") {
  auto cfg = desk_cfg();
  Rng rng(1);
  auto img = random_image(rng, cfg);
  auto patches = patchify(img, cfg);
  CHECK(patches.shape() == Shape{9, 768});

  // lossless round trip, bit exact
  auto back = unpatchify(patches.values(), cfg);
  CHECK(std::memcmp(back.data(), img.data(), img.size() * sizeof(float)) == 0);
}

TEST_CASE("patchify of a constant image yields identical patch rows") {
  auto cfg = desk_cfg();
  std::vector<float> img(static_cast<std::size_t>(cfg.image_size) *
                             cfg.image_size * 3,
                         0.25f);
  auto patches = patchify(img, cfg);
  const auto& v = patches.values();
  for (int p = 1; p < 9; ++p) {
    CHECK(std::memcmp(v.data(), v.data() + p * 768, 768 * sizeof(float)) == 0);
  }
}

TEST_CASE("patchify rejects images of the wrong size") {
  auto cfg = desk_cfg();
  std::vector<float> img(100);
  CHECK_THROWS_AS(patchify(img, cfg), DimensionError);
  ViTConfig bad = cfg;
  bad.patch_size = 13;
  std::vector<float> ok(static_cast<std::size_t>(48) * 48 * 3);
  CHECK_THROWS_AS(patchify(ok, bad), ContractError);
}

TEST_CASE("forward is deterministic and probabilities normalize") {
  auto cfg = desk_cfg();
  auto params = init_vit_params<float>(cfg, Rng(7));
  params.set_requires_grad(false);
  Rng rng(2);
  auto img = random_image(rng, cfg);
  auto t1 = vit_forward(img, params, cfg);
  auto t2 = vit_forward(img, params, cfg);
  CHECK(t1.logits.values() == t2.logits.values());
  double s = 0;
  for (float p : t1.probs.values()) s += p;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(t1.h.size() == static_cast<std::size_t>(cfg.n_layers) + 1);
}

TEST_CASE("swapping two input patches permutes the same rows of hbar0") {
  auto cfg = desk_cfg();
  auto params = init_vit_params<float>(cfg, Rng(7));
  params.set_requires_grad(false);
  Rng rng(3);
  auto img = random_image(rng, cfg);

  // swap patch blocks 1 and 7 at the pixel level
  auto patches = patchify(img, cfg).values();
  std::vector<float> swapped = patches;
  std::memcpy(swapped.data() + 1 * 768, patches.data() + 7 * 768, 768 * sizeof(float));
  std::memcpy(swapped.data() + 7 * 768, patches.data() + 1 * 768, 768 * sizeof(float));
  auto img2 = unpatchify(swapped, cfg);

  auto a = vit_forward(img, params, cfg).hbar0.values();
  auto b = vit_forward(img2, params, cfg).hbar0.values();
  int d = cfg.d_model;
  for (int row = 0; row < 9; ++row) {
    int src = row == 1 ? 7 : row == 7 ? 1 : row;
    CHECK(std::memcmp(b.data() + row * d, a.data() + src * d, d * sizeof(float)) == 0);
  }
}

TEST_CASE("attention rows sum to 1 at every layer") {
  auto cfg = desk_cfg();
  auto params = init_vit_params<float>(cfg, Rng(9));
  params.set_requires_grad(false);
  Rng rng(4);
  auto trace = vit_forward(random_image(rng, cfg), params, cfg);
  for (const auto& layer : trace.attn) {
    for (const auto& head : layer) {
      int t = cfg.n_tokens();
      for (int r = 0; r < t; ++r) {
        double s = 0;
        for (int c = 0; c < t; ++c) s += head.values()[r * t + c];
        CHECK(std::abs(s - 1.0) < 1e-5);
      }
    }
  }
}

TEST_CASE("masked_forward with all-ones mask equals forward bit-exactly") {
  auto cfg = desk_cfg();
  auto params = init_vit_params<float>(cfg, Rng(11));
  params.set_requires_grad(false);
  Rng rng(5);
  auto img = random_image(rng, cfg);
  auto z = Tensor::full({9, 1}, 1.0f);
  std::vector<float> bvals(64);
  for (auto& v : bvals) v = static_cast<float>(rng.normal());
  auto baseline = Tensor::from({1, 64}, bvals);

  auto plain = vit_forward(img, params, cfg);
  auto masked = vit_masked_forward(img, z, baseline, params, cfg);
  CHECK(plain.logits.values() == masked.logits.values());
  for (std::size_t i = 0; i < plain.h.size(); ++i) {
    CHECK(plain.h[i].values() == masked.h[i].values());
  }
}

TEST_CASE("masked_forward with all-zeros mask is constant in the image") {
  auto cfg = desk_cfg();
  auto params = init_vit_params<float>(cfg, Rng(11));
  params.set_requires_grad(false);
  Rng rng(6);
  auto z = Tensor::zeros({9, 1});
  std::vector<float> bvals(64);
  for (auto& v : bvals) v = static_cast<float>(rng.normal());
  auto baseline = Tensor::from({1, 64}, bvals);

  auto m1 = vit_masked_forward(random_image(rng, cfg), z, baseline, params, cfg);
  auto m2 = vit_masked_forward(random_image(rng, cfg), z, baseline, params, cfg);
  CHECK(m1.logits.values() == m2.logits.values());
}

TEST_CASE("half-open gate mixes the embedded patch with the baseline") {
  auto cfg = desk_cfg();
  auto params = init_vit_params<float>(cfg, Rng(11));
  params.set_requires_grad(false);
  Rng rng(7);
  auto img = random_image(rng, cfg);
  auto z = Tensor::full({9, 1}, 0.5f);
  std::vector<float> bvals(64);
  for (auto& v : bvals) v = static_cast<float>(rng.normal());
  auto baseline = Tensor::from({1, 64}, bvals);

  auto plain = vit_forward(img, params, cfg);
  auto masked = vit_masked_forward(img, z, baseline, params, cfg);
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 64; ++j) {
      float want = 0.5f * (plain.hbar0.values()[i * 64 + j] + bvals[j]);
      CHECK(masked.hbar0.values()[i * 64 + j] == doctest::Approx(want).epsilon(1e-6));
    }
  }
}

TEST_CASE("masked_forward validates mask and baseline shapes") {
  auto cfg = desk_cfg();
  auto params = init_vit_params<float>(cfg, Rng(11));
  params.set_requires_grad(false);
  Rng rng(8);
  auto img = random_image(rng, cfg);
  CHECK_THROWS_AS(vit_masked_forward(img, Tensor::zeros({5, 1}),
                                     Tensor::zeros({1, 64}), params, cfg),
                  DimensionError);
  CHECK_THROWS_AS(vit_masked_forward(img, Tensor::zeros({9, 1}),
                                     Tensor::zeros({1, 3}), params, cfg),
                  DimensionError);
}

TEST_CASE("classify breaks ties toward the lowest class index") {
  ForwardTraceT<float> t;
  t.logits = Tensor::from({1, 3}, {0, 3, 1});
  CHECK(classify(t) == 1);
  t.logits = Tensor::from({1, 3}, {2, 2, 0});
  CHECK(classify(t) == 0);
}

TEST_CASE("gradient of KL(y||y_masked) w.r.t. z and baseline passes grad_check") {
  ViTConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  auto params = init_vit_params<double>(cfg, Rng(21));
  params.set_requires_grad(false);
  Rng rng(22);
  std::vector<double> img(static_cast<std::size_t>(48) * 48 * 3);
  for (auto& v : img) v = rng.uniform(-1, 1);

  auto ref = vit_forward(img, params, cfg);
  auto y = ref.probs.clone();
  y.set_requires_grad(false);
  std::vector<double> yv = y.values();

  auto kl_of = [&](const TensorT<double>& z, const TensorT<double>& b) {
    auto masked = vit_masked_forward(img, z, b, params, cfg);
    auto logq = [&] {
      double mx = masked.logits.values()[0];
      for (double v : masked.logits.values()) mx = std::max(mx, v);
      auto shifted = affine(masked.logits, 1.0, -mx);
      auto lse = add(log(sum(exp(shifted))), TensorT<double>::scalar(mx));
      return add(masked.logits, affine(lse, -1.0, 0.0));
    }();
    double sum_y_log_y = 0;
    for (double p : yv) {
      if (p > 0) sum_y_log_y += p * std::log(p);
    }
    return affine(sum(mul(y, logq)), -1.0, sum_y_log_y);
  };

  std::vector<double> zv(9);
  for (auto& v : zv) v = rng.uniform(0.2, 0.8);
  auto z0 = TensorT<double>::from({9, 1}, zv);
  std::vector<double> bv(16);
  for (auto& v : bv) v = rng.normal() * 0.5;
  auto b0 = TensorT<double>::from({1, 16}, bv);

  double err_z = grad_check(
      [&](const TensorT<double>& z) { return kl_of(z, b0); }, z0, 1e-4);
  CHECK(err_z < 1e-3);
  double err_b = grad_check(
      [&](const TensorT<double>& b) { return kl_of(z0, b); }, b0, 1e-4);
  CHECK(err_b < 1e-3);
}
