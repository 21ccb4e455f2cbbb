#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vdmask/ops.hpp"
#include "vdmask/rng.hpp"

using namespace vdm;

TEST_CASE("matmul with identity returns the other operand") {
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto out = matmul(eye, m);
  CHECK(out.values() == std::vector<float>{1, 2, 3, 4});
}

TEST_CASE("matmul transpose flags") {
  auto a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = Tensor::from({2, 3}, {1, 0, 1, 0, 1, 0});
  // a[2,3] x b^T[3,2]
  auto out = matmul(a, b, false, true);
  CHECK(out.shape() == Shape{2, 2});
  CHECK(out.values()[0] == doctest::Approx(4));   // 1+3
  CHECK(out.values()[1] == doctest::Approx(2));   // 2
  CHECK(out.values()[2] == doctest::Approx(10));  // 4+6
  CHECK(out.values()[3] == doctest::Approx(5));
}

TEST_CASE("matmul shape mismatch names the op and shapes") {
  auto a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("matmul"),
                       DimensionError);
}

TEST_CASE("softmax of a symmetric row is uniform") {
  auto out = softmax_rows(Tensor::from({1, 2}, {0, 0}));
  CHECK(out.values()[0] == doctest::Approx(0.5));
  CHECK(out.values()[1] == doctest::Approx(0.5));
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(7);
  std::vector<float> v(24);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-5, 5));
  auto out = softmax_rows(Tensor::from({4, 6}, v));
  for (int r = 0; r < 4; ++r) {
    double s = 0;
    for (int j = 0; j < 6; ++j) s += out.values()[r * 6 + j];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("sigmoid and clamp definitions") {
  CHECK(sigmoid(Tensor::scalar(0)).item() == doctest::Approx(0.5));
  CHECK(clamp(Tensor::scalar(1.3f), 0, 1).item() == doctest::Approx(1.0));
  CHECK(clamp(Tensor::scalar(-0.2f), 0, 1).item() == doctest::Approx(0.0));
}

TEST_CASE("layer_norm normalizes each row") {
  Rng rng(3);
  std::vector<float> v(32);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-4, 4));
  auto gamma = Tensor::full({8}, 1.0f);
  auto beta = Tensor::zeros({8});
  auto out = layer_norm(Tensor::from({4, 8}, v), gamma, beta);
  for (int r = 0; r < 4; ++r) {
    double mean = 0, var = 0;
    for (int j = 0; j < 8; ++j) mean += out.values()[r * 8 + j];
    mean /= 8;
    for (int j = 0; j < 8; ++j) {
      double d = out.values()[r * 8 + j] - mean;
      var += d * d;
    }
    var /= 8;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("broadcast rules: trailing suffix and scalar") {
  auto m = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto row = Tensor::from({3}, {10, 20, 30});
  auto out = add(m, row);
  CHECK(out.values() == std::vector<float>{11, 22, 33, 14, 25, 36});

  auto s = Tensor::scalar(2.0f);
  auto scaled = mul(m, s);
  CHECK(scaled.values() == std::vector<float>{2, 4, 6, 8, 10, 12});

  auto bad = Tensor::from({2}, {1, 2});
  CHECK_THROWS_AS(add(m, bad), DimensionError);
}

TEST_CASE("concat_last_dim stitches segments per row") {
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor::from({2, 1}, {9, 8});
  auto out = concat_last_dim<float>({a, b});
  CHECK(out.shape() == Shape{2, 3});
  CHECK(out.values() == std::vector<float>{1, 2, 9, 3, 4, 8});
}

TEST_CASE("log outside its domain reports a numeric error") {
  CHECK_THROWS_AS(log(Tensor::scalar(-1.0f)), NumericError);
  CHECK_THROWS_AS(log(Tensor::scalar(0.0f)), NumericError);
}

TEST_CASE("exp overflow is reported as a numeric error") {
  CHECK_THROWS_AS(exp(Tensor::scalar(1e5f)), NumericError);
}

TEST_CASE("same seed replays bit-identical op outputs") {
  auto run = [] {
    Rng rng(123);
    std::vector<float> v(20);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    auto a = Tensor::from({4, 5}, v);
    auto b = softmax_rows(gelu(a));
    auto w = Tensor::from({5, 2}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    return matmul(b, w).values();
  };
  auto r1 = run();
  auto r2 = run();
  CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(float)) == 0);
}

TEST_CASE("apply dispatcher covers every op kind") {
  for (OpKind kind : kAllOpKinds) {
    std::vector<Tensor> inputs;
    OpAttrs attrs;
    switch (kind) {
      case OpKind::Matmul:
        inputs = {Tensor::from({2, 2}, {1, 0, 0, 1}),
                  Tensor::from({2, 2}, {1, 2, 3, 4})};
        break;
      case OpKind::Add:
      case OpKind::Mul:
        inputs = {Tensor::from({2}, {1, 2}), Tensor::from({2}, {3, 4})};
        break;
      case OpKind::LayerNorm:
        inputs = {Tensor::from({1, 4}, {1, 2, 3, 4}), Tensor::full({4}, 1.0f),
                  Tensor::zeros({4})};
        break;
      case OpKind::ConcatLastDim:
        inputs = {Tensor::from({2}, {1, 2}), Tensor::from({3}, {3, 4, 5})};
        break;
      case OpKind::Log:
        inputs = {Tensor::from({2}, {0.5f, 2.0f})};
        break;
      default:
        inputs = {Tensor::from({2, 2}, {0.1f, -0.2f, 0.3f, 0.4f})};
        break;
    }
    auto out = apply(kind, inputs, attrs);
    CHECK(out.numel() > 0);
  }
}
