#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "vdmask/tensor.hpp"

namespace vdm {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW) when nonzero
};

template <typename S>
class AdamT {
 public:
  AdamT(std::vector<TensorT<S>> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    slots_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      slots_[i].m.assign(params_[i].values().size(), S(0));
      slots_[i].v.assign(params_[i].values().size(), S(0));
    }
  }

  AdamConfig& config() { return cfg_; }
  const std::vector<TensorT<S>>& params() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.clear_grad();
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.has_grad()) continue;
      auto& val = p.values();
      auto& g = p.grad();
      auto& m = slots_[i].m;
      auto& v = slots_[i].v;
      for (std::size_t j = 0; j < val.size(); ++j) {
        double gj = static_cast<double>(g[j]);
        double mj = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
        double vj = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
        m[j] = static_cast<S>(mj);
        v[j] = static_cast<S>(vj);
        double update = (mj / bc1) / (std::sqrt(vj / bc2) + cfg_.eps);
        double x = static_cast<double>(val[j]);
        x -= cfg_.lr * update;
        if (cfg_.weight_decay != 0.0) x -= cfg_.lr * cfg_.weight_decay * x;
        val[j] = static_cast<S>(x);
      }
    }
  }

 private:
  struct Slot {
    std::vector<S> m, v;
  };
  std::vector<TensorT<S>> params_;
  std::vector<Slot> slots_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

// LookAhead wrapper: the inner optimizer advances fast weights; every k
// steps the slow weights take an alpha-sized step toward them and the fast
// weights reset onto the slow ones.
template <typename S>
class LookAheadT {
 public:
  LookAheadT(std::vector<TensorT<S>> params, AdamConfig cfg, int k, double alpha)
      : inner_(std::move(params), cfg), k_(k), alpha_(alpha) {
    for (const auto& p : inner_.params()) slow_.push_back(p.values());
  }

  AdamConfig& config() { return inner_.config(); }

  void zero_grad() { inner_.zero_grad(); }

  void step() {
    inner_.step();
    if (++t_ % k_ != 0) return;
    auto params = inner_.params();  // handles share storage with the model
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& fast = params[i].values();
      auto& slow = slow_[i];
      for (std::size_t j = 0; j < fast.size(); ++j) {
        slow[j] = static_cast<S>(slow[j] + alpha_ * (fast[j] - slow[j]));
        fast[j] = slow[j];
      }
    }
  }

 private:
  AdamT<S> inner_;
  std::vector<std::vector<S>> slow_;
  int k_;
  double alpha_;
  std::int64_t t_ = 0;
};

using Adam = AdamT<float>;
using LookAhead = LookAheadT<float>;

}  // namespace vdm
