#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace vdm {

// Deterministic RNG. All transforms are hand-rolled on top of mt19937 raw
// draws so streams are reproducible independent of the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : seed_(seed), gen_(static_cast<std::uint32_t>(splitmix(seed))) {}

  // Uniform in the open interval (0,1); never returns an endpoint.
  double uniform01() { return (static_cast<double>(gen_()) + 0.5) / 4294967296.0; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  // Uniform integer in [0, n). Multiply-shift; bias is < 2^-32 and
  // irrelevant at our scales.
  std::uint32_t bounded(std::uint32_t n) {
    return static_cast<std::uint32_t>(
        (static_cast<std::uint64_t>(gen_()) * n) >> 32);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[bounded(static_cast<std::uint32_t>(i))]);
    }
  }

  // Independent child stream; `label` keys the derivation.
  Rng derive(std::uint64_t label) const {
    return Rng(splitmix(seed_ ^ (0x9e3779b97f4a7c15ULL * (label + 1))));
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::mt19937 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace vdm
