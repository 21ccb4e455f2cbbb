#pragma once

#include <cstdint>

namespace vdm {

// C[m,n] += op_a(A) * op_b(B). Plain loops in an order that keeps the inner
// trip contiguous; the compiler vectorizes these well at our matrix sizes.
template <typename S>
void gemm_acc(bool ta, bool tb, std::int64_t m, std::int64_t k, std::int64_t n,
              const S* a, const S* b, S* c) {
  if (!ta && !tb) {
    // A[m,k] B[k,n]
    for (std::int64_t i = 0; i < m; ++i) {
      const S* ai = a + i * k;
      S* ci = c + i * n;
      for (std::int64_t p = 0; p < k; ++p) {
        S av = ai[p];
        const S* bp = b + p * n;
        for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  } else if (!ta && tb) {
    // A[m,k] B[n,k]^T: dot products of contiguous rows
    for (std::int64_t i = 0; i < m; ++i) {
      const S* ai = a + i * k;
      S* ci = c + i * n;
      for (std::int64_t j = 0; j < n; ++j) {
        const S* bj = b + j * k;
        S acc = S(0);
        for (std::int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
        ci[j] += acc;
      }
    }
  } else if (ta && !tb) {
    // A[k,m]^T B[k,n]
    for (std::int64_t p = 0; p < k; ++p) {
      const S* ap = a + p * m;
      const S* bp = b + p * n;
      for (std::int64_t i = 0; i < m; ++i) {
        S av = ap[i];
        S* ci = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  } else {
    // A[k,m]^T B[n,k]^T
    for (std::int64_t i = 0; i < m; ++i) {
      S* ci = c + i * n;
      for (std::int64_t j = 0; j < n; ++j) {
        const S* bj = b + j * k;
        S acc = S(0);
        for (std::int64_t p = 0; p < k; ++p) acc += a[p * m + i] * bj[p];
        ci[j] += acc;
      }
    }
  }
}

}  // namespace vdm
