// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

// Compiled with -mavx2 -mfma; only reached after a CPUID check.

#include <immintrin.h>

#include <cstddef>

#include "nmsls/kernels.hpp"

namespace nmsls::kernels {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

// Row-block of R rows of A against an 8-wide column strip of B.
template <int R>
inline void strip8(int n, int k, const float* a, const float* b, float* c, int j) {
  __m256 acc[R];
  for (int r = 0; r < R; ++r) acc[r] = _mm256_setzero_ps();
  for (int p = 0; p < k; ++p) {
    const __m256 bv = _mm256_loadu_ps(b + static_cast<std::ptrdiff_t>(p) * n + j);
    for (int r = 0; r < R; ++r)
      acc[r] = _mm256_fmadd_ps(_mm256_broadcast_ss(a + static_cast<std::ptrdiff_t>(r) * k + p), bv,
                               acc[r]);
  }
  for (int r = 0; r < R; ++r) {
    float* cp = c + static_cast<std::ptrdiff_t>(r) * n + j;
    _mm256_storeu_ps(cp, _mm256_add_ps(_mm256_loadu_ps(cp), acc[r]));
  }
}

template <int R>
inline void strip16(int n, int k, const float* a, const float* b, float* c, int j) {
  __m256 lo[R], hi[R];
  for (int r = 0; r < R; ++r) lo[r] = hi[r] = _mm256_setzero_ps();
  for (int p = 0; p < k; ++p) {
    const float* bp = b + static_cast<std::ptrdiff_t>(p) * n + j;
    const __m256 b0 = _mm256_loadu_ps(bp);
    const __m256 b1 = _mm256_loadu_ps(bp + 8);
    for (int r = 0; r < R; ++r) {
      const __m256 av = _mm256_broadcast_ss(a + static_cast<std::ptrdiff_t>(r) * k + p);
      lo[r] = _mm256_fmadd_ps(av, b0, lo[r]);
      hi[r] = _mm256_fmadd_ps(av, b1, hi[r]);
    }
  }
  for (int r = 0; r < R; ++r) {
    float* cp = c + static_cast<std::ptrdiff_t>(r) * n + j;
    _mm256_storeu_ps(cp, _mm256_add_ps(_mm256_loadu_ps(cp), lo[r]));
    _mm256_storeu_ps(cp + 8, _mm256_add_ps(_mm256_loadu_ps(cp + 8), hi[r]));
  }
}

template <int R>
inline void row_block(int n, int k, const float* a, const float* b, float* c) {
  int j = 0;
  for (; j + 16 <= n; j += 16) strip16<R>(n, k, a, b, c, j);
  for (; j + 8 <= n; j += 8) strip8<R>(n, k, a, b, c, j);
  for (; j < n; ++j) {
    for (int r = 0; r < R; ++r) {
      float acc = 0.0f;
      const float* ar = a + static_cast<std::ptrdiff_t>(r) * k;
      for (int p = 0; p < k; ++p) acc += ar[p] * b[static_cast<std::ptrdiff_t>(p) * n + j];
      c[static_cast<std::ptrdiff_t>(r) * n + j] += acc;
    }
  }
}

void gemm_nn_avx2(int m, int n, int k, const float* a, const float* b, float* c) {
  int i = 0;
  for (; i + 4 <= m; i += 4)
    row_block<4>(n, k, a + static_cast<std::ptrdiff_t>(i) * k, b, c + static_cast<std::ptrdiff_t>(i) * n);
  for (; i < m; ++i)
    row_block<1>(n, k, a + static_cast<std::ptrdiff_t>(i) * k, b, c + static_cast<std::ptrdiff_t>(i) * n);
}

void gemm_nt_avx2(int m, int n, int k, const float* a, const float* b, float* c) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::ptrdiff_t>(i) * k;
    float* crow = c + static_cast<std::ptrdiff_t>(i) * n;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      const float* b0 = b + static_cast<std::ptrdiff_t>(j) * k;
      const float* b1 = b0 + k;
      const float* b2 = b1 + k;
      const float* b3 = b2 + k;
      __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
      __m256 s2 = _mm256_setzero_ps(), s3 = _mm256_setzero_ps();
      int p = 0;
      for (; p + 8 <= k; p += 8) {
        const __m256 av = _mm256_loadu_ps(arow + p);
        s0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + p), s0);
        s1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + p), s1);
        s2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + p), s2);
        s3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + p), s3);
      }
      float t0 = hsum(s0), t1 = hsum(s1), t2 = hsum(s2), t3 = hsum(s3);
      for (; p < k; ++p) {
        t0 += arow[p] * b0[p];
        t1 += arow[p] * b1[p];
        t2 += arow[p] * b2[p];
        t3 += arow[p] * b3[p];
      }
      crow[j] += t0;
      crow[j + 1] += t1;
      crow[j + 2] += t2;
      crow[j + 3] += t3;
    }
    for (; j < n; ++j) {
      const float* bj = b + static_cast<std::ptrdiff_t>(j) * k;
      __m256 s = _mm256_setzero_ps();
      int p = 0;
      for (; p + 8 <= k; p += 8) s = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p), _mm256_loadu_ps(bj + p), s);
      float t = hsum(s);
      for (; p < k; ++p) t += arow[p] * bj[p];
      crow[j] += t;
    }
  }
}

void spmm_rows_avx2(int m, int n, const int* row_ptr, const int* idx, const float* val,
                    const float* b, float* c) {
  for (int r = 0; r < m; ++r) {
    float* crow = c + static_cast<std::ptrdiff_t>(r) * n;
    const int e0 = row_ptr[r], e1 = row_ptr[r + 1];
    int j = 0;
    for (; j + 32 <= n; j += 32) {
      __m256 c0 = _mm256_loadu_ps(crow + j), c1 = _mm256_loadu_ps(crow + j + 8);
      __m256 c2 = _mm256_loadu_ps(crow + j + 16), c3 = _mm256_loadu_ps(crow + j + 24);
      for (int e = e0; e < e1; ++e) {
        const __m256 v = _mm256_broadcast_ss(val + e);
        const float* bp = b + static_cast<std::ptrdiff_t>(idx[e]) * n + j;
        c0 = _mm256_fmadd_ps(v, _mm256_loadu_ps(bp), c0);
        c1 = _mm256_fmadd_ps(v, _mm256_loadu_ps(bp + 8), c1);
        c2 = _mm256_fmadd_ps(v, _mm256_loadu_ps(bp + 16), c2);
        c3 = _mm256_fmadd_ps(v, _mm256_loadu_ps(bp + 24), c3);
      }
      _mm256_storeu_ps(crow + j, c0);
      _mm256_storeu_ps(crow + j + 8, c1);
      _mm256_storeu_ps(crow + j + 16, c2);
      _mm256_storeu_ps(crow + j + 24, c3);
    }
    for (; j + 8 <= n; j += 8) {
      __m256 c0 = _mm256_loadu_ps(crow + j);
      for (int e = e0; e < e1; ++e)
        c0 = _mm256_fmadd_ps(_mm256_broadcast_ss(val + e),
                             _mm256_loadu_ps(b + static_cast<std::ptrdiff_t>(idx[e]) * n + j), c0);
      _mm256_storeu_ps(crow + j, c0);
    }
    for (; j < n; ++j) {
      float acc = crow[j];
      for (int e = e0; e < e1; ++e) acc += val[e] * b[static_cast<std::ptrdiff_t>(idx[e]) * n + j];
      crow[j] = acc;
    }
  }
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable t{Isa::kAvx2, gemm_nn_avx2, gemm_nt_avx2, spmm_rows_avx2};
  return &t;
}

}  // namespace nmsls::kernels
