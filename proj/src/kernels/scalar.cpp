// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include <vector>

#include "nmsls/kernels.hpp"

namespace nmsls::kernels {
namespace {

void gemm_nn_scalar(int m, int n, int k, const float* a, const float* b, float* c) {
  std::vector<float> acc(static_cast<std::size_t>(n));
  for (int i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0f);
    const float* arow = a + static_cast<std::ptrdiff_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const float av = arow[p];
      const float* brow = b + static_cast<std::ptrdiff_t>(p) * n;
      for (int j = 0; j < n; ++j) acc[j] += av * brow[j];
    }
    float* crow = c + static_cast<std::ptrdiff_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] += acc[j];
  }
}

void gemm_nt_scalar(int m, int n, int k, const float* a, const float* b, float* c) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::ptrdiff_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const float* brow = b + static_cast<std::ptrdiff_t>(j) * k;
      float acc = 0.0f;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[static_cast<std::ptrdiff_t>(i) * n + j] += acc;
    }
  }
}

void spmm_rows_scalar(int m, int n, const int* row_ptr, const int* idx, const float* val,
                      const float* b, float* c) {
  for (int r = 0; r < m; ++r) {
    float* crow = c + static_cast<std::ptrdiff_t>(r) * n;
    for (int e = row_ptr[r]; e < row_ptr[r + 1]; ++e) {
      const float v = val[e];
      const float* brow = b + static_cast<std::ptrdiff_t>(idx[e]) * n;
      for (int j = 0; j < n; ++j) crow[j] += v * brow[j];
    }
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{Isa::kScalar, gemm_nn_scalar, gemm_nt_scalar, spmm_rows_scalar};
  return t;
}

}  // namespace nmsls::kernels
