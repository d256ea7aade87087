// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include <vector>

#include "doctest.h"
#include "nmsls/kernels.hpp"
#include "nmsls/nm_sparse.hpp"
#include "nmsls/rng.hpp"
#include "nmsls/tensor_ops.hpp"
#include "oracles.hpp"

using namespace nmsls;
using namespace nmsls::kernels;

namespace {

std::vector<float> rand_vec(Rng& rng, std::size_t n) {
  std::vector<float> v(n);
  for (auto& x : v) x = rng.uniform(-1.0f, 1.0f);
  return v;
}

// Reference products in double.
std::vector<double> ref_nn(int m, int n, int k, const std::vector<float>& a, const std::vector<float>& b,
                           const std::vector<float>& c0) {
  std::vector<double> c(c0.begin(), c0.end());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p) c[i * n + j] += static_cast<double>(a[i * k + p]) * b[p * n + j];
  return c;
}

std::vector<double> ref_nt(int m, int n, int k, const std::vector<float>& a, const std::vector<float>& b,
                           const std::vector<float>& c0) {
  std::vector<double> c(c0.begin(), c0.end());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p) c[i * n + j] += static_cast<double>(a[i * k + p]) * b[j * k + p];
  return c;
}

double max_err(const std::vector<float>& got, const std::vector<double>& want) {
  double m = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) m = std::max(m, std::abs(got[i] - want[i]));
  return m;
}

std::vector<const KernelTable*> all_tables() {
  std::vector<const KernelTable*> t{&scalar_table()};
  if (avx2_table() && cpu_supports(Isa::kAvx2)) t.push_back(avx2_table());
  return t;
}

}  // namespace

TEST_CASE("isa names and selection") {
  CHECK(isa_name(Isa::kScalar) == "scalar");
  CHECK(isa_name(Isa::kAvx2) == "avx2");
  CHECK(cpu_supports(Isa::kScalar));
  {
    ScopedIsa s(Isa::kScalar);
    CHECK(active().isa == Isa::kScalar);
  }
  if (!cpu_supports(Isa::kAvx2)) CHECK_THROWS_AS(set_active(Isa::kAvx2), std::invalid_argument);
}

TEST_CASE("gemm kernels match the double reference on ragged sizes") {
  Rng rng(11);
  const int sizes[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 16, 9}, {5, 17, 33}, {8, 24, 1}, {13, 70, 27}, {32, 256, 288}};
  for (const auto* table : all_tables()) {
    CAPTURE(isa_name(table->isa));
    for (const auto& s : sizes) {
      const int m = s[0], n = s[1], k = s[2];
      const auto a = rand_vec(rng, static_cast<std::size_t>(m * k));
      const auto b = rand_vec(rng, static_cast<std::size_t>(k * n));
      const auto bt = rand_vec(rng, static_cast<std::size_t>(n * k));
      const auto c0 = rand_vec(rng, static_cast<std::size_t>(m * n));
      auto c = c0;
      table->gemm_nn(m, n, k, a.data(), b.data(), c.data());
      CHECK(max_err(c, ref_nn(m, n, k, a, b, c0)) <= 1e-4);
      c = c0;
      table->gemm_nt(m, n, k, a.data(), bt.data(), c.data());
      CHECK(max_err(c, ref_nt(m, n, k, a, bt, c0)) <= 1e-4);
    }
  }
}

TEST_CASE("spmm kernel matches dense gather") {
  Rng rng(12);
  for (const auto* table : all_tables()) {
    for (int n : {1, 7, 8, 31, 32, 45, 256}) {
      const int m = 6, rows_b = 20;
      std::vector<int> row_ptr{0}, idx;
      std::vector<float> val;
      for (int r = 0; r < m; ++r) {
        const int nnz = static_cast<int>(rng.below(6));
        for (int e = 0; e < nnz; ++e) {
          idx.push_back(static_cast<int>(rng.below(rows_b)));
          val.push_back(rng.uniform(-1.0f, 1.0f));
        }
        row_ptr.push_back(static_cast<int>(idx.size()));
      }
      const auto b = rand_vec(rng, static_cast<std::size_t>(rows_b * n));
      const auto c0 = rand_vec(rng, static_cast<std::size_t>(m * n));
      auto c = c0;
      table->spmm_rows(m, n, row_ptr.data(), idx.data(), val.data(), b.data(), c.data());
      std::vector<double> want(c0.begin(), c0.end());
      for (int r = 0; r < m; ++r)
        for (int e = row_ptr[r]; e < row_ptr[r + 1]; ++e)
          for (int j = 0; j < n; ++j) want[r * n + j] += static_cast<double>(val[e]) * b[idx[e] * n + j];
      CHECK(max_err(c, want) <= 1e-5);
    }
  }
}

TEST_CASE("scalar and avx2 variants agree end to end") {
  if (!avx2_table() || !cpu_supports(Isa::kAvx2)) return;
  Rng rng(13);
  Tensor x = oracle::random_tensor(rng, {2, 16, 12, 12});
  Tensor w = oracle::random_tensor(rng, {24, 16, 3, 3});
  Tensor dense_s, dense_v, sparse_s, sparse_v;
  const auto d = nm::decompose(w, 8);
  const Tensor masked = nm::reconstruct(w, *d, nm::NMMask::prefix(3, 8));
  const auto comp = nm::compress(masked, 3, 8);
  {
    ScopedIsa s(Isa::kScalar);
    dense_s = ops::conv2d(x, w, 1, 1);
    sparse_s = nm::sparse_conv2d(x, comp, 1, 1);
  }
  {
    ScopedIsa s(Isa::kAvx2);
    dense_v = ops::conv2d(x, w, 1, 1);
    sparse_v = nm::sparse_conv2d(x, comp, 1, 1);
  }
  CHECK(oracle::max_abs_diff(dense_s.data, dense_v.data) <= 1e-5);
  CHECK(oracle::max_abs_diff(sparse_s.data, sparse_v.data) <= 1e-5);
  CHECK(oracle::max_abs_diff(dense_s.data, oracle::naive_conv2d(x, w, 1, 1).data) <= 1e-5);
}
