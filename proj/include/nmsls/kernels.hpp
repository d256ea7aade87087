// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>

// Inner-loop arithmetic kernels. Every kernel has a scalar reference variant
// and, on x86-64, an AVX2/FMA variant; the variant is picked once at runtime
// from CPUID and may be overridden with NMSLS_ISA=scalar|avx2.
//
// All matrices are dense row-major with the leading dimension equal to the
// row width. Kernels accumulate into C (C += ...).
namespace nmsls::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

// C[m,n] += A[m,k] * B[k,n]
using GemmNN = void (*)(int m, int n, int k, const float* a, const float* b, float* c);
// C[m,n] += A[m,k] * B[n,k]^T
using GemmNT = void (*)(int m, int n, int k, const float* a, const float* b, float* c);
// C[r,:] += sum_{e in [row_ptr[r], row_ptr[r+1])} val[e] * B[idx[e], :]   (B is [*, n])
using SpmmRows = void (*)(int m, int n, const int* row_ptr, const int* idx, const float* val,
                          const float* b, float* c);

struct KernelTable {
  Isa isa;
  GemmNN gemm_nn;
  GemmNT gemm_nt;
  SpmmRows spmm_rows;
};

const KernelTable& scalar_table();
// nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_table();

bool cpu_supports(Isa isa);
const KernelTable& table_for(Isa isa);

// Currently selected kernels.
const KernelTable& active();
// Throws std::invalid_argument if the CPU or build does not support `isa`.
void set_active(Isa isa);

// RAII override used by tests and benchmarks.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa);
  ~ScopedIsa();
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

}  // namespace nmsls::kernels
