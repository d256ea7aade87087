// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "nmsls/kernels.hpp"

namespace nmsls::kernels {

#ifndef NMSLS_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

namespace {

const KernelTable& initial_table() {
  if (const char* env = std::getenv("NMSLS_ISA")) {
    const std::string v(env);
    if (v == "scalar") return scalar_table();
    if (v == "avx2" && cpu_supports(Isa::kAvx2)) return *avx2_table();
  }
  if (cpu_supports(Isa::kAvx2)) return *avx2_table();
  return scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> t{&initial_table()};
  return t;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(NMSLS_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table_for(Isa isa) {
  if (!cpu_supports(isa))
    throw std::invalid_argument("kernel variant '" + std::string(isa_name(isa)) +
                                "' is not supported on this CPU/build");
  return isa == Isa::kAvx2 ? *avx2_table() : scalar_table();
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void set_active(Isa isa) { current().store(&table_for(isa), std::memory_order_release); }

ScopedIsa::ScopedIsa(Isa isa) : previous_(active().isa) { set_active(isa); }
ScopedIsa::~ScopedIsa() { set_active(previous_); }

}  // namespace nmsls::kernels
