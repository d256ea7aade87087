// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nmsls/autodiff.hpp"
#include "nmsls/tensor.hpp"

// N:M fine-grained structured sparsity primitives.
//
// A group is M consecutive input-channel weights at a fixed
// (output channel, kernel row, kernel column) position of an OIHW weight.
// Groups are enumerated output-channel major, then input-channel block, then
// kernel position.
namespace nmsls::nm {

/// Rank of every weight inside its group: group_id = 1 marks the largest
/// magnitude, M the smallest. Ties go to the lower input-channel index.
/// Unit i (the 1:M tensor holding rank-i weights) is the set of entries whose
/// group_id equals i; the M units partition the weight.
struct GroupDecomposition {
  int M = 0;
  Shape shape;
  std::vector<std::uint8_t> group_id;
  std::uint64_t snapshot_version = 0;

  // Dense tensor holding only the entries of unit i (1-based).
  Tensor unit(const Tensor& weight, int i) const;
};

/// Prefix-of-ones keep mask over the M units.
struct NMMask {
  std::vector<std::uint8_t> bits;

  static NMMask prefix(int n, int M);
  static NMMask from_values(const std::vector<float>& b);
  int M() const { return static_cast<int>(bits.size()); }
  int effective_n() const;
  bool is_prefix() const;
};

/// Packed N:M weights: N values and N within-group offsets per group, in
/// group enumeration order. Offsets are strictly increasing inside a group.
struct CompressedNM {
  int N = 0;
  int M = 0;
  Shape dense_shape;
  std::vector<float> values;
  std::vector<std::uint8_t> col_index;

  std::int64_t groups() const;
};

struct LayerCostModel {
  std::int64_t c_out = 0, c_in = 0, k_h = 0, k_w = 0;
  std::int64_t h = 0, w = 0;  // output spatial dims
  bool prunable = false;

  static LayerCostModel make(const Shape& weight_shape, std::int64_t out_h, std::int64_t out_w, int M);
};

bool groups_evenly(const Shape& weight_shape, int M);

// Empty when the input channels are not divisible by M (layer is unprunable).
std::optional<GroupDecomposition> decompose(const Tensor& weight, int M);

Tensor reconstruct(const Tensor& weight, const GroupDecomposition& decomp, const NMMask& mask);

// Differentiable reconstruction: entry e of the result is b[group_id[e]-1] * w[e].
// `b` is a length-M vector (the forward binary keep mask). The weight
// gradient is masked by b; the gradient of b_i collects <dL/dW~, unit_i>.
ad::Var masked_weight(ad::Var weight, const GroupDecomposition& decomp, ad::Var b);

// True iff every group holds at most N nonzeros.
bool validate_nm(const Tensor& weight, int N, int M);

CompressedNM compress(const Tensor& masked_weight, int N, int M);
Tensor decompress(const CompressedNM& c);

// Convolution over compressed weights; gathers only the input rows named by
// col_index, so it performs N/M of the dense multiply-accumulates.
Tensor sparse_conv2d(const Tensor& input, const CompressedNM& weight, int stride, int padding);

std::int64_t layer_macs(const LayerCostModel& cfg);
double pruned_macs(const LayerCostModel& cfg, const NMMask& mask);
double pruned_macs(const LayerCostModel& cfg, int n_kept, int M);

}  // namespace nmsls::nm
