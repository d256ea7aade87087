// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsls/nm_sparse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nmsls/kernels.hpp"
#include "nmsls/tensor_ops.hpp"

namespace nmsls::nm {
namespace {

void require_groupable(const Shape& shape, int M, const char* op) {
  require(shape.size() == 4, std::string(op) + ": weight must be 4-D OIHW, got " + shape_str(shape));
  require(M >= 1, std::string(op) + ": M must be >= 1");
  require(shape[1] % M == 0, std::string(op) + ": input channels " + std::to_string(shape[1]) +
                                 " not divisible by M = " + std::to_string(M));
}

// Calls fn(first, stride) for every group; the members are
// first + j*stride for j in [0, M).
template <typename F>
void for_each_group(const Shape& shape, int M, F fn) {
  const std::int64_t c_out = shape[0], c_in = shape[1], khw = shape[2] * shape[3];
  for (std::int64_t o = 0; o < c_out; ++o)
    for (std::int64_t g = 0; g < c_in / M; ++g)
      for (std::int64_t s = 0; s < khw; ++s) fn((o * c_in + g * M) * khw + s, khw);
}

}  // namespace

Tensor GroupDecomposition::unit(const Tensor& weight, int i) const {
  require(weight.shape == shape, "unit: weight shape does not match decomposition");
  Tensor out(shape);
  for (std::size_t e = 0; e < group_id.size(); ++e)
    if (group_id[e] == i) out.data[e] = weight.data[e];
  return out;
}

NMMask NMMask::prefix(int n, int M) {
  require(M >= 1 && n >= 0 && n <= M, "NMMask::prefix: need 0 <= n <= M");
  NMMask m;
  m.bits.assign(static_cast<std::size_t>(M), 0);
  std::fill(m.bits.begin(), m.bits.begin() + n, 1);
  return m;
}

NMMask NMMask::from_values(const std::vector<float>& b) {
  NMMask m;
  m.bits.reserve(b.size());
  for (float v : b) m.bits.push_back(v > 0.5f ? 1 : 0);
  return m;
}

int NMMask::effective_n() const { return std::accumulate(bits.begin(), bits.end(), 0); }

bool NMMask::is_prefix() const {
  for (std::size_t i = 1; i < bits.size(); ++i)
    if (bits[i] > bits[i - 1]) return false;
  return true;
}

std::int64_t CompressedNM::groups() const {
  return M > 0 ? numel(dense_shape) / M : 0;
}

LayerCostModel LayerCostModel::make(const Shape& weight_shape, std::int64_t out_h, std::int64_t out_w,
                                    int M) {
  require(weight_shape.size() == 4, "LayerCostModel: weight must be 4-D");
  return LayerCostModel{weight_shape[0], weight_shape[1], weight_shape[2], weight_shape[3],
                        out_h,           out_w,           groups_evenly(weight_shape, M)};
}

bool groups_evenly(const Shape& weight_shape, int M) {
  return weight_shape.size() == 4 && M >= 1 && weight_shape[1] % M == 0;
}

std::optional<GroupDecomposition> decompose(const Tensor& weight, int M) {
  if (!groups_evenly(weight.shape, M)) return std::nullopt;
  GroupDecomposition d;
  d.M = M;
  d.shape = weight.shape;
  d.group_id.assign(weight.data.size(), 0);
  std::vector<int> order(static_cast<std::size_t>(M));
  for_each_group(weight.shape, M, [&](std::int64_t first, std::int64_t stride) {
    std::iota(order.begin(), order.end(), 0);
    auto mag = [&](int j) { return std::fabs(weight.data[static_cast<std::size_t>(first + j * stride)]); };
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return mag(a) > mag(b); });
    for (int r = 0; r < M; ++r)
      d.group_id[static_cast<std::size_t>(first + order[static_cast<std::size_t>(r)] * stride)] =
          static_cast<std::uint8_t>(r + 1);
  });
  return d;
}

Tensor reconstruct(const Tensor& weight, const GroupDecomposition& decomp, const NMMask& mask) {
  require(mask.M() == decomp.M, "reconstruct: mask length " + std::to_string(mask.M()) +
                                    " does not match M = " + std::to_string(decomp.M));
  require(weight.shape == decomp.shape, "reconstruct: weight shape " + shape_str(weight.shape) +
                                            " does not match decomposition " + shape_str(decomp.shape));
  Tensor out(weight.shape);
  for (std::size_t e = 0; e < weight.data.size(); ++e)
    out.data[e] = mask.bits[decomp.group_id[e] - 1u] ? weight.data[e] : 0.0f;
  return out;
}

ad::Var masked_weight(ad::Var weight, const GroupDecomposition& decomp, ad::Var b) {
  const Tensor& w = weight.value();
  const Tensor& bv = b.value();
  require(w.shape == decomp.shape, "masked_weight: weight shape does not match decomposition");
  require(bv.size() == decomp.M, "masked_weight: mask length does not match M");
  Tensor out(w.shape);
  for (std::size_t e = 0; e < w.data.size(); ++e) out.data[e] = bv.data[decomp.group_id[e] - 1u] * w.data[e];
  const int wi = weight.id, bi = b.id;
  const std::vector<std::uint8_t>* gid = &decomp.group_id;
  // The decomposition must outlive the tape's backward pass.
  return weight.tape->record(std::move(out), {wi, bi}, [wi, bi, gid](ad::Tape& tp, int self) {
    const auto& g = tp.grad(self);
    const auto& wv = tp.value(wi).data;
    const auto& bvals = tp.value(bi).data;
    if (tp.needs_grad(wi)) {
      auto& gw = tp.grad(wi);
      for (std::size_t e = 0; e < g.size(); ++e) gw[e] += g[e] * bvals[(*gid)[e] - 1u];
    }
    if (tp.needs_grad(bi)) {
      std::vector<double> acc(bvals.size(), 0.0);
      for (std::size_t e = 0; e < g.size(); ++e) acc[(*gid)[e] - 1u] += static_cast<double>(g[e]) * wv[e];
      auto& gb = tp.grad(bi);
      for (std::size_t i = 0; i < acc.size(); ++i) gb[i] += static_cast<float>(acc[i]);
    }
  });
}

bool validate_nm(const Tensor& weight, int N, int M) {
  require_groupable(weight.shape, M, "validate_nm");
  bool ok = true;
  for_each_group(weight.shape, M, [&](std::int64_t first, std::int64_t stride) {
    if (!ok) return;
    int nz = 0;
    for (int j = 0; j < M; ++j) nz += weight.data[static_cast<std::size_t>(first + j * stride)] != 0.0f;
    ok = nz <= N;
  });
  return ok;
}

CompressedNM compress(const Tensor& masked, int N, int M) {
  require_groupable(masked.shape, M, "compress");
  require(N >= 0 && N <= M, "compress: need 0 <= N <= M");
  require(validate_nm(masked, N, M), "compress: weight violates " + std::to_string(N) + ":" +
                                         std::to_string(M) + " sparsity");
  CompressedNM c;
  c.N = N;
  c.M = M;
  c.dense_shape = masked.shape;
  const auto groups = static_cast<std::size_t>(masked.size() / M);
  c.values.reserve(groups * static_cast<std::size_t>(N));
  c.col_index.reserve(groups * static_cast<std::size_t>(N));
  std::vector<std::uint8_t> keep(static_cast<std::size_t>(M));
  for_each_group(masked.shape, M, [&](std::int64_t first, std::int64_t stride) {
    int nz = 0;
    for (int j = 0; j < M; ++j) {
      keep[j] = masked.data[static_cast<std::size_t>(first + j * stride)] != 0.0f;
      nz += keep[j];
    }
    // Pad short groups with explicit zeros at the lowest unused offsets.
    for (int j = 0; j < M && nz < N; ++j)
      if (!keep[j]) {
        keep[j] = 1;
        ++nz;
      }
    for (int j = 0; j < M; ++j)
      if (keep[j]) {
        c.values.push_back(masked.data[static_cast<std::size_t>(first + j * stride)]);
        c.col_index.push_back(static_cast<std::uint8_t>(j));
      }
  });
  return c;
}

Tensor decompress(const CompressedNM& c) {
  require(c.M >= 1 && c.N >= 0 && c.N <= c.M, "decompress: invalid N:M pattern");
  require_groupable(c.dense_shape, c.M, "decompress");
  require(static_cast<std::int64_t>(c.values.size()) == c.groups() * c.N &&
              c.col_index.size() == c.values.size(),
          "decompress: value/index count does not match N per group");
  Tensor out(c.dense_shape);
  std::size_t e = 0;
  for_each_group(c.dense_shape, c.M, [&](std::int64_t first, std::int64_t stride) {
    int prev = -1;
    for (int n = 0; n < c.N; ++n, ++e) {
      const int j = c.col_index[e];
      require(j > prev && j < c.M, "decompress: column indices must be strictly increasing within a group");
      prev = j;
      out.data[static_cast<std::size_t>(first + j * stride)] = c.values[e];
    }
  });
  return out;
}

Tensor sparse_conv2d(const Tensor& input, const CompressedNM& weight, int stride, int padding) {
  const ops::ConvGeometry g = ops::conv_geometry(input.shape, weight.dense_shape, stride, padding);
  // Nothing to skip at N = M; the dense path is exact and faster.
  if (weight.N == weight.M) return ops::conv2d(input, decompress(weight), stride, padding);
  const std::int64_t khw = g.k_h * g.k_w;
  const std::int64_t per_out = (g.c_in / weight.M) * khw * weight.N;
  // CSR over output channels; each entry names an im2col row (c_in, ky, kx).
  std::vector<int> row_ptr(static_cast<std::size_t>(g.c_out) + 1);
  std::vector<int> idx(weight.values.size());
  for (std::int64_t o = 0; o <= g.c_out; ++o) row_ptr[static_cast<std::size_t>(o)] = static_cast<int>(o * per_out);
  std::size_t e = 0;
  for (std::int64_t o = 0; o < g.c_out; ++o)
    for (std::int64_t grp = 0; grp < g.c_in / weight.M; ++grp)
      for (std::int64_t s = 0; s < khw; ++s)
        for (int n = 0; n < weight.N; ++n, ++e)
          idx[e] = static_cast<int>((grp * weight.M + weight.col_index[e]) * khw + s);
  require(e == weight.values.size(), "sparse_conv2d: compressed weight is malformed");

  Tensor out(Shape{g.batch, g.c_out, g.h_out, g.w_out});
  std::vector<float> col(static_cast<std::size_t>(g.patch_len() * g.out_pixels()));
  const auto& k = kernels::active();
  for (std::int64_t b = 0; b < g.batch; ++b) {
    ops::im2col(g, input.data.data() + b * g.c_in * g.h * g.w, col.data());
    k.spmm_rows(static_cast<int>(g.c_out), static_cast<int>(g.out_pixels()), row_ptr.data(), idx.data(),
                weight.values.data(), col.data(), out.data.data() + b * g.c_out * g.out_pixels());
  }
  return out;
}

std::int64_t layer_macs(const LayerCostModel& cfg) {
  return cfg.c_out * cfg.c_in * cfg.k_h * cfg.k_w * cfg.h * cfg.w;
}

double pruned_macs(const LayerCostModel& cfg, int n_kept, int M) {
  require(M >= 1 && n_kept >= 0 && n_kept <= M, "pruned_macs: need 0 <= N <= M");
  const std::int64_t c = layer_macs(cfg);
  if ((c * n_kept) % M == 0) return static_cast<double>(c * n_kept / M);
  return static_cast<double>(c) * n_kept / M;
}

double pruned_macs(const LayerCostModel& cfg, const NMMask& mask) {
  return pruned_macs(cfg, mask.effective_n(), mask.M());
}

}  // namespace nmsls::nm
