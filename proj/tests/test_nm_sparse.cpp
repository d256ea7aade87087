// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "nmsls/nm_sparse.hpp"
#include "nmsls/tensor_ops.hpp"
#include "oracles.hpp"

using namespace nmsls;
using oracle::random_tensor;

namespace {

// 1x4x1x1 weight holding one group.
Tensor group4(std::vector<float> v) { return Tensor(Shape{1, 4, 1, 1}, std::move(v)); }

std::vector<int> ids(const nm::GroupDecomposition& d) { return {d.group_id.begin(), d.group_id.end()}; }

// Flat indices of group g's members for an OIHW weight.
std::vector<std::size_t> group_members(const Shape& s, int M, std::int64_t o, std::int64_t blk, std::int64_t pos) {
  const std::int64_t khw = s[2] * s[3];
  std::vector<std::size_t> out;
  for (int j = 0; j < M; ++j)
    out.push_back(static_cast<std::size_t>((o * s[1] + blk * M + j) * khw + pos));
  return out;
}

template <typename Fn>
void for_each_group(const Shape& s, int M, Fn&& fn) {
  for (std::int64_t o = 0; o < s[0]; ++o)
    for (std::int64_t blk = 0; blk < s[1] / M; ++blk)
      for (std::int64_t pos = 0; pos < s[2] * s[3]; ++pos) fn(group_members(s, M, o, blk, pos));
}

}  // namespace

TEST_CASE("decompose examples") {
  auto d = nm::decompose(group4({0.5f, -0.2f, 0.9f, 0.1f}), 4);
  REQUIRE(d);
  CHECK(ids(*d) == std::vector<int>{2, 3, 1, 4});
  CHECK(d->M == 4);
  auto z = nm::decompose(group4({0, 0, 0, 0}), 4);
  CHECK(ids(*z) == std::vector<int>{1, 2, 3, 4});
  auto ties = nm::decompose(group4({-0.5f, 0.5f, 0.1f, -0.1f}), 4);
  CHECK(ids(*ties) == std::vector<int>{1, 2, 3, 4});
  CHECK_FALSE(nm::decompose(Tensor(Shape{2, 6, 3, 3}), 4).has_value());
  CHECK_FALSE(nm::groups_evenly(Shape{2, 6, 3, 3}, 4));
}

TEST_CASE("decompose partitions a random 2x8x1x1 weight") {
  Rng rng(21);
  Tensor w = random_tensor(rng, {2, 8, 1, 1});
  auto d = nm::decompose(w, 8);
  REQUIRE(d);
  for_each_group(w.shape, 8, [&](const std::vector<std::size_t>& g) {
    std::vector<int> r;
    for (auto i : g) r.push_back(d->group_id[i]);
    std::sort(r.begin(), r.end());
    std::vector<int> perm(8);
    std::iota(perm.begin(), perm.end(), 1);
    CHECK(r == perm);
  });
  Tensor sum(w.shape);
  for (int i = 1; i <= 8; ++i) {
    Tensor u = d->unit(w, i);
    for (std::size_t e = 0; e < u.data.size(); ++e) sum.data[e] += u.data[e];
  }
  CHECK(sum.data == w.data);
}

TEST_CASE("partition, ordering and monotone masking properties") {
  Rng rng(22);
  for (int M : {4, 8, 16}) {
    for (int trial = 0; trial < 5; ++trial) {
      Tensor w = random_tensor(rng, {3, 2 * M, 3, 3});
      // inject ties
      for (std::size_t i = 0; i < w.data.size(); i += 7) w.data[i] = (i % 2 ? 0.25f : -0.25f);
      auto d = nm::decompose(w, M);
      REQUIRE(d);
      for_each_group(w.shape, M, [&](const std::vector<std::size_t>& g) {
        std::vector<std::size_t> by_rank(static_cast<std::size_t>(M));
        for (auto i : g) by_rank[d->group_id[i] - 1u] = i;
        for (int r = 0; r + 1 < M; ++r) {
          const float a = std::abs(w.data[by_rank[r]]), b = std::abs(w.data[by_rank[r + 1]]);
          CHECK(a >= b);
          if (a == b) CHECK(by_rank[r] < by_rank[r + 1]);
        }
      });
      std::vector<float> acc(w.data.size(), 0.0f);
      for (int j = 0; j < M; ++j) {
        const Tensor lo = nm::reconstruct(w, *d, nm::NMMask::prefix(j, M));
        const Tensor hi = nm::reconstruct(w, *d, nm::NMMask::prefix(j + 1, M));
        const Tensor unit = d->unit(w, j + 1);
        for (std::size_t e = 0; e < w.data.size(); ++e) {
          CHECK(hi.data[e] - lo.data[e] == unit.data[e]);
          if (unit.data[e] != 0.0f) CHECK(acc[e] == 0.0f);  // disjoint support
          acc[e] += unit.data[e];
        }
      }
      CHECK(acc == w.data);
    }
  }
}

TEST_CASE("reconstruct examples") {
  Tensor g = group4({0.5f, -0.2f, 0.9f, 0.1f});
  auto d = nm::decompose(g, 4);
  CHECK(nm::reconstruct(g, *d, nm::NMMask::prefix(4, 4)).data == g.data);
  CHECK(nm::reconstruct(g, *d, nm::NMMask::prefix(1, 4)).data == std::vector<float>{0, 0, 0.9f, 0});
  Rng rng(23);
  Tensor w = random_tensor(rng, {4, 8, 3, 3});
  auto dw = nm::decompose(w, 4);
  const Tensor r = nm::reconstruct(w, *dw, nm::NMMask::prefix(2, 4));
  CHECK(nm::validate_nm(r, 2, 4));
  for_each_group(w.shape, 4, [&](const std::vector<std::size_t>& grp) {
    int nz = 0;
    for (auto i : grp) nz += r.data[i] != 0.0f;
    CHECK(nz == 2);
  });
  CHECK_THROWS_AS(nm::reconstruct(w, *dw, nm::NMMask::prefix(2, 8)), std::invalid_argument);
}

TEST_CASE("masked_weight gradients") {
  Rng rng(24);
  Tensor w = random_tensor(rng, {2, 4, 1, 1});
  auto d = nm::decompose(w, 4);
  Tensor b(Shape{4}, {1, 1, 0, 0});
  w.requires_grad = b.requires_grad = true;
  Tensor g = random_tensor(rng, {2, 4, 1, 1});
  ad::Tape tape;
  ad::Var y = nm::masked_weight(tape.param(w), *d, tape.param(b));
  tape.backward(ad::sum(ad::mul(y, tape.constant(g))));
  for (std::size_t e = 0; e < w.data.size(); ++e) {
    const int id = d->group_id[e];
    CHECK((*w.grad)[e] == (id <= 2 ? g.data[e] : 0.0f));
  }
  for (int i = 1; i <= 4; ++i) {
    double want = 0.0;
    for (std::size_t e = 0; e < w.data.size(); ++e)
      if (d->group_id[e] == i) want += static_cast<double>(g.data[e]) * w.data[e];
    CHECK((*b.grad)[static_cast<std::size_t>(i - 1)] == doctest::Approx(want));
  }
}

TEST_CASE("validate_nm examples") {
  // Fig. 2a style: 4 output rows, groups of 4 with 3 nonzeros each.
  Tensor fig(Shape{4, 8, 1, 1}, {1, 2, 0, 3, 0, 4, 5, 6,  //
                                 7, 0, 8, 9, 1, 2, 3, 0,  //
                                 0, 4, 5, 6, 7, 8, 0, 9,  //
                                 1, 2, 3, 0, 4, 0, 5, 6});
  CHECK(nm::validate_nm(fig, 3, 4));
  CHECK_FALSE(nm::validate_nm(fig, 2, 4));
  Rng rng(25);
  Tensor dense = random_tensor(rng, {3, 8, 3, 3}, 0.1f, 1.0f);
  CHECK(nm::validate_nm(dense, 8, 8));
  CHECK_FALSE(nm::validate_nm(dense, 7, 8));
  CHECK_THROWS_AS(nm::validate_nm(Tensor(Shape{1, 6, 1, 1}), 1, 4), std::invalid_argument);
}

TEST_CASE("compress examples and round trips") {
  auto c = nm::compress(group4({0, 0, 0.9f, 0}), 1, 4);
  CHECK(c.values == std::vector<float>{0.9f});
  CHECK(c.col_index == std::vector<std::uint8_t>{2});
  auto z = nm::compress(group4({0, 0, 0, 0}), 1, 4);
  CHECK(z.values == std::vector<float>{0.0f});
  CHECK(z.col_index == std::vector<std::uint8_t>{0});
  auto pad = nm::compress(group4({0, 0, 0.9f, 0}), 3, 4);
  CHECK(pad.values == std::vector<float>{0, 0, 0.9f});
  CHECK(pad.col_index == std::vector<std::uint8_t>{0, 1, 2});
  CHECK_THROWS_AS(nm::compress(group4({1, 1, 0, 0}), 1, 4), std::invalid_argument);

  Rng rng(26);
  for (auto [N, M] : std::vector<std::pair<int, int>>{{2, 4}, {1, 4}, {3, 8}, {8, 32}}) {
    Tensor w = random_tensor(rng, {5, 2 * M, 3, 3});
    auto d = nm::decompose(w, M);
    Tensor masked = nm::reconstruct(w, *d, nm::NMMask::prefix(N, M));
    auto comp = nm::compress(masked, N, M);
    CHECK(comp.values.size() == static_cast<std::size_t>(comp.groups() * N));
    CHECK(nm::decompress(comp).data == masked.data);
    auto again = nm::compress(nm::decompress(comp), N, M);
    CHECK(again.values == comp.values);
    CHECK(again.col_index == comp.col_index);
    for (std::int64_t g = 0; g < comp.groups(); ++g)
      for (int j = 1; j < N; ++j) CHECK(comp.col_index[g * N + j - 1] < comp.col_index[g * N + j]);
  }
  nm::CompressedNM bad = nm::compress(group4({0, 0, 0.9f, 0.5f}), 2, 4);
  std::swap(bad.col_index[0], bad.col_index[1]);
  CHECK_THROWS_AS(nm::decompress(bad), std::invalid_argument);
}

TEST_CASE("sparse_conv2d examples") {
  Tensor x(Shape{1, 4, 1, 1}, {1, 2, 3, 4});
  auto c = nm::compress(group4({0, 0, 0.9f, 0}), 1, 4);
  Tensor y = nm::sparse_conv2d(x, c, 1, 0);
  CHECK(y.data.size() == 1);
  CHECK(y.data[0] == doctest::Approx(2.7f));

  Rng rng(27);
  Tensor in = random_tensor(rng, {2, 8, 6, 6});
  Tensor w = random_tensor(rng, {5, 8, 3, 3});
  CHECK(nm::sparse_conv2d(in, nm::compress(w, 4, 4), 1, 1).data == ops::conv2d(in, w, 1, 1).data);
  CHECK_THROWS_AS(nm::sparse_conv2d(random_tensor(rng, {1, 4, 6, 6}), nm::compress(w, 4, 4), 1, 1),
                  std::invalid_argument);
}

TEST_CASE("sparse/dense equivalence across patterns") {
  Rng rng(28);
  for (auto [N, M] : std::vector<std::pair<int, int>>{{1, 4}, {2, 4}, {2, 8}, {4, 16}, {8, 32}}) {
    for (int stride : {1, 2}) {
      Tensor w = random_tensor(rng, {8, M, 3, 3});
      Tensor x = random_tensor(rng, {2, M, 7, 7});
      auto d = nm::decompose(w, M);
      Tensor masked = nm::reconstruct(w, *d, nm::NMMask::prefix(N, M));
      Tensor sparse = nm::sparse_conv2d(x, nm::compress(masked, N, M), stride, 1);
      CHECK(oracle::max_abs_diff(sparse.data, oracle::naive_conv2d(x, masked, stride, 1).data) <= 1e-5);
    }
  }
}

TEST_CASE("cost model") {
  const auto cfg = nm::LayerCostModel::make(Shape{64, 64, 3, 3}, 32, 32, 32);
  CHECK(nm::layer_macs(cfg) == 37748736);
  CHECK(nm::pruned_macs(cfg, 8, 32) == 9437184.0);
  CHECK(nm::pruned_macs(cfg, 8, 32) / static_cast<double>(nm::layer_macs(cfg)) == 0.25);
  CHECK(nm::pruned_macs(cfg, nm::NMMask::prefix(32, 32)) == static_cast<double>(nm::layer_macs(cfg)));
  CHECK(cfg.prunable);
  CHECK_FALSE(nm::LayerCostModel::make(Shape{64, 3, 3, 3}, 32, 32, 32).prunable);
}
