// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "nmsls/adaptive.hpp"
#include "nmsls/train.hpp"
#include "oracles.hpp"

using namespace nmsls;
using namespace nmsls::adaptive;

namespace {

Image random_image(Rng& rng, int c, int h, int w) {
  Image im(c, h, w);
  for (auto& v : im.data) v = std::floor(rng.uniform(0.0f, 256.0f));
  return im;
}

// Restorer that adds a fixed offset to the bicubic upsampling.
Candidate offset_candidate(std::string name, float offset, double macs_per_pixel) {
  Candidate c;
  c.name = std::move(name);
  c.macs_per_pixel = macs_per_pixel;
  c.restore = [offset](const Image& lr) {
    Image up = bicubic_resample(lr, 2, ResampleDirection::kUp);
    for (auto& v : up.data) v = std::clamp(v + offset, 0.0f, 255.0f);
    return up;
  };
  return c;
}

class FixedScorer : public Scorer {
 public:
  FixedScorer(std::vector<double> e, double overhead) : e_(std::move(e)), overhead_(overhead) {}
  std::vector<double> estimate(const Image&, const Image*) const override { return e_; }
  double overhead_macs(std::int64_t h, std::int64_t w) const override { return overhead_ * static_cast<double>(h * w); }

 private:
  std::vector<double> e_;
  double overhead_;
};

}  // namespace

TEST_CASE("select_model examples") {
  const std::vector<double> C{100, 50, 25}, f{1.0, 2.0, 4.0};
  auto s0 = selection_scores(C, f, 0.0);
  CHECK(s0[0] == doctest::Approx(0.75));
  CHECK(s0[1] == doctest::Approx(0.5));
  CHECK(s0[2] == doctest::Approx(0.0));
  CHECK(select_model(C, f, 0.0) == 0);
  auto s10 = selection_scores(C, f, 10.0);
  CHECK(s10[1] == doctest::Approx(5.5));
  CHECK(s10[2] == doctest::Approx(7.5));
  CHECK(select_model(C, f, 10.0) == 2);
  auto s1 = selection_scores(C, f, 1.0);
  CHECK(s1[0] == doctest::Approx(0.75));
  CHECK(s1[1] == doctest::Approx(1.0));
  CHECK(s1[2] == doctest::Approx(0.75));
  CHECK(select_model(C, f, 1.0) == 1);
}

TEST_CASE("select_model ties and degenerate estimates") {
  CHECK(select_model({100, 50}, {2.0, 2.0}, 0.0) == 1);  // tie -> cheaper
  // f_n ~ 0: accuracy terms vanish, the cost term decides
  CHECK(select_model({100, 50, 0}, {0.5, 0.2, 0.0}, 0.0) == 2);
  CHECK(select_model({100, 50, 0}, {0.5, 0.2, 1e-13}, 0.5) == 2);
  const auto s = selection_scores({100, 50, 0}, {0.5, 0.2, 0.0}, 0.0);
  CHECK(s == std::vector<double>{0, 0, 0});
  CHECK_THROWS_AS(select_model({100, 50}, {1.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(select_model({100, 50}, {1.0, 2.0}, -1.0), std::invalid_argument);
}

TEST_CASE("selector properties on random instances") {
  Rng rng(51);
  for (int t = 0; t < 500; ++t) {
    const int n = 2 + static_cast<int>(rng.below(5));
    std::vector<double> C(n), f(n);
    for (auto& c : C) c = rng.uniform(0.0, 1000.0);
    std::sort(C.rbegin(), C.rend());
    for (auto& v : f) v = rng.uniform(0.01, 100.0);
    // beta = 0 is argmin f with the larger-index tie rule
    std::size_t want = 0;
    for (std::size_t i = 1; i < f.size(); ++i)
      if (f[i] <= f[want]) want = i;
    CHECK(select_model(C, f, 0.0) == want);
    double prev = INFINITY;
    for (int b = 0; b <= 100; ++b) {
      const std::size_t idx = select_model(C, f, b * 0.1);
      CHECK(C[idx] <= prev);
      prev = C[idx];
      auto g = f;
      const double k = std::exp(rng.uniform(-5.0, 5.0));
      for (auto& v : g) v *= k;
      CHECK(select_model(C, g, b * 0.1) == idx);
    }
  }
}

TEST_CASE("tile positions") {
  CHECK(tile_positions(100, 50, 48) == std::vector<std::int64_t>{0, 48, 50});
  CHECK(tile_positions(100, 50, 50) == std::vector<std::int64_t>{0, 50});
  CHECK(tile_positions(30, 50, 48) == std::vector<std::int64_t>{0});
  CHECK(tile_positions(50, 50, 48) == std::vector<std::int64_t>{0});
  CHECK(tile_positions(10, 4, 3) == std::vector<std::int64_t>{0, 3, 6});
  CHECK(tile_positions(11, 4, 3) == std::vector<std::int64_t>{0, 3, 6, 7});
}

TEST_CASE("tile and stitch") {
  Rng rng(52);
  Image im = random_image(rng, 3, 100, 100);
  const auto tiles = tile(im, PatchPlan{50, 48});
  CHECK(tiles.size() == 9);
  CHECK(stitch(tiles, 100, 100).data == im.data);

  // non-overlapping: pure concatenation
  const auto grid = tile(im, PatchPlan{25, 25});
  CHECK(grid.size() == 16);
  CHECK(stitch(grid, 100, 100).data == im.data);

  // patch larger than the image: one whole-image patch
  Image small = random_image(rng, 3, 20, 30);
  const auto one = tile(small, PatchPlan{50, 48});
  REQUIRE(one.size() == 1);
  CHECK(one[0].patch.data == small.data);

  for (int t = 0; t < 10; ++t) {
    const int h = 8 + static_cast<int>(rng.below(40)), w = 8 + static_cast<int>(rng.below(40));
    const auto p = 4 + static_cast<std::int64_t>(rng.below(10));
    const auto s = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(p)));
    Image x = random_image(rng, 1, h, w);
    CHECK(stitch(tile(x, PatchPlan{p, s}), h, w).data == x.data);
  }
  // scaled stitching of upsampled tiles
  Image lr = random_image(rng, 3, 24, 24);
  std::vector<Tile> up;
  for (const auto& t : tile(lr, PatchPlan{8, 8}))
    up.push_back(Tile{t.row, t.col, bicubic_resample(t.patch, 2, ResampleDirection::kUp)});
  CHECK(stitch(up, 48, 48, 2).height == 48);
  CHECK_THROWS_AS(tile(lr, PatchPlan{8, 9}), std::invalid_argument);
}

TEST_CASE("routing examples") {
  Rng rng(53);
  SynthSpec ss;
  ss.train_count = 1;
  ss.test_count = 3;
  ss.test_image_size = 48;
  const PatchDataset data = synth_dataset(ss);
  const PatchPlan plan{8, 8};

  SUBCASE("single candidate") {
    const std::vector<Candidate> one{offset_candidate("a", 0.0f, 10.0)};
    FixedScorer scorer({1.0}, 2.0);
    const auto& s = data.test.front();
    const RouteResult r = route_image(s.lr, one, scorer, 1.0, plan, 2, &s.hr);
    std::vector<Tile> manual;
    for (const auto& t : tile(s.lr, plan)) manual.push_back(Tile{t.row, t.col, one[0].restore(t.patch)});
    CHECK(r.output.data == stitch(manual, 48, 48, 2).data);
    CHECK(r.choices.size() == 9);
    CHECK(r.candidate_macs == 9 * 10.0 * 64);
    CHECK(r.total_macs() == 9 * 10.0 * 64 + 9 * 2.0 * 64);
    CHECK(r.psnr.has_value());
  }
  SUBCASE("huge beta routes everything to the cheapest") {
    const std::vector<Candidate> c{offset_candidate("a", 0.0f, 100.0), offset_candidate("b", 3.0f, 50.0),
                                   bicubic_candidate(2)};
    FixedScorer scorer({1.0, 2.0, 40.0}, 0.0);
    for (const auto& s : data.test) {
      const RouteResult r = route_image(s.lr, c, scorer, 1e6, plan, 2, &s.hr);
      for (const auto& ch : r.choices) CHECK(ch.index == 2);
      CHECK(r.total_macs() == 0.0);
    }
  }
  SUBCASE("oracle routing dominates each single candidate") {
    const std::vector<Candidate> c{offset_candidate("a", 0.0f, 100.0), offset_candidate("b", 6.0f, 50.0),
                                   offset_candidate("c", -6.0f, 25.0)};
    OracleScorer oracle_scorer(c);
    for (const auto& s : data.test) {
      const RouteResult r = route_image(s.lr, c, oracle_scorer, 0.0, plan, 2, &s.hr);
      // single candidates restored on the same tiling
      double best = INFINITY;
      for (const auto& cand : c) {
        const std::vector<Candidate> one{cand};
        FixedScorer fixed({1.0}, 0.0);
        best = std::min(best, mse(route_image(s.lr, one, fixed, 0.0, plan, 2).output, s.hr));
      }
      CHECK(mse(r.output, s.hr) <= best + 1e-9);
    }
  }
  SUBCASE("report consistency and csv") {
    const std::vector<Candidate> c{offset_candidate("a", 0.0f, 100.0), bicubic_candidate(2)};
    FixedScorer scorer({1.0, 1.5}, 3.0);
    const auto& s = data.test.front();
    const RouteResult r = route_image(s.lr, c, scorer, 0.4, plan, 2, &s.hr);
    double sum = 0.0;
    for (const auto& ch : r.choices) sum += ch.patch_macs;
    CHECK(r.total_macs() == sum + 2 * 3.0 * 64 * static_cast<double>(r.choices.size()) / 2);
    std::ostringstream os;
    write_route_report(os, r);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "patch_row,patch_col,chosen_index,estimated_mse,patch_macs");
    std::getline(in, line);
    CHECK(line.find(";") != std::string::npos);
    std::string last;
    while (std::getline(in, line)) last = line;
    CHECK(last.rfind("summary,total_macs=", 0) == 0);
  }
}

TEST_CASE("beta sweep agrees with routing image by image") {
  SynthSpec ss;
  ss.train_count = 1;
  ss.test_count = 2;
  ss.test_image_size = 32;
  const PatchDataset data = synth_dataset(ss);
  const std::vector<Candidate> c{offset_candidate("a", 0.0f, 100.0), offset_candidate("b", 4.0f, 50.0),
                                 bicubic_candidate(2)};
  OracleScorer scorer(c);
  const PatchPlan plan{8, 6};
  const auto rows = beta_sweep(data.test, c, scorer, {0.0, 0.5, 2.0}, plan, 2);
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) {
    double macs = 0.0, p = 0.0;
    for (const auto& s : data.test) {
      const RouteResult r = route_image(s.lr, c, scorer, row.beta, plan, 2, &s.hr);
      macs += r.total_macs();
      p += *r.psnr;
    }
    CHECK(row.avg_macs == doctest::Approx(macs / 2));
    CHECK(row.avg_psnr == doctest::Approx(p / 2));
  }
  CHECK(rows[1].avg_macs <= rows[0].avg_macs);
  CHECK(rows[2].avg_macs <= rows[1].avg_macs);
}

TEST_CASE("candidates sort by cost") {
  std::vector<Candidate> c{offset_candidate("cheap", 0, 1.0), offset_candidate("big", 0, 9.0),
                           offset_candidate("mid", 0, 5.0)};
  std::vector<std::size_t> order;
  CHECK(sort_candidates(c, &order));
  CHECK(c[0].name == "big");
  CHECK(c[2].name == "cheap");
  CHECK(order == std::vector<std::size_t>{1, 2, 0});
  CHECK_FALSE(sort_candidates(c));
  CHECK(bicubic_candidate(2).macs(10, 10) == 0.0);
}

TEST_CASE("model candidate cost is linear in patch area") {
  ModelSpec s;
  s.n_blocks = 1;
  s.channels = 8;
  s.M = 4;
  const SrModel m = SrModel::build(s, 0);
  const Candidate c = model_candidate("m", m);
  CHECK(c.macs(16, 16) == m.macs(16, 16).total());
  CHECK(c.macs(7, 5) == m.macs(7, 5).total());
  Rng rng(54);
  Image lr = random_image(rng, 3, 8, 8);
  const Image out = c.restore(lr);
  CHECK(out.height == 16);
  for (float v : out.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 255.0f);
  }
}

TEST_CASE("untrained estimators are finite and non-negative") {
  Rng rng(55);
  const MseEstimator e = MseEstimator::build(EstimatorSpec{}, 3);
  for (int t = 0; t < 20; ++t) {
    const double v = e.predict(random_image(rng, 3, 16, 16));
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }
  // conv1 3->16 full res, conv2/conv3 stride 2, conv4 16->1 at quarter res
  CHECK(e.macs(16, 16) == 16 * 3 * 9 * 256 + 16 * 16 * 9 * 64 + 16 * 16 * 9 * 16 + 16 * 9 * 16);
}

TEST_CASE("estimator of a perfect restorer regresses toward zero") {
  SynthSpec ss;
  ss.train_count = 48;
  ss.patch_size = 16;
  const PatchDataset data = synth_dataset(ss);
  // identity restorer on noiseless scale-1 pairs has zero error
  std::vector<Sample> same;
  for (const auto& s : data.train) same.push_back(Sample{s.lr, s.lr});
  Candidate identity;
  identity.name = "identity";
  identity.restore = [](const Image& x) { return x; };
  EstimatorTrainConfig cfg;
  cfg.epochs = 30;
  const auto est = train_estimators({identity}, same, EstimatorSpec{}, cfg);
  double mean_pred = 0.0;
  for (const auto& s : same) mean_pred += est[0].predict(s.lr);
  mean_pred /= static_cast<double>(same.size());

  const auto bic = candidate_mse(bicubic_candidate(2), data.train);
  const double mu = std::accumulate(bic.begin(), bic.end(), 0.0) / static_cast<double>(bic.size());
  double var = 0.0;
  for (double v : bic) var += (v - mu) * (v - mu);
  var /= static_cast<double>(bic.size());
  CHECK(mean_pred <= 0.1 * std::sqrt(var));
}

TEST_CASE("identical candidates get agreeing estimators") {
  SynthSpec ss;
  ss.train_count = 48;
  ss.patch_size = 16;
  const PatchDataset data = synth_dataset(ss);
  const Candidate b = bicubic_candidate(2);
  EstimatorTrainConfig cfg;
  cfg.epochs = 40;
  const auto est = train_estimators({b, b}, data.train, EstimatorSpec{}, cfg);
  const auto truth = candidate_mse(b, data.train);
  double disagree = 0.0, se = 0.0;
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    const double p0 = est[0].predict(data.train[i].lr), p1 = est[1].predict(data.train[i].lr);
    disagree += std::abs(p0 - p1);
    se += (p0 - truth[i]) * (p0 - truth[i]);
  }
  disagree /= static_cast<double>(data.train.size());
  const double rmse = std::sqrt(se / static_cast<double>(data.train.size()));
  CHECK(disagree < rmse);
}

TEST_CASE("estimator training is deterministic") {
  SynthSpec ss;
  ss.train_count = 16;
  ss.patch_size = 16;
  const PatchDataset data = synth_dataset(ss);
  EstimatorTrainConfig cfg;
  cfg.epochs = 3;
  const auto a = train_estimators({bicubic_candidate(2)}, data.train, EstimatorSpec{}, cfg);
  const auto b = train_estimators({bicubic_candidate(2)}, data.train, EstimatorSpec{}, cfg);
  CHECK(a[0].layers()[0].weight.data == b[0].layers()[0].weight.data);
  CHECK(a[0].target_scale() == b[0].target_scale());
}
