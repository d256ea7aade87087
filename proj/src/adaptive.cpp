// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsls/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "nmsls/optim.hpp"
#include "nmsls/rng.hpp"
#include "nmsls/tensor_ops.hpp"

namespace nmsls::adaptive {
namespace {

constexpr double kEps = 1e-12;

ConvLayer estimator_conv(std::string name, std::int64_t c_out, std::int64_t c_in, int stride, Rng& rng) {
  ConvLayer l;
  l.name = std::move(name);
  l.weight = Tensor(Shape{c_out, c_in, 3, 3});
  l.bias = Tensor(Shape{c_out});
  const float bound = 1.0f / std::sqrt(static_cast<float>(c_in * 9));
  for (auto& v : l.weight.data) v = rng.uniform(-bound, bound);
  l.weight.requires_grad = true;
  l.bias.requires_grad = true;
  l.stride = stride;
  l.padding = 1;
  return l;
}

Image clamp_image(Image img) {
  for (auto& v : img.data) v = std::clamp(v, 0.0f, 255.0f);
  return img;
}

}  // namespace

Candidate model_candidate(std::string name, const SrModel& model, ExecMode mode) {
  auto frozen = std::make_shared<const FrozenModel>(model, mode);
  Candidate c;
  c.name = std::move(name);
  c.macs_per_pixel = model.macs(1, 1).total();
  c.restore = [frozen](const Image& lr) { return clamp_image(from_tensor(frozen->run(to_tensor(lr)))); };
  return c;
}

Candidate bicubic_candidate(int scale) {
  Candidate c;
  c.name = "bicubic";
  c.macs_per_pixel = 0.0;
  c.restore = [scale](const Image& lr) {
    return clamp_image(bicubic_resample(lr, scale, ResampleDirection::kUp));
  };
  return c;
}

bool sort_candidates(std::vector<Candidate>& candidates, std::vector<std::size_t>* order) {
  std::vector<std::size_t> idx(candidates.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return candidates[a].macs_per_pixel > candidates[b].macs_per_pixel;
  });
  const bool moved = !std::is_sorted(idx.begin(), idx.end());
  std::vector<Candidate> sorted;
  for (auto i : idx) sorted.push_back(candidates[i]);
  candidates = std::move(sorted);
  if (order) *order = idx;
  return moved;
}

std::vector<double> selection_scores(const std::vector<double>& costs, const std::vector<double>& estimates,
                                     double beta) {
  require(costs.size() >= 1 && costs.size() == estimates.size(), "select_model: costs/estimates size mismatch");
  require(beta >= 0.0, "select_model: beta must be >= 0");
  const double c1 = costs.front();
  const double fn = estimates.back();
  std::vector<double> s(costs.size());
  for (std::size_t i = 0; i < costs.size(); ++i) {
    const double cost_term = c1 > 0.0 ? (c1 - costs[i]) / c1 * beta : 0.0;
    const double acc_term = fn > kEps ? (fn - estimates[i]) / fn : 0.0;
    s[i] = cost_term + acc_term;
  }
  return s;
}

std::size_t select_model(const std::vector<double>& costs, const std::vector<double>& estimates, double beta) {
  const auto s = selection_scores(costs, estimates, beta);
  std::size_t best = 0;
  for (std::size_t i = 1; i < s.size(); ++i)
    if (s[i] >= s[best]) best = i;
  return best;
}

// --- estimator -------------------------------------------------------------

MseEstimator MseEstimator::build(const EstimatorSpec& spec, std::uint64_t seed) {
  require(spec.channels >= 1, "estimator: channels must be >= 1");
  Rng rng(seed);
  MseEstimator e;
  const std::int64_t c = spec.channels;
  e.layers_.push_back(estimator_conv("conv1", c, 3, 1, rng));
  e.layers_.push_back(estimator_conv("conv2", c, c, 2, rng));
  e.layers_.push_back(estimator_conv("conv3", c, c, 2, rng));
  e.layers_.push_back(estimator_conv("conv4", 1, c, 1, rng));
  return e;
}

MseEstimator MseEstimator::from_layers(std::vector<ConvLayer> layers, double target_scale) {
  require(layers.size() == 4, "estimator: expected 4 conv layers");
  require(target_scale > 0.0, "estimator: target scale must be positive");
  MseEstimator e;
  e.layers_ = std::move(layers);
  e.target_scale_ = target_scale;
  return e;
}

ad::Var MseEstimator::forward(ad::Tape& tape, const Tensor& lr) const {
  ad::Var x = tape.constant(lr);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& l = const_cast<ConvLayer&>(layers_[i]);
    x = ad::bias_add(ad::conv2d(x, tape.param(l.weight), l.stride, l.padding), tape.param(l.bias));
    if (i + 1 < layers_.size()) x = ad::relu(x);
  }
  return ad::softplus(ad::global_avg_pool(x));
}

std::vector<double> MseEstimator::predict(const Tensor& lr) const {
  Tensor x = lr;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    x = ops::conv2d(x, l.weight, l.stride, l.padding);
    ops::add_channel_bias(x, l.bias);
    if (i + 1 < layers_.size()) x = ops::relu(x);
  }
  const std::int64_t B = x.dim(0), plane = x.dim(2) * x.dim(3);
  std::vector<double> out(static_cast<std::size_t>(B));
  for (std::int64_t b = 0; b < B; ++b) {
    double s = 0.0;
    for (std::int64_t p = 0; p < plane; ++p) s += x.data[static_cast<std::size_t>(b * plane + p)];
    const float z = static_cast<float>(s / static_cast<double>(plane));
    const float sp = z > 20.0f ? z : std::log1p(std::exp(z));
    out[static_cast<std::size_t>(b)] = static_cast<double>(sp) * target_scale_;
  }
  return out;
}

double MseEstimator::predict(const Image& lr) const { return predict(to_tensor(lr)).front(); }

double MseEstimator::macs(std::int64_t h, std::int64_t w) const {
  double total = 0.0;
  for (const auto& l : layers_) {
    const std::int64_t oh = (h + 2 * l.padding - 3) / l.stride + 1;
    const std::int64_t ow = (w + 2 * l.padding - 3) / l.stride + 1;
    total += static_cast<double>(numel(l.weight.shape) * oh * ow);
    h = oh;
    w = ow;
  }
  return total;
}

double MseEstimator::fit(const std::vector<Image>& lr, const std::vector<double>& targets,
                         const EstimatorTrainConfig& cfg) {
  require(!lr.empty() && lr.size() == targets.size(), "estimator: need matching non-empty inputs and targets");
  for (const auto& im : lr)
    require(im.same_shape(lr.front()), "estimator: training patches must share one shape");
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
  target_scale_ = mean > kEps ? mean : 1.0;

  std::vector<Tensor*> params;
  for (auto& l : layers_) {
    params.push_back(&l.weight);
    params.push_back(&l.bias);
  }
  Optimizer opt(OptimizerKind::kAdam, params, cfg.lr);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(lr.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  for (int e = 0; e < cfg.epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t i = 0; i < order.size(); i += bs) {
      std::vector<const Image*> batch;
      const std::size_t end = std::min(order.size(), i + bs);
      Tensor target(Shape{static_cast<std::int64_t>(end - i), 1});
      for (std::size_t j = i; j < end; ++j) {
        batch.push_back(&lr[order[j]]);
        target.data[j - i] = static_cast<float>(targets[order[j]] / target_scale_);
      }
      ad::Tape tape;
      ad::Var loss = ad::mse_loss(forward(tape, to_tensor(batch)), tape.constant(target));
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
    }
  }
  double se = 0.0;
  for (std::size_t i = 0; i < lr.size(); ++i) {
    const double d = predict(lr[i]) - targets[i];
    se += d * d;
  }
  return std::sqrt(se / static_cast<double>(lr.size()));
}

std::vector<double> candidate_mse(const Candidate& candidate, const std::vector<Sample>& samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(mse(candidate.restore(s.lr), s.hr));
  return out;
}

std::vector<MseEstimator> train_estimators(const std::vector<Candidate>& candidates,
                                           const std::vector<Sample>& samples, const EstimatorSpec& spec,
                                           const EstimatorTrainConfig& cfg, std::ostream* log) {
  std::vector<Image> lr;
  for (const auto& s : samples) lr.push_back(s.lr);
  std::vector<MseEstimator> out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto est = MseEstimator::build(spec, cfg.seed + 1000 * (i + 1));
    const double rmse = est.fit(lr, candidate_mse(candidates[i], samples), cfg);
    if (log) *log << "estimator " << i << " (" << candidates[i].name << "): rmse " << rmse << "\n";
    out.push_back(std::move(est));
  }
  return out;
}

std::vector<double> EstimatorScorer::estimate(const Image& lr_patch, const Image*) const {
  std::vector<double> out;
  const Tensor x = to_tensor(lr_patch);
  for (const auto& e : estimators_) out.push_back(e.predict(x).front());
  return out;
}

double EstimatorScorer::overhead_macs(std::int64_t h, std::int64_t w) const {
  double total = 0.0;
  for (const auto& e : estimators_) total += e.macs(h, w);
  return total;
}

std::vector<double> OracleScorer::estimate(const Image& lr_patch, const Image* hr_patch) const {
  require(hr_patch != nullptr, "oracle scorer: needs the reference patch");
  std::vector<double> out;
  for (const auto& c : candidates_) out.push_back(mse(c.restore(lr_patch), *hr_patch));
  return out;
}

// --- tiling ------------------------------------------------------------------

void PatchPlan::validate() const {
  require(patch_size >= 1, "patch plan: patch size must be >= 1");
  require(stride >= 1 && stride <= patch_size, "patch plan: need 1 <= stride <= patch size");
}

std::vector<std::int64_t> tile_positions(std::int64_t length, std::int64_t patch, std::int64_t stride) {
  require(length >= 1, "tile: empty image");
  if (patch >= length) return {0};
  std::vector<std::int64_t> pos;
  for (std::int64_t p = 0;; p += stride) {
    if (p + patch >= length) {
      pos.push_back(length - patch);
      break;
    }
    pos.push_back(p);
  }
  return pos;
}

std::vector<Tile> tile(const Image& image, const PatchPlan& plan) {
  plan.validate();
  const std::int64_t ph = std::min<std::int64_t>(plan.patch_size, image.height);
  const std::int64_t pw = std::min<std::int64_t>(plan.patch_size, image.width);
  std::vector<Tile> out;
  for (auto r : tile_positions(image.height, plan.patch_size, plan.stride))
    for (auto c : tile_positions(image.width, plan.patch_size, plan.stride))
      out.push_back(Tile{r, c, image.crop(r, c, ph, pw)});
  return out;
}

Image stitch(const std::vector<Tile>& tiles, std::int64_t height, std::int64_t width, int scale) {
  require(!tiles.empty(), "stitch: no tiles");
  std::vector<std::int64_t> rows, cols;
  for (const auto& t : tiles) {
    rows.push_back(t.row * scale);
    cols.push_back(t.col * scale);
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  auto next = [](const std::vector<std::int64_t>& v, std::int64_t p, std::int64_t end) {
    auto it = std::upper_bound(v.begin(), v.end(), p);
    return it == v.end() ? end : *it;
  };
  const int C = tiles.front().patch.channels;
  Image out(C, height, width);
  for (const auto& t : tiles) {
    const std::int64_t r0 = t.row * scale, c0 = t.col * scale;
    const std::int64_t r1 = next(rows, r0, height), c1 = next(cols, c0, width);
    require(r1 - r0 <= t.patch.height && c1 - c0 <= t.patch.width && t.patch.channels == C,
            "stitch: tile does not cover its region");
    for (int ch = 0; ch < C; ++ch)
      for (std::int64_t y = r0; y < r1; ++y)
        for (std::int64_t x = c0; x < c1; ++x) out.at(ch, y, x) = t.patch.at(ch, y - r0, x - c0);
  }
  return out;
}

// --- routing -----------------------------------------------------------------

namespace {

struct PatchEstimates {
  std::vector<Tile> tiles;
  std::vector<Image> hr;  // empty without reference
  std::vector<std::vector<double>> estimates;
};

PatchEstimates estimate_patches(const Image& lr, const Scorer& scorer, const PatchPlan& plan, int scale,
                                const Image* hr) {
  PatchEstimates pe;
  pe.tiles = tile(lr, plan);
  for (const auto& t : pe.tiles) {
    const Image* ref = nullptr;
    if (hr) {
      pe.hr.push_back(hr->crop(t.row * scale, t.col * scale, t.patch.height * scale, t.patch.width * scale));
      ref = &pe.hr.back();
    }
    pe.estimates.push_back(scorer.estimate(t.patch, ref));
  }
  return pe;
}

std::vector<double> candidate_costs(const std::vector<Candidate>& candidates, std::int64_t h, std::int64_t w) {
  std::vector<double> c;
  for (const auto& cand : candidates) c.push_back(cand.macs(h, w));
  return c;
}

}  // namespace

RouteResult route_image(const Image& lr, const std::vector<Candidate>& candidates, const Scorer& scorer,
                        double beta, const PatchPlan& plan, int scale, const Image* hr) {
  require(!candidates.empty(), "route: no candidates");
  if (hr)
    require(hr->height == lr.height * scale && hr->width == lr.width * scale && hr->channels == lr.channels,
            "route: reference does not match the LR image at scale " + std::to_string(scale));
  const PatchEstimates pe = estimate_patches(lr, scorer, plan, scale, hr);
  RouteResult r;
  std::vector<Tile> restored;
  for (std::size_t i = 0; i < pe.tiles.size(); ++i) {
    const Tile& t = pe.tiles[i];
    require(pe.estimates[i].size() == candidates.size(), "route: scorer returned the wrong number of estimates");
    const auto costs = candidate_costs(candidates, t.patch.height, t.patch.width);
    PatchChoice pc{t.row, t.col, select_model(costs, pe.estimates[i], beta), pe.estimates[i], 0.0};
    pc.patch_macs = costs[pc.index];
    r.candidate_macs += pc.patch_macs;
    r.overhead_macs += scorer.overhead_macs(t.patch.height, t.patch.width);
    restored.push_back(Tile{t.row, t.col, candidates[pc.index].restore(t.patch)});
    r.choices.push_back(std::move(pc));
  }
  r.output = stitch(restored, lr.height * scale, lr.width * scale, scale);
  if (hr) r.psnr = psnr(r.output, *hr);
  return r;
}

std::vector<SweepRow> beta_sweep(const std::vector<Sample>& samples, const std::vector<Candidate>& candidates,
                                 const Scorer& scorer, const std::vector<double>& betas, const PatchPlan& plan,
                                 int scale) {
  require(!samples.empty(), "beta sweep: no samples");
  std::vector<SweepRow> rows;
  for (double b : betas) rows.push_back(SweepRow{b, 0.0, 0.0});
  for (const auto& s : samples) {
    const PatchEstimates pe = estimate_patches(s.lr, scorer, plan, scale, &s.hr);
    std::map<std::pair<std::size_t, std::size_t>, Image> cache;
    for (auto& row : rows) {
      std::vector<Tile> restored;
      double macs = 0.0;
      for (std::size_t i = 0; i < pe.tiles.size(); ++i) {
        const Tile& t = pe.tiles[i];
        const auto costs = candidate_costs(candidates, t.patch.height, t.patch.width);
        const std::size_t idx = select_model(costs, pe.estimates[i], row.beta);
        macs += costs[idx] + scorer.overhead_macs(t.patch.height, t.patch.width);
        auto key = std::make_pair(i, idx);
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(key, candidates[idx].restore(t.patch)).first;
        restored.push_back(Tile{t.row, t.col, it->second});
      }
      const Image out = stitch(restored, s.lr.height * scale, s.lr.width * scale, scale);
      row.avg_macs += macs;
      row.avg_psnr += psnr(out, s.hr);
    }
  }
  for (auto& row : rows) {
    row.avg_macs /= static_cast<double>(samples.size());
    row.avg_psnr /= static_cast<double>(samples.size());
  }
  return rows;
}

void write_route_report(std::ostream& os, const RouteResult& result) {
  os << "patch_row,patch_col,chosen_index,estimated_mse,patch_macs\n";
  for (const auto& c : result.choices) {
    os << c.row << ',' << c.col << ',' << c.index << ',';
    for (std::size_t i = 0; i < c.estimates.size(); ++i) os << (i ? ";" : "") << c.estimates[i];
    os << ',' << c.patch_macs << '\n';
  }
  os << "summary,total_macs=" << result.total_macs() << ",overhead_macs=" << result.overhead_macs;
  if (result.psnr) os << ",psnr=" << *result.psnr;
  os << '\n';
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "beta,avg_macs,avg_psnr\n";
  for (const auto& r : rows) os << r.beta << ',' << r.avg_macs << ',' << r.avg_psnr << '\n';
}

}  // namespace nmsls::adaptive
