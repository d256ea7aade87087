// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nmsls/autodiff.hpp"
#include "nmsls/dataset.hpp"
#include "nmsls/image.hpp"
#include "nmsls/model.hpp"

namespace nmsls::adaptive {

// A restorer with its cost. Model MACs scale linearly with the LR patch
// area, so the cost is kept per LR pixel.
struct Candidate {
  std::string name;
  std::function<Image(const Image&)> restore;  // LR patch -> HR patch in [0,255]
  double macs_per_pixel = 0.0;

  double macs(std::int64_t h, std::int64_t w) const { return macs_per_pixel * static_cast<double>(h * w); }
};

Candidate model_candidate(std::string name, const SrModel& model, ExecMode mode = ExecMode::kDense);
Candidate bicubic_candidate(int scale);

// Stable sort by cost, most expensive first. Returns true when the input was
// reordered; `order` receives the original index of each sorted entry.
bool sort_candidates(std::vector<Candidate>& candidates, std::vector<std::size_t>* order = nullptr);

// Cost/accuracy selector. `costs` are sorted descending; returns the 0-based
// index of the argmax, preferring the cheaper candidate on ties. When the
// cheapest candidate's estimate is at most 1e-12 every accuracy term is 0.
std::size_t select_model(const std::vector<double>& costs, const std::vector<double>& estimates, double beta);
std::vector<double> selection_scores(const std::vector<double>& costs, const std::vector<double>& estimates,
                                     double beta);

struct EstimatorSpec {
  int channels = 16;
};

struct EstimatorTrainConfig {
  int epochs = 60;
  int batch_size = 16;
  float lr = 1e-3f;
  std::uint64_t seed = 0;
};

// LR patch -> estimated MSE (0..255 scale). Four 3x3 convs (the middle two
// with stride 2), global average pool, softplus, times target_scale.
class MseEstimator {
 public:
  static MseEstimator build(const EstimatorSpec& spec, std::uint64_t seed);
  static MseEstimator from_layers(std::vector<ConvLayer> layers, double target_scale);

  // Normalized prediction (before target_scale), shape [B,1].
  ad::Var forward(ad::Tape& tape, const Tensor& lr) const;
  std::vector<double> predict(const Tensor& lr) const;
  double predict(const Image& lr) const;
  double macs(std::int64_t h, std::int64_t w) const;

  // Regresses the per-patch targets with Adam on mean squared error.
  // Returns the final-epoch RMSE in target units.
  double fit(const std::vector<Image>& lr, const std::vector<double>& targets, const EstimatorTrainConfig& cfg);

  std::vector<ConvLayer>& layers() { return layers_; }
  const std::vector<ConvLayer>& layers() const { return layers_; }
  double target_scale() const { return target_scale_; }

 private:
  std::vector<ConvLayer> layers_;
  double target_scale_ = 1.0;
};

// True MSE of a candidate on each training sample (output clamped).
std::vector<double> candidate_mse(const Candidate& candidate, const std::vector<Sample>& samples);

std::vector<MseEstimator> train_estimators(const std::vector<Candidate>& candidates,
                                           const std::vector<Sample>& samples, const EstimatorSpec& spec,
                                           const EstimatorTrainConfig& cfg, std::ostream* log = nullptr);

// Per-patch MSE estimates for every candidate.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::vector<double> estimate(const Image& lr_patch, const Image* hr_patch) const = 0;
  // MACs spent by all estimators on one patch.
  virtual double overhead_macs(std::int64_t h, std::int64_t w) const = 0;
};

class EstimatorScorer : public Scorer {
 public:
  explicit EstimatorScorer(std::vector<MseEstimator> estimators) : estimators_(std::move(estimators)) {}
  std::vector<double> estimate(const Image& lr_patch, const Image* hr_patch) const override;
  double overhead_macs(std::int64_t h, std::int64_t w) const override;

 private:
  std::vector<MseEstimator> estimators_;
};

// Uses the true MSE against the reference patch; costs nothing.
class OracleScorer : public Scorer {
 public:
  explicit OracleScorer(const std::vector<Candidate>& candidates) : candidates_(candidates) {}
  std::vector<double> estimate(const Image& lr_patch, const Image* hr_patch) const override;
  double overhead_macs(std::int64_t, std::int64_t) const override { return 0.0; }

 private:
  const std::vector<Candidate>& candidates_;
};

struct PatchPlan {
  std::int64_t patch_size = 16;
  std::int64_t stride = 14;

  void validate() const;
};

// Start offsets 0, stride, 2*stride, ... with the last clamped to length - patch.
std::vector<std::int64_t> tile_positions(std::int64_t length, std::int64_t patch, std::int64_t stride);

struct Tile {
  std::int64_t row = 0, col = 0;  // top-left in the tiled image
  Image patch;
};

std::vector<Tile> tile(const Image& image, const PatchPlan& plan);
// Reassembles tiles whose contents were scaled by `scale`; each tile keeps
// the rows/columns up to the next tile's start.
Image stitch(const std::vector<Tile>& tiles, std::int64_t height, std::int64_t width, int scale = 1);

struct PatchChoice {
  std::int64_t row = 0, col = 0;
  std::size_t index = 0;
  std::vector<double> estimates;
  double patch_macs = 0.0;  // chosen candidate only
};

struct RouteResult {
  Image output;
  std::vector<PatchChoice> choices;
  double candidate_macs = 0.0;
  double overhead_macs = 0.0;
  std::optional<double> psnr;

  double total_macs() const { return candidate_macs + overhead_macs; }
};

RouteResult route_image(const Image& lr, const std::vector<Candidate>& candidates, const Scorer& scorer,
                        double beta, const PatchPlan& plan, int scale, const Image* hr = nullptr);

struct SweepRow {
  double beta = 0.0;
  double avg_macs = 0.0;
  double avg_psnr = 0.0;
};

// Routes every sample at each beta, reusing estimates and restored patches.
std::vector<SweepRow> beta_sweep(const std::vector<Sample>& samples, const std::vector<Candidate>& candidates,
                                 const Scorer& scorer, const std::vector<double>& betas, const PatchPlan& plan,
                                 int scale);

void write_route_report(std::ostream& os, const RouteResult& result);
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

}  // namespace nmsls::adaptive
