// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "nmsls/dataset.hpp"
#include "nmsls/model.hpp"
#include "nmsls/sls_search.hpp"

namespace nmsls {

// Epoch budget shared by every compared method: pretrain_epochs of dense
// training followed by prune_epochs split between search and fine-tuning.
// The learning rate halves at 50% and 75% of each of the two stages.
struct TrainProtocol {
  int pretrain_epochs = 50;
  int prune_epochs = 50;
  int batch_size = 8;
  float lr = 1e-4f;
  std::optional<float> gate_lr;  // learning rate for the gates; defaults to lr
  std::uint64_t seed = 0;

  float lr_at(int epoch, int stage_epochs) const;
};

struct SearchConfig {
  double target_fraction = 0.25;
  float tau = 0.5f;
  double alpha = 1.1;
  double T = 0.1;
  int K = 10;
  double lambda_reg = 1e-10;
  bool anneal = true;
  sls::RegroupSchedule regroup;
  std::optional<int> search_cap;  // epochs; defaults to TrainProtocol::prune_epochs
};

enum class Phase { kPretrain, kPrune, kFinetune };

struct EpochLog {
  int epoch = 0;
  double task_loss = 0.0;
  double reg_loss = 0.0;
  double lambda_reg = 0.0;
  double pruned_fraction = 1.0;
  std::vector<int> effective_n;
};

struct PhaseResult {
  bool ok = true;  // false when the search hit its cap before the budget
  bool frozen = false;
  int epochs_run = 0;
  std::int64_t steps = 0;
  double pruned_fraction = 1.0;
  double lambda_reg = 0.0;
  std::vector<EpochLog> log;
};

struct TrainHooks {
  // Called after every optimizer step (and projection) with the step count.
  std::function<void(const SrModel&, std::int64_t)> on_step;
  sls::MetricsCsv* csv = nullptr;
  std::ostream* log = nullptr;
};

// Dense L1 training.
PhaseResult pretrain(SrModel& model, const PatchDataset& data, const TrainProtocol& protocol,
                     const TrainHooks& hooks = {});

// Budgeted search: task + lambda * sum(C_pruned), lambda annealing every K
// epochs, regrouping on schedule. Stops at the first epoch boundary where the
// prunable-MAC fraction is at or below the target; masks are then baked and
// the gates frozen.
PhaseResult prune_search(SrModel& model, const PatchDataset& data, const TrainProtocol& protocol,
                         const SearchConfig& search, const TrainHooks& hooks = {});

// Task-loss training with fixed masks over epochs [first_epoch, prune_epochs)
// of the prune stage.
PhaseResult finetune(SrModel& model, const PatchDataset& data, const TrainProtocol& protocol, int first_epoch,
                     const TrainHooks& hooks = {});

PhaseResult train_phase(SrModel& model, const PatchDataset& data, const TrainProtocol& protocol, Phase phase,
                        const SearchConfig& search = {}, int first_epoch = 0, const TrainHooks& hooks = {});

// Uniform top-N-per-group pruning of every prunable layer with the mask fixed.
void apply_oneshot(SrModel& model, int N, float tau = 0.5f);

struct EvalResult {
  double psnr = 0.0;        // mean over images
  double macs = 0.0;        // mean model MACs per image
  double bicubic_psnr = 0.0;
};

// Output clamped to [0,255] and compared on full RGB.
EvalResult evaluate(const SrModel& model, const std::vector<Sample>& samples, ExecMode mode = ExecMode::kDense);
double bicubic_psnr(const std::vector<Sample>& samples, int scale);
Image restore(const SrModel& model, const Image& lr, ExecMode mode = ExecMode::kDense);

}  // namespace nmsls
