// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsls/train.hpp"

#include <algorithm>
#include <numeric>

#include "nmsls/optim.hpp"

namespace nmsls {
namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch, std::uint64_t seed, int stage,
                                                    int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix(seed ^ mix(static_cast<std::uint64_t>(stage) << 32 | static_cast<std::uint32_t>(epoch))));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch))
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + static_cast<std::size_t>(batch))));
  return out;
}

struct Batch {
  Tensor lr, hr;
};

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx) {
  std::vector<const Image*> lr, hr;
  for (auto i : idx) {
    lr.push_back(&samples[i].lr);
    hr.push_back(&samples[i].hr);
  }
  return {to_tensor(lr), to_tensor(hr)};
}

std::vector<int> effective_ns(const SrModel& model) {
  std::vector<int> out;
  for (const auto& l : model.layers())
    if (l.prunable) out.push_back(l.sparsity ? l.effective_n() : model.spec().M);
  return out;
}

std::pair<std::int64_t, std::int64_t> patch_dims(const PatchDataset& data) {
  require(!data.train.empty(), "training requires a non-empty train split");
  return {data.train.front().lr.height, data.train.front().lr.width};
}

// Fixed-mask task-loss training over [first, last) of a stage.
PhaseResult run_task_epochs(SrModel& model, const PatchDataset& data, const TrainProtocol& protocol, int stage,
                            int first, int last, int stage_epochs, const TrainHooks& hooks) {
  PhaseResult r;
  Optimizer opt(OptimizerKind::kAdam, model.weight_params(), protocol.lr);
  const auto [h, w] = patch_dims(data);
  for (int e = first; e < last; ++e) {
    opt.set_lr(protocol.lr_at(e, stage_epochs));
    double loss_sum = 0.0;
    const auto batches = epoch_batches(data.train.size(), protocol.batch_size, protocol.seed, stage, e);
    for (const auto& idx : batches) {
      const Batch b = make_batch(data.train, idx);
      ad::Tape tape;
      ad::Var out = model.forward(tape, b.lr);
      ad::Var loss = ad::l1_loss(out, tape.constant(b.hr));
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      ++r.steps;
      loss_sum += loss.value().item();
      if (hooks.on_step) hooks.on_step(model, r.steps);
    }
    const MacsReport macs = model.macs(h, w);
    EpochLog entry{e, loss_sum / static_cast<double>(batches.size()), macs.prunable_pruned, 0.0,
                   macs.pruned_fraction(), effective_ns(model)};
    if (hooks.csv)
      hooks.csv->row(e, entry.task_loss, entry.reg_loss, entry.lambda_reg, entry.pruned_fraction, entry.effective_n);
    r.log.push_back(std::move(entry));
    ++r.epochs_run;
  }
  r.pruned_fraction = model.macs(h, w).pruned_fraction();
  r.frozen = true;
  return r;
}

}  // namespace

float TrainProtocol::lr_at(int epoch, int stage_epochs) const {
  float v = lr;
  if (2 * epoch >= stage_epochs) v *= 0.5f;
  if (4 * epoch >= 3 * stage_epochs) v *= 0.5f;
  return v;
}

PhaseResult pretrain(SrModel& model, const PatchDataset& data, const TrainProtocol& protocol,
                     const TrainHooks& hooks) {
  return run_task_epochs(model, data, protocol, 0, 0, protocol.pretrain_epochs, protocol.pretrain_epochs, hooks);
}

PhaseResult prune_search(SrModel& model, const PatchDataset& data, const TrainProtocol& protocol,
                         const SearchConfig& search, const TrainHooks& hooks) {
  PhaseResult r;
  const auto [h, w] = patch_dims(data);
  const int cap = std::min(search.search_cap.value_or(protocol.prune_epochs), protocol.prune_epochs);
  model.attach_search(search.tau);

  sls::AnnealState anneal{search.lambda_reg, search.alpha, search.T, search.K, {}};
  sls::BudgetSpec budget{search.target_fraction, false};
  const MacsReport start = model.macs(h, w);
  double fraction = start.pruned_fraction();
  anneal.history.push_back(fraction);
  // Without prunable layers the budget is met vacuously.
  if (start.prunable_original == 0.0 || sls::check_budget_and_freeze(fraction, budget)) {
    model.bake_masks();
    r.frozen = true;
    r.pruned_fraction = fraction;
    r.lambda_reg = anneal.lambda_reg;
    if (hooks.log)
      *hooks.log << (start.prunable_original == 0.0 ? "warning: no prunable layers; budget met vacuously\n"
                                                     : "budget met before search; gates frozen\n");
    return r;
  }

  Optimizer opt_w(OptimizerKind::kAdam, model.weight_params(), protocol.lr);
  const float gate_lr = protocol.gate_lr.value_or(protocol.lr);
  Optimizer opt_k(OptimizerKind::kAdam, model.gate_params(), gate_lr);
  const auto names = model.prunable_names();

  for (int e = 0; e < cap; ++e) {
    const float scale = protocol.lr_at(e, protocol.prune_epochs) / protocol.lr;
    opt_w.set_lr(protocol.lr * scale);
    opt_k.set_lr(gate_lr * scale);
    double task_sum = 0.0, reg_sum = 0.0;
    const auto batches = epoch_batches(data.train.size(), protocol.batch_size, protocol.seed, 1, e);
    for (const auto& idx : batches) {
      const Batch b = make_batch(data.train, idx);
      ad::Tape tape;
      std::vector<sls::LayerMaskTerm> terms;
      ad::Var out = model.forward(tape, b.lr, &terms);
      ad::Var task = ad::l1_loss(out, tape.constant(b.hr));
      ad::Var reg = sls::reg_loss(tape, terms);
      ad::Var loss = sls::total_loss(task, reg, anneal.lambda_reg);
      opt_w.zero_grad();
      opt_k.zero_grad();
      tape.backward(loss);
      opt_w.step();
      opt_k.step();
      for (Tensor* k : opt_k.params()) sls::project_k(*k);
      ++r.steps;
      for (auto& l : model.layers())
        if (l.sparsity) sls::regroup(l.weight, l.sparsity->decomp, search.regroup, r.steps);
      task_sum += task.value().item();
      reg_sum += reg.value().item();
      if (hooks.on_step) hooks.on_step(model, r.steps);
    }
    ++r.epochs_run;
    fraction = model.macs(h, w).pruned_fraction();
    const double n = static_cast<double>(batches.size());
    EpochLog entry{e, task_sum / n, reg_sum / n, anneal.lambda_reg, fraction, effective_ns(model)};
    if (hooks.csv)
      hooks.csv->row(e, entry.task_loss, entry.reg_loss, entry.lambda_reg, entry.pruned_fraction, entry.effective_n);
    r.log.push_back(std::move(entry));

    if (sls::check_budget_and_freeze(fraction, budget)) {
      model.bake_masks();
      r.frozen = true;
      break;
    }
    if (search.anneal && (e + 1) % search.K == 0) sls::anneal_step(anneal, fraction);
  }
  r.pruned_fraction = fraction;
  r.lambda_reg = anneal.lambda_reg;
  r.ok = r.frozen;
  if (hooks.log) {
    if (r.frozen)
      *hooks.log << "budget reached after " << r.epochs_run << " epochs (fraction " << fraction << ")\n";
    else
      *hooks.log << "FAILED: budget not reached within " << cap << " epochs (fraction " << fraction << ")\n";
  }
  return r;
}

PhaseResult finetune(SrModel& model, const PatchDataset& data, const TrainProtocol& protocol, int first_epoch,
                     const TrainHooks& hooks) {
  require(first_epoch >= 0 && first_epoch <= protocol.prune_epochs, "finetune: first epoch outside the stage");
  for (const auto& l : model.layers())
    require(!l.sparsity || !l.sparsity->priority.k.requires_grad,
            "finetune: layer " + l.name + " still has trainable gates; run the search to freeze first");
  return run_task_epochs(model, data, protocol, 1, first_epoch, protocol.prune_epochs, protocol.prune_epochs, hooks);
}

PhaseResult train_phase(SrModel& model, const PatchDataset& data, const TrainProtocol& protocol, Phase phase,
                        const SearchConfig& search, int first_epoch, const TrainHooks& hooks) {
  switch (phase) {
    case Phase::kPretrain:
      return pretrain(model, data, protocol, hooks);
    case Phase::kPrune:
      return prune_search(model, data, protocol, search, hooks);
    case Phase::kFinetune:
      return finetune(model, data, protocol, first_epoch, hooks);
  }
  return {};
}

void apply_oneshot(SrModel& model, int N, float tau) {
  const int M = model.spec().M;
  require(N >= 1 && N <= M, "oneshot: need 1 <= N <= M");
  for (auto& l : model.layers()) {
    if (!l.prunable) continue;
    auto d = nm::decompose(l.weight, M);
    l.sparsity = sls::SparseLayerState{std::move(*d), sls::fixed_prefix(N, M, tau)};
  }
  model.bake_masks();
}

Image restore(const SrModel& model, const Image& lr, ExecMode mode) {
  Image out = from_tensor(model.infer(to_tensor(lr), mode));
  for (auto& v : out.data) v = std::clamp(v, 0.0f, 255.0f);
  return out;
}

EvalResult evaluate(const SrModel& model, const std::vector<Sample>& samples, ExecMode mode) {
  require(!samples.empty(), "evaluate: no samples");
  EvalResult r;
  const FrozenModel frozen(model, mode);
  for (const auto& s : samples) {
    require(s.lr.height * model.spec().scale == s.hr.height && s.lr.width * model.spec().scale == s.hr.width,
            "evaluate: dataset scale does not match the model scale " + std::to_string(model.spec().scale));
    Image out = from_tensor(frozen.run(to_tensor(s.lr)));
    for (auto& v : out.data) v = std::clamp(v, 0.0f, 255.0f);
    r.psnr += psnr(out, s.hr);
    r.macs += model.macs(s.lr.height, s.lr.width).total();
  }
  const double n = static_cast<double>(samples.size());
  r.psnr /= n;
  r.macs /= n;
  r.bicubic_psnr = bicubic_psnr(samples, model.spec().scale);
  return r;
}

double bicubic_psnr(const std::vector<Sample>& samples, int scale) {
  require(!samples.empty(), "bicubic_psnr: no samples");
  double total = 0.0;
  for (const auto& s : samples) {
    Image up = bicubic_resample(s.lr, scale, ResampleDirection::kUp);
    for (auto& v : up.data) v = std::clamp(v, 0.0f, 255.0f);
    total += psnr(up, s.hr);
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace nmsls
