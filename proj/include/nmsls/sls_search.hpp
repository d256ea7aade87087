// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nmsls/autodiff.hpp"
#include "nmsls/nm_sparse.hpp"
#include "nmsls/tensor.hpp"

// Differentiable layer-wise N:M sparsity search.
//
// Each prunable layer owns M-1 trainable gates k in [0,1]. Unit i of the
// magnitude decomposition survives while its priority p_i = prod_{n<i} k_n
// exceeds tau; since the product can only shrink with i, the kept units are
// always the largest-magnitude prefix. The threshold is passed straight
// through in the backward pass.
namespace nmsls::sls {

// p_1 = 1, p_i = prod_{n<i} k_n. Throws if any k lies outside [0,1].
std::vector<float> priority_scores(const std::vector<float>& k);
ad::Var priority_scores(ad::Var k);

// b_i = 1 iff p_i > tau (strict).
nm::NMMask binarize(const std::vector<float>& p, float tau);
// Forward: threshold as 0/1 floats. Backward: identity.
ad::Var binarize_ste(ad::Var p, float tau);

// Elementwise clamp of k into [0,1].
void project_k(std::vector<float>& k);
void project_k(Tensor& k);

struct PriorityState {
  Tensor k;  // length M-1, requires_grad
  float tau = 0.5f;

  static PriorityState init(int M, float tau);
  int M() const { return static_cast<int>(k.size()) + 1; }
  std::vector<float> scores() const { return priority_scores(k.data); }
  nm::NMMask mask() const { return binarize(scores(), tau); }
};

// Gate values that make the mask keep exactly the first n units.
PriorityState fixed_prefix(int n, int M, float tau);

struct SparseLayerState {
  nm::GroupDecomposition decomp;
  PriorityState priority;
};

struct LayerMaskTerm {
  nm::LayerCostModel cost;
  ad::Var b;  // length-M keep mask on the tape
};

// Sum of per-layer pruned MACs (before lambda scaling). The gradient w.r.t.
// b_i of a layer is C_original / M.
ad::Var reg_loss(ad::Tape& tape, const std::vector<LayerMaskTerm>& layers);
double reg_loss(const std::vector<std::pair<nm::LayerCostModel, nm::NMMask>>& layers);

ad::Var total_loss(ad::Var task_loss, ad::Var reg, double lambda_reg);

struct AnnealState {
  double lambda_reg = 1e-10;
  double alpha = 1.1;
  double T = 0.1;
  int K = 10;  // epochs between checks
  std::vector<double> history;  // pruned fraction at each check, seeded with the start value
};

// One check: multiply lambda by alpha when |previous - current| <= T.
// Returns true when lambda changed. The first call with empty history only
// records the sample.
bool anneal_step(AnnealState& state, double current_pruned_fraction);

struct BudgetSpec {
  double target_fraction = 0.25;
  bool frozen = false;
};

// Sets `frozen` once pruned_fraction <= target; frozen never clears.
bool check_budget_and_freeze(double pruned_fraction, BudgetSpec& spec);

struct RegroupSchedule {
  std::optional<std::int64_t> period_iters;  // empty = never

  bool due(std::int64_t iter) const;
};

// Re-runs the decomposition when the schedule is due. Returns true if it did.
bool regroup(const Tensor& weight, nm::GroupDecomposition& decomp, const RegroupSchedule& schedule,
             std::int64_t iter);

// Uniform one-shot baseline: keep the N largest magnitudes per group.
Tensor oneshot_prune(const Tensor& weight, int N, int M);

// Per-epoch search log: epoch, task_loss, reg_loss, lambda_reg,
// pruned_fraction, then one effective-N column per prunable layer.
class MetricsCsv {
 public:
  MetricsCsv(std::ostream& out, const std::vector<std::string>& layer_names);
  void row(int epoch, double task_loss, double reg, double lambda_reg, double pruned_fraction,
           const std::vector<int>& effective_n);

 private:
  std::ostream& out_;
  std::size_t n_layers_;
};

}  // namespace nmsls::sls
