// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsls/sls_search.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

namespace nmsls::sls {

std::vector<float> priority_scores(const std::vector<float>& k) {
  for (float v : k) require(v >= 0.0f && v <= 1.0f, "priority_scores: k must lie in [0,1]; project first");
  std::vector<float> p(k.size() + 1);
  p[0] = 1.0f;
  for (std::size_t i = 1; i < p.size(); ++i) p[i] = p[i - 1] * k[i - 1];
  return p;
}

ad::Var priority_scores(ad::Var k) {
  const Tensor& kv = k.value();
  Tensor out(Shape{kv.size() + 1}, priority_scores(kv.data));
  const int ki = k.id;
  return k.tape->record(std::move(out), {ki}, [ki](ad::Tape& tp, int self) {
    const auto& g = tp.grad(self);
    const auto& kval = tp.value(ki).data;
    auto& gk = tp.grad(ki);
    const std::size_t m1 = kval.size();
    // dp_i/dk_n = prod_{m<i, m!=n} k_m for n < i (0-based: p index i uses k[0..i-1]).
    for (std::size_t n = 0; n < m1; ++n) {
      double prefix = 1.0;  // prod_{m<n} k_m
      for (std::size_t m = 0; m < n; ++m) prefix *= kval[m];
      double acc = 0.0;
      double tail = 1.0;  // prod_{n<m<i-1} k_m
      for (std::size_t i = n + 1; i <= m1; ++i) {
        if (i > n + 1) tail *= kval[i - 1];
        acc += static_cast<double>(g[i]) * prefix * tail;
      }
      gk[n] += static_cast<float>(acc);
    }
  });
}

nm::NMMask binarize(const std::vector<float>& p, float tau) {
  nm::NMMask m;
  m.bits.reserve(p.size());
  for (float v : p) m.bits.push_back(v > tau ? 1 : 0);
  return m;
}

ad::Var binarize_ste(ad::Var p, float tau) {
  const Tensor& pv = p.value();
  Tensor out(pv.shape);
  for (std::size_t i = 0; i < pv.data.size(); ++i) out.data[i] = pv.data[i] > tau ? 1.0f : 0.0f;
  const int pi = p.id;
  return p.tape->record(std::move(out), {pi}, [pi](ad::Tape& tp, int self) {
    const auto& g = tp.grad(self);
    auto& gp = tp.grad(pi);
    for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
  });
}

void project_k(std::vector<float>& k) {
  for (auto& v : k) v = std::clamp(v, 0.0f, 1.0f);
}

void project_k(Tensor& k) { project_k(k.data); }

PriorityState PriorityState::init(int M, float tau) {
  require(M >= 1, "PriorityState: M must be >= 1");
  require(tau > 0.0f && tau < 1.0f, "PriorityState: tau must lie in (0,1)");
  PriorityState s;
  s.k = Tensor(Shape{M - 1}, 1.0f);
  s.k.requires_grad = true;
  s.tau = tau;
  return s;
}

PriorityState fixed_prefix(int n, int M, float tau) {
  require(n >= 1 && n <= M, "fixed_prefix: need 1 <= n <= M");
  PriorityState s = PriorityState::init(M, tau);
  if (n < M) s.k.data[static_cast<std::size_t>(n - 1)] = 0.0f;
  return s;
}

ad::Var reg_loss(ad::Tape& tape, const std::vector<LayerMaskTerm>& layers) {
  double total = 0.0;
  std::vector<int> parents;
  std::vector<double> coeff;
  for (const auto& l : layers) {
    const Tensor& b = l.b.value();
    const double c = static_cast<double>(nm::layer_macs(l.cost)) / static_cast<double>(b.size());
    double kept = 0.0;
    for (float v : b.data) kept += v;
    total += c * kept;
    parents.push_back(l.b.id);
    coeff.push_back(c);
  }
  return tape.record(Tensor::scalar(static_cast<float>(total)), parents,
                     [parents, coeff](ad::Tape& tp, int self) {
                       const float g = tp.grad(self)[0];
                       for (std::size_t l = 0; l < parents.size(); ++l) {
                         if (!tp.needs_grad(parents[l])) continue;
                         for (auto& v : tp.grad(parents[l])) v += static_cast<float>(g * coeff[l]);
                       }
                     });
}

double reg_loss(const std::vector<std::pair<nm::LayerCostModel, nm::NMMask>>& layers) {
  double total = 0.0;
  for (const auto& [cost, mask] : layers) total += nm::pruned_macs(cost, mask);
  return total;
}

ad::Var total_loss(ad::Var task_loss, ad::Var reg, double lambda_reg) {
  if (lambda_reg == 0.0) return task_loss;
  return ad::add(task_loss, ad::scale(reg, static_cast<float>(lambda_reg)));
}

bool anneal_step(AnnealState& state, double current) {
  bool changed = false;
  if (!state.history.empty()) {
    const double delta = state.history.back() - current;
    if (std::fabs(delta) <= state.T) {
      state.lambda_reg *= state.alpha;
      changed = true;
    }
  }
  state.history.push_back(current);
  return changed;
}

bool check_budget_and_freeze(double pruned_fraction, BudgetSpec& spec) {
  if (!spec.frozen && pruned_fraction <= spec.target_fraction) spec.frozen = true;
  return spec.frozen;
}

bool RegroupSchedule::due(std::int64_t iter) const {
  return period_iters.has_value() && *period_iters >= 1 && iter > 0 && iter % *period_iters == 0;
}

bool regroup(const Tensor& weight, nm::GroupDecomposition& decomp, const RegroupSchedule& schedule,
             std::int64_t iter) {
  if (!schedule.due(iter)) return false;
  auto fresh = nm::decompose(weight, decomp.M);
  require(fresh.has_value(), "regroup: weight is no longer groupable");
  fresh->snapshot_version = decomp.snapshot_version + 1;
  decomp = std::move(*fresh);
  return true;
}

Tensor oneshot_prune(const Tensor& weight, int N, int M) {
  auto d = nm::decompose(weight, M);
  require(d.has_value(), "oneshot_prune: input channels " + std::to_string(weight.shape.at(1)) +
                             " not divisible by M = " + std::to_string(M));
  return nm::reconstruct(weight, *d, nm::NMMask::prefix(N, M));
}

MetricsCsv::MetricsCsv(std::ostream& out, const std::vector<std::string>& layer_names)
    : out_(out), n_layers_(layer_names.size()) {
  out_ << "epoch,task_loss,reg_loss,lambda_reg,pruned_fraction";
  for (const auto& n : layer_names) out_ << ",N_" << n;
  out_ << "\n";
}

void MetricsCsv::row(int epoch, double task_loss, double reg, double lambda_reg, double pruned_fraction,
                     const std::vector<int>& effective_n) {
  require(effective_n.size() == n_layers_, "MetricsCsv: wrong number of layer columns");
  out_ << epoch << "," << std::setprecision(9) << task_loss << "," << reg << "," << lambda_reg << ","
       << pruned_fraction;
  for (int n : effective_n) out_ << "," << n;
  out_ << "\n";
}

}  // namespace nmsls::sls
