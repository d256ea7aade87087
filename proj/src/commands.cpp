// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsls/commands.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nmsls/adaptive.hpp"
#include "nmsls/checkpoint.hpp"

namespace nmsls::cli {
namespace fs = std::filesystem;

namespace {

std::ostream& out_of(const CommandOptions& o) { return o.out ? *o.out : std::cout; }
std::ostream& log_of(const CommandOptions& o) { return o.log ? *o.log : std::cerr; }

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot write " + path.string());
  f << text;
}

void dump_config(const CommandOptions& o, const std::string& cmd) {
  write_text(o.config.out / (cmd + ".config"), o.config.dump());
}

fs::path input_or(const CommandOptions& o, const std::string& fallback) {
  return o.from ? *o.from : o.config.out / fallback;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

SrModel load_model(const fs::path& path, const RunConfig& cfg) {
  SrModel m = model_from_checkpoint(load_checkpoint(path));
  if (m.spec().scale != cfg.model.scale)
    throw ConfigError("checkpoint " + path.string() + " has scale " + std::to_string(m.spec().scale) +
                      " but the config says " + std::to_string(cfg.model.scale));
  return m;
}

void save_model(const SrModel& m, const fs::path& path, const std::vector<std::pair<std::string, std::string>>& meta) {
  CheckpointData d = model_checkpoint(m);
  for (const auto& [k, v] : meta) d.put(k, v);
  save_checkpoint(d, path);
}

// Runs a phase with its metrics CSV next to the checkpoint.
template <typename Fn>
PhaseResult with_metrics(const CommandOptions& o, const SrModel& model, const std::string& name, Fn&& fn) {
  fs::create_directories(o.config.out);
  std::ofstream csv_file(o.config.out / (name + "_metrics.csv"), std::ios::trunc);
  if (!csv_file) throw CheckpointError("cannot write metrics for " + name);
  sls::MetricsCsv csv(csv_file, model.prunable_names());
  TrainHooks hooks;
  hooks.csv = &csv;
  hooks.log = &log_of(o);
  return fn(hooks);
}

const std::vector<Sample>& split_of(const PatchDataset& d, const std::string& split) {
  if (split == "train") return d.train;
  if (split == "val") return d.val;
  if (split == "test") return d.test;
  throw ConfigError("unknown split '" + split + "' (train, val or test)");
}

std::vector<adaptive::Candidate> load_candidates(const CommandOptions& o, std::vector<std::string>* names) {
  if (o.candidates.size() < 2)
    throw ConfigError("route: need at least 2 candidate checkpoints (got " + std::to_string(o.candidates.size()) +
                      "); the bicubic candidate is added automatically");
  std::vector<adaptive::Candidate> cands;
  for (const auto& p : o.candidates)
    cands.push_back(adaptive::model_candidate(p.filename().string(), load_model(p, o.config),
                                              o.sparse_exec ? ExecMode::kSparse : ExecMode::kDense));
  if (adaptive::sort_candidates(cands))
    log_of(o) << "notice: candidates were not sorted by cost; reordered most expensive first\n";
  cands.push_back(adaptive::bicubic_candidate(o.config.model.scale));
  if (names) {
    names->clear();
    for (const auto& c : cands) names->push_back(c.name);
  }
  return cands;
}

}  // namespace

PatchDataset load_data(const RunConfig& config) {
  if (config.dataset == "synth") return synth_dataset(config.synth);
  return load_dataset_dir(config.dataset, config.model.scale, config.synth.patch_size);
}

std::vector<double> parse_beta_sweep(const std::string& spec) {
  std::stringstream ss(spec);
  std::string a, b, c;
  if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, c))
    throw ConfigError("beta sweep must be lo:hi:step, got '" + spec + "'");
  double lo = 0, hi = 0, step = 0;
  try {
    lo = std::stod(a);
    hi = std::stod(b);
    step = std::stod(c);
  } catch (const std::logic_error&) {
    throw ConfigError("beta sweep must be numeric lo:hi:step, got '" + spec + "'");
  }
  if (!(step > 0.0) || hi < lo || lo < 0.0) throw ConfigError("beta sweep needs 0 <= lo <= hi and step > 0");
  std::vector<double> out;
  const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
  return out;
}

int cmd_pretrain(const CommandOptions& o) {
  const RunConfig& cfg = o.config;
  dump_config(o, "pretrain");
  const PatchDataset data = load_data(cfg);
  SrModel model = SrModel::build(cfg.model, cfg.protocol.seed, &log_of(o));
  const PhaseResult r = with_metrics(o, model, "pretrain", [&](const TrainHooks& h) {
    return pretrain(model, data, cfg.protocol, h);
  });
  save_model(model, cfg.out / "pretrain.slsc",
             {{"phase", "pretrain"}, {"epochs", std::to_string(r.epochs_run)}, {"steps", std::to_string(r.steps)}});
  out_of(o) << "pretrain: " << r.epochs_run << " epochs, " << r.steps << " steps, final L1 "
            << (r.log.empty() ? 0.0 : r.log.back().task_loss) << "\n";
  return kOk;
}

int cmd_prune(const CommandOptions& o) {
  const RunConfig& cfg = o.config;
  dump_config(o, "prune");
  const PatchDataset data = load_data(cfg);
  SrModel model = load_model(input_or(o, "pretrain.slsc"), cfg);
  if (model.spec().M != cfg.model.M)
    throw ConfigError("checkpoint M=" + std::to_string(model.spec().M) + " differs from config M=" +
                      std::to_string(cfg.model.M));
  const SearchConfig search = cfg.resolved_search(data.train.size());
  const PhaseResult r = with_metrics(o, model, "prune", [&](const TrainHooks& h) {
    return prune_search(model, data, cfg.protocol, search, h);
  });
  save_model(model, cfg.out / "prune.slsc",
             {{"phase", "prune"},
              {"frozen", r.frozen ? "1" : "0"},
              {"search_epochs", std::to_string(r.epochs_run)},
              {"steps", std::to_string(r.steps)},
              {"pruned_fraction", num(r.pruned_fraction)},
              {"lambda_reg", num(r.lambda_reg)}});
  out_of(o) << "prune: " << (r.frozen ? "frozen" : "FAILED") << " after " << r.epochs_run
            << " epochs, pruned fraction " << r.pruned_fraction << ", lambda " << r.lambda_reg << "\n";
  return r.frozen ? kOk : kBudgetFailure;
}

int cmd_finetune(const CommandOptions& o) {
  const RunConfig& cfg = o.config;
  dump_config(o, "finetune");
  const PatchDataset data = load_data(cfg);
  const fs::path in = input_or(o, "prune.slsc");
  const CheckpointData ck = load_checkpoint(in);
  if (ck.find("frozen").value_or("0") != "1")
    throw ConfigError("finetune: " + in.string() + " is not a frozen prune checkpoint");
  SrModel model = model_from_checkpoint(ck);
  const int first = std::stoi(ck.at("search_epochs"));
  const std::int64_t prior_steps = std::stoll(ck.find("steps").value_or("0"));
  const PhaseResult r = with_metrics(o, model, "finetune", [&](const TrainHooks& h) {
    return finetune(model, data, cfg.protocol, first, h);
  });
  save_model(model, cfg.out / "finetune.slsc",
             {{"phase", "finetune"},
              {"epochs", std::to_string(r.epochs_run)},
              {"steps", std::to_string(prior_steps + r.steps)}});
  out_of(o) << "finetune: epochs " << first << ".." << cfg.protocol.prune_epochs << ", prune-stage steps "
            << prior_steps + r.steps << "\n";
  return kOk;
}

int cmd_oneshot(const CommandOptions& o) {
  const RunConfig& cfg = o.config;
  dump_config(o, "oneshot");
  const PatchDataset data = load_data(cfg);
  SrModel model = load_model(input_or(o, "pretrain.slsc"), cfg);
  const int n = o.oneshot_n.value_or(cfg.oneshot_n);
  if (n < 1 || n > model.spec().M) throw ConfigError("oneshot: N must be in [1, M]");
  apply_oneshot(model, n, cfg.search.tau);
  const PhaseResult r = with_metrics(o, model, "oneshot", [&](const TrainHooks& h) {
    return finetune(model, data, cfg.protocol, 0, h);
  });
  save_model(model, cfg.out / "oneshot.slsc",
             {{"phase", "oneshot"},
              {"N", std::to_string(n)},
              {"epochs", std::to_string(r.epochs_run)},
              {"steps", std::to_string(r.steps)}});
  out_of(o) << "oneshot " << n << ":" << model.spec().M << ": " << r.epochs_run << " epochs, " << r.steps
            << " steps\n";
  return kOk;
}

int cmd_eval(const CommandOptions& o) {
  const RunConfig& cfg = o.config;
  if (!o.checkpoint) throw ConfigError("eval: --checkpoint is required");
  const PatchDataset data = load_data(cfg);
  const SrModel model = load_model(*o.checkpoint, cfg);
  const auto& samples = split_of(data, o.split);
  const EvalResult r = evaluate(model, samples, o.sparse_exec ? ExecMode::kSparse : ExecMode::kDense);
  const MacsReport macs = model.macs(samples.front().lr.height, samples.front().lr.width);
  fs::create_directories(cfg.out);
  std::ofstream csv(cfg.out / "eval.csv", std::ios::trunc);
  csv << "checkpoint,split,exec,psnr,bicubic_psnr,macs,unprunable_macs,prunable_macs,prunable_original_macs\n";
  csv.precision(10);
  csv << o.checkpoint->filename().string() << ',' << o.split << ',' << (o.sparse_exec ? "sparse" : "dense") << ','
      << r.psnr << ',' << r.bicubic_psnr << ',' << r.macs << ',' << macs.unprunable << ',' << macs.prunable_pruned
      << ',' << macs.prunable_original << '\n';
  out_of(o) << "psnr " << r.psnr << " dB (bicubic " << r.bicubic_psnr << " dB), MACs/image " << r.macs
            << ", pruned fraction " << macs.pruned_fraction() << "\n";
  return kOk;
}

int cmd_train_estimators(const CommandOptions& o) {
  const RunConfig& cfg = o.config;
  dump_config(o, "train-estimators");
  const PatchDataset data = load_data(cfg);
  std::vector<std::string> names;
  const auto cands = load_candidates(o, &names);
  adaptive::EstimatorTrainConfig tc = cfg.estimator_train;
  tc.seed = cfg.protocol.seed;
  const auto est = adaptive::train_estimators(cands, data.train, cfg.estimator, tc, &log_of(o));
  const fs::path path = o.estimators ? *o.estimators : cfg.out / "estimators.slsc";
  save_checkpoint(estimators_checkpoint(est, names), path);
  out_of(o) << "trained " << est.size() << " estimators -> " << path.string() << "\n";
  return kOk;
}

int cmd_route(const CommandOptions& o) {
  const RunConfig& cfg = o.config;
  if (o.beta && o.beta_sweep) throw ConfigError("route: use either --beta or --beta-sweep");
  if (o.beta && *o.beta < 0.0) throw ConfigError("route: beta must be >= 0");
  const PatchDataset data = load_data(cfg);
  std::vector<std::string> names;
  const auto cands = load_candidates(o, &names);
  std::vector<std::string> est_names;
  const fs::path est_path = o.estimators ? *o.estimators : cfg.out / "estimators.slsc";
  auto est = estimators_from_checkpoint(load_checkpoint(est_path), &est_names);
  if (est_names != names)
    throw ConfigError("route: estimators in " + est_path.string() +
                      " were trained for a different candidate list; rerun train-estimators");
  const adaptive::EstimatorScorer scorer(std::move(est));
  const auto& samples = split_of(data, o.split);
  if (samples.empty()) throw ConfigError("route: the " + o.split + " split is empty");
  fs::create_directories(cfg.out);

  const std::vector<double> betas = o.beta_sweep ? parse_beta_sweep(*o.beta_sweep)
                                                 : std::vector<double>{o.beta.value_or(1.0)};
  const auto rows = adaptive::beta_sweep(samples, cands, scorer, betas, cfg.plan, cfg.model.scale);
  std::ofstream csv(cfg.out / "tradeoff.csv", std::ios::trunc);
  csv.precision(10);
  adaptive::write_sweep_csv(csv, rows);
  if (!o.beta_sweep) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto r = adaptive::route_image(samples[i].lr, cands, scorer, betas.front(), cfg.plan, cfg.model.scale,
                                           &samples[i].hr);
      std::ofstream rep(cfg.out / ("route_" + std::to_string(i) + ".csv"), std::ios::trunc);
      adaptive::write_route_report(rep, r);
      write_pnm(r.output.quantized(), cfg.out / ("route_" + std::to_string(i) + ".ppm"));
    }
  }
  out_of(o) << "beta,avg_macs,avg_psnr\n";
  for (const auto& r : rows) out_of(o) << r.beta << ',' << r.avg_macs << ',' << r.avg_psnr << '\n';
  return kOk;
}

int run_command(const std::string& name, const CommandOptions& opt) {
  std::ostream& log = log_of(opt);
  try {
    if (name == "pretrain") return cmd_pretrain(opt);
    if (name == "prune") return cmd_prune(opt);
    if (name == "finetune") return cmd_finetune(opt);
    if (name == "oneshot") return cmd_oneshot(opt);
    if (name == "eval") return cmd_eval(opt);
    if (name == "train-estimators") return cmd_train_estimators(opt);
    if (name == "route") return cmd_route(opt);
    log << "error: unknown command '" << name << "'\n";
    return kConfigError;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const CheckpointError& e) {
    log << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::invalid_argument& e) {
    log << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kIoError;
  }
}

}  // namespace nmsls::cli
