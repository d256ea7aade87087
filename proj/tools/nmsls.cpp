// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "CLI11.hpp"
#include "nmsls/commands.hpp"

int main(int argc, char** argv) {
  using namespace nmsls;
  CLI::App app{"Layer-wise N:M sparsity search for super-resolution networks"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  cli::CommandOptions opt;
  std::vector<std::string> candidates;
  std::optional<std::string> from, checkpoint, estimators;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value run configuration")->required();
    sub->add_option("--seed", seed, "override the training seed");
    sub->add_option("--out", out_dir, "override the output directory");
  };
  auto* pretrain = app.add_subcommand("pretrain", "dense training");
  auto* prune = app.add_subcommand("prune", "budgeted sparsity search until the MAC target is met");
  auto* finetune = app.add_subcommand("finetune", "fine-tune a frozen prune checkpoint");
  auto* oneshot = app.add_subcommand("oneshot", "uniform N:M magnitude pruning plus fine-tuning");
  auto* eval = app.add_subcommand("eval", "PSNR and MACs of a checkpoint");
  auto* train_est = app.add_subcommand("train-estimators", "fit per-candidate MSE estimators");
  auto* route = app.add_subcommand("route", "patch-wise adaptive inference");
  for (auto* s : {pretrain, prune, finetune, oneshot, eval, train_est, route}) common(s);
  for (auto* s : {prune, finetune, oneshot}) s->add_option("--from", from, "input checkpoint");
  oneshot->add_option("--n", opt.oneshot_n, "kept weights per group (default: oneshot_n)");
  eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
  eval->add_flag("--sparse-exec", opt.sparse_exec, "run pruned layers from the compressed N:M format");
  eval->add_option("--split", opt.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  for (auto* s : {train_est, route}) {
    s->add_option("--candidates", candidates, "candidate model checkpoints")->required();
    s->add_option("--estimators", estimators, "estimator checkpoint path");
    s->add_flag("--sparse-exec", opt.sparse_exec, "run candidates from the compressed N:M format");
  }
  route->add_option("--beta", opt.beta, "cost/accuracy trade-off");
  route->add_option("--beta-sweep", opt.beta_sweep, "lo:hi:step sweep, e.g. 0:10:1");
  route->add_option("--split", opt.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kConfigError;
  }

  try {
    opt.config = load_config(config_path);
    if (seed) opt.config.protocol.seed = *seed;
    if (out_dir) opt.config.out = *out_dir;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kConfigError;
  }
  if (from) opt.from = *from;
  if (checkpoint) opt.checkpoint = *checkpoint;
  if (estimators) opt.estimators = *estimators;
  for (const auto& c : candidates) opt.candidates.emplace_back(c);
  return cli::run_command(app.get_subcommands().front()->get_name(), opt);
}
