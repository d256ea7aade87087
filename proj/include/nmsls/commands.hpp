// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nmsls/config.hpp"

namespace nmsls::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kBudgetFailure = 3, kIoError = 4 };

struct CommandOptions {
  RunConfig config;
  std::optional<std::filesystem::path> from;        // input checkpoint
  std::optional<std::filesystem::path> checkpoint;  // eval target
  bool sparse_exec = false;
  std::vector<std::filesystem::path> candidates;
  std::optional<std::filesystem::path> estimators;
  std::optional<double> beta;
  std::optional<std::string> beta_sweep;  // "lo:hi:step"
  std::optional<int> oneshot_n;
  std::string split = "test";
  std::ostream* out = nullptr;  // results
  std::ostream* log = nullptr;  // progress and diagnostics
};

PatchDataset load_data(const RunConfig& config);
std::vector<double> parse_beta_sweep(const std::string& spec);

int cmd_pretrain(const CommandOptions& opt);
int cmd_prune(const CommandOptions& opt);
int cmd_finetune(const CommandOptions& opt);
int cmd_oneshot(const CommandOptions& opt);
int cmd_eval(const CommandOptions& opt);
int cmd_train_estimators(const CommandOptions& opt);
int cmd_route(const CommandOptions& opt);

// Dispatches by name and maps exceptions to exit codes.
int run_command(const std::string& name, const CommandOptions& opt);

}  // namespace nmsls::cli
