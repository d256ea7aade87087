// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmsls/adaptive.hpp"
#include "nmsls/dataset.hpp"
#include "nmsls/model.hpp"
#include "nmsls/train.hpp"

namespace nmsls {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat key=value run configuration. '#' starts a comment; blank lines are
// ignored; unknown keys and malformed values throw ConfigError.
struct RunConfig {
  ModelSpec model{4, 32, 2, 32, 3, true};
  std::string dataset = "synth";  // "synth" or a directory with {train,val,test}/
  SynthSpec synth;
  TrainProtocol protocol;
  SearchConfig search;
  std::string regroup_period = "auto";  // "auto" (10 epochs), "never" or iterations
  int oneshot_n = 8;
  std::filesystem::path out = "runs";
  adaptive::EstimatorSpec estimator;
  adaptive::EstimatorTrainConfig estimator_train;
  adaptive::PatchPlan plan;

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();

  // Every key with its effective value, one per line; parsing the dump
  // reproduces this config.
  std::string dump() const;
  void validate() const;

  // Search settings with the regroup period resolved against the dataset.
  SearchConfig resolved_search(std::size_t train_size) const;
};

RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace nmsls
