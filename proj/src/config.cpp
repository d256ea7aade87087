// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsls/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace nmsls {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError("config: bad value '" + v + "' for key '" + key + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean '" + v + "' for key '" + key + "' (use true/false)");
}

template <typename T>
std::string fmt(T v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

struct Entry {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define NMSLS_NUM(KEY, FIELD, TYPE)                                                             \
  Entry {                                                                                      \
    KEY, [](RunConfig& c, const std::string& v) { c.FIELD = parse_number<TYPE>(KEY, v); },     \
        [](const RunConfig& c) { return fmt(c.FIELD); }                                        \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      NMSLS_NUM("blocks", model.n_blocks, int),
      NMSLS_NUM("channels", model.channels, int),
      Entry{"scale",
            [](RunConfig& c, const std::string& v) { c.model.scale = c.synth.scale = parse_number<int>("scale", v); },
            [](const RunConfig& c) { return fmt(c.model.scale); }},
      NMSLS_NUM("M", model.M, int),
      Entry{"global_skip", [](RunConfig& c, const std::string& v) { c.model.global_skip = parse_bool("global_skip", v); },
            [](const RunConfig& c) { return fmt(c.model.global_skip); }},
      Entry{"dataset", [](RunConfig& c, const std::string& v) { c.dataset = v; },
            [](const RunConfig& c) { return c.dataset; }},
      NMSLS_NUM("synth_seed", synth.seed, std::uint64_t),
      NMSLS_NUM("train_count", synth.train_count, int),
      NMSLS_NUM("val_count", synth.val_count, int),
      NMSLS_NUM("test_count", synth.test_count, int),
      NMSLS_NUM("patch_size", synth.patch_size, int),
      NMSLS_NUM("test_image_size", synth.test_image_size, int),
      NMSLS_NUM("pretrain_epochs", protocol.pretrain_epochs, int),
      NMSLS_NUM("prune_epochs", protocol.prune_epochs, int),
      Entry{"search_cap",
            [](RunConfig& c, const std::string& v) {
              if (v == "auto")
                c.search.search_cap.reset();
              else
                c.search.search_cap = parse_number<int>("search_cap", v);
            },
            [](const RunConfig& c) { return c.search.search_cap ? fmt(*c.search.search_cap) : std::string("auto"); }},
      NMSLS_NUM("target_fraction", search.target_fraction, double),
      NMSLS_NUM("tau", search.tau, float),
      NMSLS_NUM("alpha", search.alpha, double),
      NMSLS_NUM("T", search.T, double),
      NMSLS_NUM("K", search.K, int),
      NMSLS_NUM("lambda_reg", search.lambda_reg, double),
      Entry{"anneal", [](RunConfig& c, const std::string& v) { c.search.anneal = parse_bool("anneal", v); },
            [](const RunConfig& c) { return fmt(c.search.anneal); }},
      Entry{"regroup_period",
            [](RunConfig& c, const std::string& v) {
              if (v != "auto" && v != "never") parse_number<std::int64_t>("regroup_period", v);
              c.regroup_period = v;
            },
            [](const RunConfig& c) { return c.regroup_period; }},
      NMSLS_NUM("oneshot_n", oneshot_n, int),
      NMSLS_NUM("lr", protocol.lr, float),
      Entry{"k_lr",
            [](RunConfig& c, const std::string& v) {
              if (v == "same")
                c.protocol.gate_lr.reset();
              else
                c.protocol.gate_lr = parse_number<float>("k_lr", v);
            },
            [](const RunConfig& c) { return c.protocol.gate_lr ? fmt(*c.protocol.gate_lr) : std::string("same"); }},
      NMSLS_NUM("batch", protocol.batch_size, int),
      NMSLS_NUM("seed", protocol.seed, std::uint64_t),
      Entry{"out", [](RunConfig& c, const std::string& v) { c.out = v; },
            [](const RunConfig& c) { return c.out.string(); }},
      NMSLS_NUM("est_channels", estimator.channels, int),
      NMSLS_NUM("est_epochs", estimator_train.epochs, int),
      NMSLS_NUM("est_batch", estimator_train.batch_size, int),
      NMSLS_NUM("est_lr", estimator_train.lr, float),
      NMSLS_NUM("route_patch", plan.patch_size, std::int64_t),
      NMSLS_NUM("route_stride", plan.stride, std::int64_t),
  };
  return table;
}

#undef NMSLS_NUM

const Entry& find(const std::string& key) {
  for (const auto& e : entries())
    if (e.key == key) return e;
  throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) { find(key).set(*this, value); }

std::string RunConfig::get(const std::string& key) const { return find(key).get(*this); }

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& e : entries()) out.push_back(e.key);
  return out;
}

std::string RunConfig::dump() const {
  std::ostringstream os;
  for (const auto& e : entries()) os << e.key << " = " << e.get(*this) << '\n';
  return os.str();
}

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  check(synth.scale == model.scale, "internal scale mismatch");
  check(synth.train_count >= 1, "train_count must be >= 1");
  check(synth.val_count >= 0 && synth.test_count >= 0, "split counts must be >= 0");
  check(synth.patch_size % model.scale == 0, "patch_size must be divisible by scale");
  check(synth.test_image_size % model.scale == 0, "test_image_size must be divisible by scale");
  check(protocol.pretrain_epochs >= 0 && protocol.prune_epochs >= 0, "epoch counts must be >= 0");
  check(!search.search_cap || *search.search_cap >= 0, "search_cap must be >= 0");
  check(search.target_fraction > 0.0 && search.target_fraction <= 1.0, "target_fraction must be in (0,1]");
  check(search.tau > 0.0f && search.tau < 1.0f, "tau must be in (0,1)");
  check(search.alpha >= 1.0, "alpha must be >= 1");
  check(search.T >= 0.0, "T must be >= 0");
  check(search.K >= 1, "K must be >= 1");
  check(search.lambda_reg >= 0.0, "lambda_reg must be >= 0");
  if (regroup_period != "auto" && regroup_period != "never")
    check(std::stoll(regroup_period) >= 1, "regroup_period must be >= 1, auto or never");
  check(oneshot_n >= 1 && oneshot_n <= model.M, "oneshot_n must be in [1, M]");
  check(protocol.lr > 0.0f, "lr must be > 0");
  check(!protocol.gate_lr || *protocol.gate_lr > 0.0f, "k_lr must be > 0");
  check(protocol.batch_size >= 1, "batch must be >= 1");
  check(estimator.channels >= 1 && estimator_train.epochs >= 0 && estimator_train.batch_size >= 1 &&
            estimator_train.lr > 0.0f,
        "estimator settings out of range");
  check(plan.patch_size >= 1 && plan.stride >= 1 && plan.stride <= plan.patch_size,
        "need 1 <= route_stride <= route_patch");
}

SearchConfig RunConfig::resolved_search(std::size_t train_size) const {
  SearchConfig s = search;
  const auto batches =
      static_cast<std::int64_t>((train_size + static_cast<std::size_t>(protocol.batch_size) - 1) /
                                static_cast<std::size_t>(protocol.batch_size));
  if (regroup_period == "never")
    s.regroup.period_iters.reset();
  else if (regroup_period == "auto")
    s.regroup.period_iters = std::max<std::int64_t>(1, 10 * batches);
  else
    s.regroup.period_iters = std::stoll(regroup_period);
  return s;
}

RunConfig parse_config(std::istream& in) {
  RunConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    try {
      c.set(key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  c.synth.scale = c.model.scale;
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  return parse_config(in);
}

}  // namespace nmsls
