// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nmsls/adaptive.hpp"
#include "nmsls/model.hpp"
#include "nmsls/nm_sparse.hpp"

namespace nmsls {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Container layout (all integers and floats little-endian):
//   "SLSC" u32:version
//   u32:n_meta { str:key str:value }
//   u32:n_layers { layer record }
//   u32:crc32 of every preceding byte
// str = u32 length + bytes; tensor = u32 rank, i64 dims, f32 values.
// layer record = str:name u32:stride u32:padding u32:flags tensor:weight
//   tensor:bias [f32:tau tensor:k] [u32:M u64:version u8 ids]
//   [u32:N u32:M u32 rank i64 dims u64:count f32 values u8 col_index]
struct CheckpointData {
  static constexpr std::uint32_t kVersion = 1;

  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<ConvLayer> layers;
  std::vector<std::optional<nm::CompressedNM>> compressed;  // parallel to layers

  std::optional<std::string> find(std::string_view key) const;
  std::string at(std::string_view key) const;  // throws CheckpointError when missing
  void put(std::string key, std::string value);
};

std::string encode_checkpoint(const CheckpointData& data);
CheckpointData decode_checkpoint(std::string_view bytes);
void save_checkpoint(const CheckpointData& data, const std::filesystem::path& path);
CheckpointData load_checkpoint(const std::filesystem::path& path);

// Full model state, including gates and grouping. With `with_compressed`,
// every sparse layer also carries its packed N:M weights.
CheckpointData model_checkpoint(const SrModel& model, bool with_compressed = true);
SrModel model_from_checkpoint(const CheckpointData& data);

CheckpointData estimators_checkpoint(const std::vector<adaptive::MseEstimator>& estimators,
                                     const std::vector<std::string>& candidate_names);
std::vector<adaptive::MseEstimator> estimators_from_checkpoint(const CheckpointData& data,
                                                               std::vector<std::string>* candidate_names = nullptr);

}  // namespace nmsls
