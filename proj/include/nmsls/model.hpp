// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nmsls/autodiff.hpp"
#include "nmsls/nm_sparse.hpp"
#include "nmsls/sls_search.hpp"
#include "nmsls/tensor.hpp"

namespace nmsls {

// EDSR-style super-resolution network:
//   head conv -> n_blocks x (conv, relu, conv, +skip) -> body tail conv (+head)
//   -> upsampler conv to image_channels*scale^2 -> pixel shuffle
// with an optional global bicubic skip added to the output.
struct ModelSpec {
  int n_blocks = 4;
  int channels = 32;
  int scale = 2;
  int M = 8;
  int image_channels = 3;
  bool global_skip = true;

  void validate() const;
};

struct ConvLayer {
  std::string name;
  Tensor weight;  // OIHW
  Tensor bias;    // O
  int stride = 1;
  int padding = 1;
  bool prunable = false;
  std::optional<sls::SparseLayerState> sparsity;

  nm::NMMask mask() const;
  int effective_n() const;
  // Weight with pruned units zeroed (the dense weight when not sparse).
  Tensor effective_weight() const;
};

struct MacsReport {
  double unprunable = 0.0;
  double prunable_original = 0.0;
  double prunable_pruned = 0.0;

  double total() const { return unprunable + prunable_pruned; }
  double original_total() const { return unprunable + prunable_original; }
  // Remaining fraction of prunable MACs (1 when nothing is prunable).
  double pruned_fraction() const { return prunable_original > 0.0 ? prunable_pruned / prunable_original : 1.0; }
};

enum class ExecMode { kDense, kSparse };

class SrModel {
 public:
  // Throws std::invalid_argument for an invalid spec. A spec without any
  // prunable layer is valid; a warning goes to `log` when given.
  static SrModel build(const ModelSpec& spec, std::uint64_t seed, std::ostream* log = nullptr);
  // Assembles a model from existing layers (checkpoint loading).
  static SrModel from_layers(const ModelSpec& spec, std::vector<ConvLayer> layers);

  const ModelSpec& spec() const { return spec_; }
  std::vector<ConvLayer>& layers() { return layers_; }
  const std::vector<ConvLayer>& layers() const { return layers_; }

  // Records the forward pass for a [B,C,h,w] batch in [0,1]. Layers with
  // sparsity state run on masked weights; their keep masks are appended to
  // `mask_terms` when non-null.
  ad::Var forward(ad::Tape& tape, const Tensor& lr, std::vector<sls::LayerMaskTerm>* mask_terms = nullptr);

  // Read-only inference; safe to call concurrently.
  Tensor infer(const Tensor& lr, ExecMode mode = ExecMode::kDense) const;

  std::vector<nm::LayerCostModel> cost_models(std::int64_t lr_h, std::int64_t lr_w) const;
  MacsReport macs(std::int64_t lr_h, std::int64_t lr_w) const;
  std::int64_t parameter_count() const;

  std::vector<Tensor*> weight_params();
  // Trainable gates (k) of every sparse layer whose gates still require grad.
  std::vector<Tensor*> gate_params();
  std::vector<std::string> prunable_names() const;

  // Decomposes every prunable layer and initialises its gates to 1.
  void attach_search(float tau);
  // Zeroes pruned weights in place and stops gate training.
  void bake_masks();

 private:
  ModelSpec spec_;
  std::vector<ConvLayer> layers_;
};

// Immutable inference snapshot: masked dense weights or compressed N:M
// weights per layer, prepared once.
class FrozenModel {
 public:
  FrozenModel(const SrModel& model, ExecMode mode);
  Tensor run(const Tensor& lr) const;
  const ModelSpec& spec() const { return spec_; }

 private:
  struct Layer {
    std::variant<Tensor, nm::CompressedNM> weight;
    Tensor bias;
    int stride, padding;
  };
  Tensor conv(std::size_t i, const Tensor& x) const;

  ModelSpec spec_;
  std::vector<Layer> layers_;
};

}  // namespace nmsls
