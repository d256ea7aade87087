// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsls/model.hpp"

#include <cmath>
#include <stdexcept>

#include "nmsls/image.hpp"
#include "nmsls/rng.hpp"
#include "nmsls/tensor_ops.hpp"

namespace nmsls {
namespace {

ConvLayer make_conv(std::string name, std::int64_t c_out, std::int64_t c_in, int k, int M, Rng& rng,
                    float gain = 1.0f) {
  ConvLayer l;
  l.name = std::move(name);
  l.weight = Tensor(Shape{c_out, c_in, k, k});
  l.bias = Tensor(Shape{c_out});
  const float bound = gain / std::sqrt(static_cast<float>(c_in * k * k));
  for (auto& v : l.weight.data) v = rng.uniform(-bound, bound);
  l.weight.requires_grad = true;
  l.bias.requires_grad = true;
  l.padding = k / 2;
  l.prunable = nm::groups_evenly(l.weight.shape, M);
  return l;
}

}  // namespace

void ModelSpec::validate() const {
  require(n_blocks >= 0, "model: n_blocks must be >= 0");
  require(channels >= 1, "model: channels must be >= 1");
  require(scale == 2 || scale == 4, "model: scale must be 2 or 4, got " + std::to_string(scale));
  require(M >= 1, "model: M must be >= 1");
  require(image_channels >= 1, "model: image_channels must be >= 1");
}

nm::NMMask ConvLayer::mask() const {
  if (!sparsity) return nm::NMMask::prefix(1, 1);
  return sparsity->priority.mask();
}

int ConvLayer::effective_n() const {
  if (!sparsity) return 1;
  return mask().effective_n();
}

Tensor ConvLayer::effective_weight() const {
  if (!sparsity) return Tensor(weight.shape, weight.data);
  return nm::reconstruct(weight, sparsity->decomp, mask());
}

SrModel SrModel::build(const ModelSpec& spec, std::uint64_t seed, std::ostream* log) {
  spec.validate();
  Rng rng(seed);
  SrModel m;
  m.spec_ = spec;
  const int C = spec.channels;
  m.layers_.push_back(make_conv("head", C, spec.image_channels, 3, spec.M, rng));
  for (int b = 0; b < spec.n_blocks; ++b) {
    m.layers_.push_back(make_conv("block" + std::to_string(b) + ".conv1", C, C, 3, spec.M, rng));
    m.layers_.push_back(make_conv("block" + std::to_string(b) + ".conv2", C, C, 3, spec.M, rng));
  }
  m.layers_.push_back(make_conv("body_tail", C, C, 3, spec.M, rng));
  m.layers_.push_back(
      make_conv("upsampler", static_cast<std::int64_t>(spec.image_channels) * spec.scale * spec.scale, C, 3,
                spec.M, rng, 0.1f));
  if (log && m.prunable_names().empty())
    *log << "warning: no layer has input channels divisible by M=" << spec.M << "; nothing is prunable\n";
  return m;
}

SrModel SrModel::from_layers(const ModelSpec& spec, std::vector<ConvLayer> layers) {
  spec.validate();
  require(layers.size() == static_cast<std::size_t>(2 * spec.n_blocks + 3),
          "model: expected " + std::to_string(2 * spec.n_blocks + 3) + " conv layers, got " +
              std::to_string(layers.size()));
  const std::int64_t C = spec.channels, I = spec.image_channels;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const ConvLayer& l = layers[i];
    const std::int64_t c_in = i == 0 ? I : C;
    const std::int64_t c_out = i + 1 == layers.size() ? I * spec.scale * spec.scale : C;
    require(l.weight.shape == Shape{c_out, c_in, 3, 3} && l.bias.shape == Shape{c_out},
            "model: layer " + l.name + " has shape " + shape_str(l.weight.shape) + ", expected " +
                shape_str(Shape{c_out, c_in, 3, 3}));
    require(l.stride == 1 && l.padding == 1, "model: layer " + l.name + " must be stride 1, padding 1");
    if (l.sparsity) {
      const auto& d = l.sparsity->decomp;
      require(l.prunable && d.M == spec.M && d.shape == l.weight.shape &&
                  d.group_id.size() == l.weight.data.size() && l.sparsity->priority.M() == spec.M,
              "model: inconsistent sparsity state for layer " + l.name);
      for (auto id : d.group_id) require(id >= 1 && id <= spec.M, "model: group id out of range in " + l.name);
    }
  }
  SrModel m;
  m.spec_ = spec;
  m.layers_ = std::move(layers);
  return m;
}

ad::Var SrModel::forward(ad::Tape& tape, const Tensor& lr, std::vector<sls::LayerMaskTerm>* mask_terms) {
  require(lr.rank() == 4 && lr.dim(1) == spec_.image_channels,
          "model: expected [B," + std::to_string(spec_.image_channels) + ",h,w] input, got " + shape_str(lr.shape));
  const std::int64_t h = lr.dim(2), w = lr.dim(3);
  auto conv = [&](ConvLayer& l, ad::Var x) {
    ad::Var wv = tape.param(l.weight);
    if (l.sparsity) {
      auto& s = *l.sparsity;
      ad::Var b = sls::binarize_ste(sls::priority_scores(tape.param(s.priority.k)), s.priority.tau);
      wv = nm::masked_weight(wv, s.decomp, b);
      if (mask_terms) mask_terms->push_back({nm::LayerCostModel::make(l.weight.shape, h, w, spec_.M), b});
    }
    return ad::bias_add(ad::conv2d(x, wv, l.stride, l.padding), tape.param(l.bias));
  };
  ad::Var x = tape.constant(Tensor(lr.shape, lr.data));
  std::size_t li = 0;
  ad::Var head = conv(layers_[li++], x);
  ad::Var body = head;
  for (int b = 0; b < spec_.n_blocks; ++b) {
    ad::Var r = ad::relu(conv(layers_[li++], body));
    r = conv(layers_[li++], r);
    body = ad::add(body, r);
  }
  body = ad::add(conv(layers_[li++], body), head);
  ad::Var out = ad::pixel_shuffle(conv(layers_[li++], body), spec_.scale);
  if (spec_.global_skip) out = ad::add(out, tape.constant(bicubic_upsample(lr, spec_.scale)));
  return out;
}

Tensor SrModel::infer(const Tensor& lr, ExecMode mode) const { return FrozenModel(*this, mode).run(lr); }

std::vector<nm::LayerCostModel> SrModel::cost_models(std::int64_t lr_h, std::int64_t lr_w) const {
  std::vector<nm::LayerCostModel> out;
  for (const auto& l : layers_) {
    const Shape& s = l.weight.shape;
    const std::int64_t oh = (lr_h + 2 * l.padding - s[2]) / l.stride + 1;
    const std::int64_t ow = (lr_w + 2 * l.padding - s[3]) / l.stride + 1;
    out.push_back(nm::LayerCostModel::make(s, oh, ow, spec_.M));
  }
  return out;
}

MacsReport SrModel::macs(std::int64_t lr_h, std::int64_t lr_w) const {
  MacsReport r;
  const auto costs = cost_models(lr_h, lr_w);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const double full = static_cast<double>(nm::layer_macs(costs[i]));
    if (layers_[i].prunable) {
      r.prunable_original += full;
      r.prunable_pruned += layers_[i].sparsity ? nm::pruned_macs(costs[i], layers_[i].mask()) : full;
    } else {
      r.unprunable += full;
    }
  }
  return r;
}

std::int64_t SrModel::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<Tensor*> SrModel::weight_params() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<Tensor*> SrModel::gate_params() {
  std::vector<Tensor*> out;
  for (auto& l : layers_)
    if (l.sparsity && l.sparsity->priority.k.requires_grad) out.push_back(&l.sparsity->priority.k);
  return out;
}

std::vector<std::string> SrModel::prunable_names() const {
  std::vector<std::string> out;
  for (const auto& l : layers_)
    if (l.prunable) out.push_back(l.name);
  return out;
}

void SrModel::attach_search(float tau) {
  for (auto& l : layers_) {
    if (!l.prunable) continue;
    auto d = nm::decompose(l.weight, spec_.M);
    require(d.has_value(), "attach_search: layer " + l.name + " is not groupable");
    l.sparsity = sls::SparseLayerState{std::move(*d), sls::PriorityState::init(spec_.M, tau)};
  }
}

void SrModel::bake_masks() {
  for (auto& l : layers_) {
    if (!l.sparsity) continue;
    l.weight.data = l.effective_weight().data;
    l.sparsity->priority.k.requires_grad = false;
    l.sparsity->priority.k.grad.reset();
  }
}

FrozenModel::FrozenModel(const SrModel& model, ExecMode mode) : spec_(model.spec()) {
  for (const auto& l : model.layers()) {
    Layer fl{l.effective_weight(), Tensor(l.bias.shape, l.bias.data), l.stride, l.padding};
    if (mode == ExecMode::kSparse && l.sparsity) {
      const Tensor& w = std::get<Tensor>(fl.weight);
      fl.weight = nm::compress(w, l.effective_n(), spec_.M);
    }
    layers_.push_back(std::move(fl));
  }
}

Tensor FrozenModel::conv(std::size_t i, const Tensor& x) const {
  const Layer& l = layers_[i];
  Tensor y = std::holds_alternative<Tensor>(l.weight)
                 ? ops::conv2d(x, std::get<Tensor>(l.weight), l.stride, l.padding)
                 : nm::sparse_conv2d(x, std::get<nm::CompressedNM>(l.weight), l.stride, l.padding);
  ops::add_channel_bias(y, l.bias);
  return y;
}

Tensor FrozenModel::run(const Tensor& lr) const {
  require(lr.rank() == 4 && lr.dim(1) == spec_.image_channels,
          "model: expected [B," + std::to_string(spec_.image_channels) + ",h,w] input, got " + shape_str(lr.shape));
  std::size_t li = 0;
  Tensor head = conv(li++, lr);
  Tensor body = head;
  for (int b = 0; b < spec_.n_blocks; ++b) {
    Tensor r = ops::relu(conv(li++, body));
    r = conv(li++, r);
    body = ops::add(body, r);
  }
  body = ops::add(conv(li++, body), head);
  Tensor out = ops::pixel_shuffle(conv(li++, body), spec_.scale);
  if (spec_.global_skip) out = ops::add(out, bicubic_upsample(lr, spec_.scale));
  return out;
}

}  // namespace nmsls
