// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsls/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace nmsls {
namespace {

constexpr char kMagic[4] = {'S', 'L', 'S', 'C'};

enum LayerFlags : std::uint32_t {
  kPrunable = 1u << 0,
  kPriority = 1u << 1,
  kDecomp = 1u << 2,
  kCompressed = 1u << 3,
  kGatesTrainable = 1u << 4,
};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void dims(const Shape& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    for (auto d : s) i64(d);
  }
  void tensor(const Tensor& t) {
    dims(t.shape);
    for (float v : t.data) f32(v);
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  Shape dims() {
    const std::uint32_t rank = u32();
    if (rank > 8) throw CheckpointError("checkpoint: implausible tensor rank " + std::to_string(rank));
    Shape s(rank);
    for (auto& d : s) {
      d = i64();
      if (d < 0 || d > (1 << 30)) throw CheckpointError("checkpoint: implausible dimension");
    }
    return s;
  }
  Tensor tensor() {
    Shape s = dims();
    const auto n = static_cast<std::size_t>(numel(s));
    need(4 * n);
    std::vector<float> v(n);
    for (auto& x : v) x = f32();
    return Tensor(std::move(s), std::move(v));
  }
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated data");
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

int meta_int(const CheckpointData& d, std::string_view key) {
  try {
    return std::stoi(d.at(key));
  } catch (const std::logic_error&) {
    throw CheckpointError("checkpoint: bad integer for '" + std::string(key) + "'");
  }
}

}  // namespace

std::optional<std::string> CheckpointData::find(std::string_view key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return v;
  return std::nullopt;
}

std::string CheckpointData::at(std::string_view key) const {
  auto v = find(key);
  if (!v) throw CheckpointError("checkpoint: missing metadata '" + std::string(key) + "'");
  return *v;
}

void CheckpointData::put(std::string key, std::string value) {
  for (auto& [k, v] : meta)
    if (k == key) {
      v = std::move(value);
      return;
    }
  meta.emplace_back(std::move(key), std::move(value));
}

std::string encode_checkpoint(const CheckpointData& data) {
  require(data.compressed.empty() || data.compressed.size() == data.layers.size(),
          "checkpoint: compressed list must parallel the layers");
  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(CheckpointData::kVersion);
  w.u32(static_cast<std::uint32_t>(data.meta.size()));
  for (const auto& [k, v] : data.meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(data.layers.size()));
  for (std::size_t i = 0; i < data.layers.size(); ++i) {
    const ConvLayer& l = data.layers[i];
    const nm::CompressedNM* comp =
        data.compressed.empty() || !data.compressed[i] ? nullptr : &*data.compressed[i];
    std::uint32_t flags = 0;
    if (l.prunable) flags |= kPrunable;
    if (l.sparsity) {
      flags |= kPriority | kDecomp;
      if (l.sparsity->priority.k.requires_grad) flags |= kGatesTrainable;
    }
    if (comp) flags |= kCompressed;
    w.str(l.name);
    w.u32(static_cast<std::uint32_t>(l.stride));
    w.u32(static_cast<std::uint32_t>(l.padding));
    w.u32(flags);
    w.tensor(l.weight);
    w.tensor(l.bias);
    if (l.sparsity) {
      w.f32(l.sparsity->priority.tau);
      w.tensor(l.sparsity->priority.k);
      const auto& d = l.sparsity->decomp;
      w.u32(static_cast<std::uint32_t>(d.M));
      w.u64(d.snapshot_version);
      for (auto id : d.group_id) w.u8(id);
    }
    if (comp) {
      w.u32(static_cast<std::uint32_t>(comp->N));
      w.u32(static_cast<std::uint32_t>(comp->M));
      w.dims(comp->dense_shape);
      w.u64(comp->values.size());
      for (float v : comp->values) w.f32(v);
      for (auto c : comp->col_index) w.u8(c);
    }
  }
  const std::uint32_t crc = crc_of(w.bytes());
  w.u32(crc);
  return std::move(w.bytes());
}

CheckpointData decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CheckpointError("checkpoint: not an SLSC container");
  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  Reader crc_reader(bytes.substr(bytes.size() - 4));
  if (crc_reader.u32() != crc_of(body)) throw CheckpointError("checkpoint: CRC mismatch (file corrupted)");

  Reader r(body);
  for (int i = 0; i < 4; ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != CheckpointData::kVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  CheckpointData d;
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    d.meta.emplace_back(std::move(k), r.str());
  }
  const std::uint32_t n_layers = r.u32();
  bool any_compressed = false;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    ConvLayer l;
    l.name = r.str();
    l.stride = static_cast<int>(r.u32());
    l.padding = static_cast<int>(r.u32());
    const std::uint32_t flags = r.u32();
    try {
      l.weight = r.tensor();
      l.bias = r.tensor();
    } catch (const std::invalid_argument& e) {
      throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
    l.weight.requires_grad = true;
    l.bias.requires_grad = true;
    l.prunable = (flags & kPrunable) != 0;
    if (flags & kPriority) {
      sls::SparseLayerState s;
      s.priority.tau = r.f32();
      s.priority.k = r.tensor();
      s.priority.k.requires_grad = (flags & kGatesTrainable) != 0;
      s.decomp.M = static_cast<int>(r.u32());
      s.decomp.snapshot_version = r.u64();
      s.decomp.shape = l.weight.shape;
      const auto n = static_cast<std::size_t>(numel(l.weight.shape));
      r.need(n);
      s.decomp.group_id.resize(n);
      for (auto& id : s.decomp.group_id) id = r.u8();
      if (s.decomp.M < 1 || s.priority.M() != s.decomp.M)
        throw CheckpointError("checkpoint: inconsistent gates for layer " + l.name);
      l.sparsity = std::move(s);
    }
    std::optional<nm::CompressedNM> comp;
    if (flags & kCompressed) {
      nm::CompressedNM c;
      c.N = static_cast<int>(r.u32());
      c.M = static_cast<int>(r.u32());
      c.dense_shape = r.dims();
      const std::uint64_t count = r.u64();
      r.need(static_cast<std::size_t>(count) * 5);
      c.values.resize(static_cast<std::size_t>(count));
      for (auto& v : c.values) v = r.f32();
      c.col_index.resize(static_cast<std::size_t>(count));
      for (auto& v : c.col_index) v = r.u8();
      comp = std::move(c);
      any_compressed = true;
    }
    d.layers.push_back(std::move(l));
    d.compressed.push_back(std::move(comp));
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes before CRC");
  if (!any_compressed) d.compressed.clear();
  return d;
}

void save_checkpoint(const CheckpointData& data, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(data);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("checkpoint: write failed for " + path.string());
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

CheckpointData model_checkpoint(const SrModel& model, bool with_compressed) {
  CheckpointData d;
  const ModelSpec& s = model.spec();
  d.put("kind", "sr_model");
  d.put("blocks", std::to_string(s.n_blocks));
  d.put("channels", std::to_string(s.channels));
  d.put("scale", std::to_string(s.scale));
  d.put("M", std::to_string(s.M));
  d.put("image_channels", std::to_string(s.image_channels));
  d.put("global_skip", s.global_skip ? "1" : "0");
  d.layers = model.layers();
  if (with_compressed) {
    bool any = false;
    for (const auto& l : d.layers) {
      if (l.sparsity) {
        d.compressed.emplace_back(nm::compress(l.effective_weight(), l.effective_n(), s.M));
        any = true;
      } else {
        d.compressed.emplace_back();
      }
    }
    if (!any) d.compressed.clear();
  }
  return d;
}

SrModel model_from_checkpoint(const CheckpointData& d) {
  if (d.at("kind") != "sr_model") throw CheckpointError("checkpoint: not a model checkpoint");
  ModelSpec s;
  s.n_blocks = meta_int(d, "blocks");
  s.channels = meta_int(d, "channels");
  s.scale = meta_int(d, "scale");
  s.M = meta_int(d, "M");
  s.image_channels = meta_int(d, "image_channels");
  s.global_skip = meta_int(d, "global_skip") != 0;
  try {
    return SrModel::from_layers(s, d.layers);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
}

CheckpointData estimators_checkpoint(const std::vector<adaptive::MseEstimator>& estimators,
                                     const std::vector<std::string>& candidate_names) {
  require(estimators.size() == candidate_names.size(), "estimators: one name per estimator");
  CheckpointData d;
  d.put("kind", "estimators");
  d.put("count", std::to_string(estimators.size()));
  for (std::size_t i = 0; i < estimators.size(); ++i) {
    d.put("candidate" + std::to_string(i), candidate_names[i]);
    d.put("target_scale" + std::to_string(i), num(estimators[i].target_scale()));
    for (auto l : estimators[i].layers()) {
      l.name = "est" + std::to_string(i) + "." + l.name;
      d.layers.push_back(std::move(l));
    }
  }
  return d;
}

std::vector<adaptive::MseEstimator> estimators_from_checkpoint(const CheckpointData& d,
                                                               std::vector<std::string>* candidate_names) {
  if (d.at("kind") != "estimators") throw CheckpointError("checkpoint: not an estimator checkpoint");
  const int count = meta_int(d, "count");
  if (count < 0 || static_cast<std::size_t>(count) * 4 != d.layers.size())
    throw CheckpointError("checkpoint: estimator layer count mismatch");
  std::vector<adaptive::MseEstimator> out;
  if (candidate_names) candidate_names->clear();
  for (int i = 0; i < count; ++i) {
    std::vector<ConvLayer> layers(d.layers.begin() + 4 * i, d.layers.begin() + 4 * (i + 1));
    const std::string prefix = "est" + std::to_string(i) + ".";
    for (auto& l : layers) {
      if (l.name.rfind(prefix, 0) != 0) throw CheckpointError("checkpoint: unexpected layer " + l.name);
      l.name = l.name.substr(prefix.size());
    }
    double scale = 0.0;
    try {
      scale = std::stod(d.at("target_scale" + std::to_string(i)));
    } catch (const std::logic_error&) {
      throw CheckpointError("checkpoint: bad target scale");
    }
    out.push_back(adaptive::MseEstimator::from_layers(std::move(layers), scale));
    if (candidate_names) candidate_names->push_back(d.at("candidate" + std::to_string(i)));
  }
  return out;
}

}  // namespace nmsls
