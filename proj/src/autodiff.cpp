// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsls/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "nmsls/tensor_ops.hpp"

namespace nmsls::ad {

const Tensor& Var::value() const {
  require(valid(), "use of an unbound Var");
  return tape->value(id);
}

Var Tape::constant(Tensor t) {
  t.requires_grad = false;
  t.grad.reset();
  nodes_.push_back(Node{std::move(t), {}, {}, {}, nullptr, false});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Tensor& t) {
  Tensor copy(t.shape, t.data);
  const bool needs = record_grad_ && t.requires_grad;
  nodes_.push_back(Node{std::move(copy), {}, {}, {}, needs ? &t : nullptr, needs});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Tensor value, std::vector<int> parents, BackwardFn fn) {
  bool needs = false;
  if (record_grad_)
    for (int p : parents) needs = needs || needs_grad(p);
  Node n{std::move(value), {}, std::move(parents), needs ? std::move(fn) : BackwardFn{}, nullptr, needs};
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

std::vector<float>& Tape::grad(int id) {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (n.grad.size() != n.value.data.size()) n.grad.assign(n.value.data.size(), 0.0f);
  return n.grad;
}

void Tape::backward(Var loss) {
  require(loss.tape == this, "backward: loss belongs to a different tape");
  const Tensor& lv = value(loss.id);
  require(lv.data.size() == 1, "backward: loss must be a scalar, got shape " + shape_str(lv.shape));
  if (!needs_grad(loss.id)) return;
  grad(loss.id)[0] = 1.0f;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param) {
      auto& g = n.param->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  }
}

namespace {

bool is_scalar_like(const Tensor& t) { return t.data.size() == 1; }

enum class Broadcast { kSame, kAScalar, kBScalar };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape == b.shape) return Broadcast::kSame;
  if (is_scalar_like(b)) return Broadcast::kBScalar;
  if (is_scalar_like(a)) return Broadcast::kAScalar;
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a.shape) +
                              " and " + shape_str(b.shape) + " (only equal shapes or scalar-tensor)");
}

template <typename F>
Tensor binary_forward(const Tensor& a, const Tensor& b, Broadcast k, F f) {
  const Shape& shape = k == Broadcast::kAScalar ? b.shape : a.shape;
  Tensor out(shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const float av = k == Broadcast::kAScalar ? a.data[0] : a.data[i];
    const float bv = k == Broadcast::kBScalar ? b.data[0] : b.data[i];
    out.data[i] = f(av, bv);
  }
  return out;
}

// Accumulates g * d into the parent's grad, reducing over broadcast.
void accumulate(Tape& t, int parent, bool parent_scalar_broadcast, const std::vector<float>& g,
                const std::function<float(std::size_t)>& d) {
  if (!t.needs_grad(parent)) return;
  auto& pg = t.grad(parent);
  if (parent_scalar_broadcast) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += static_cast<double>(g[i] * d(i));
    pg[0] += static_cast<float>(s);
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * d(i);
  }
}

}  // namespace

Var conv2d(Var input, Var weight, int stride, int padding) {
  Tape& t = *input.tape;
  Tensor out = ops::conv2d(input.value(), weight.value(), stride, padding);
  const int xi = input.id, wi = weight.id;
  return t.record(std::move(out), {xi, wi}, [xi, wi, stride, padding](Tape& tp, int self) {
    const auto& g = tp.grad(self);
    float* gx = tp.needs_grad(xi) ? tp.grad(xi).data() : nullptr;
    float* gw = tp.needs_grad(wi) ? tp.grad(wi).data() : nullptr;
    ops::conv2d_backward(tp.value(xi), tp.value(wi), stride, padding, g, gx, gw);
  });
}

Var bias_add(Var x, Var bias) {
  Tape& t = *x.tape;
  Tensor out = x.value();
  ops::add_channel_bias(out, bias.value());
  const int xi = x.id, bi = bias.id;
  return t.record(std::move(out), {xi, bi}, [xi, bi](Tape& tp, int self) {
    const auto& g = tp.grad(self);
    if (tp.needs_grad(xi)) {
      auto& gx = tp.grad(xi);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (tp.needs_grad(bi)) {
      const Shape& s = tp.value(self).shape;
      const std::int64_t plane = s[2] * s[3];
      auto& gb = tp.grad(bi);
      for (std::int64_t b = 0; b < s[0]; ++b)
        for (std::int64_t c = 0; c < s[1]; ++c) {
          const float* p = g.data() + (b * s[1] + c) * plane;
          float acc = 0.0f;
          for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
          gb[static_cast<std::size_t>(c)] += acc;
        }
    }
  });
}

Var pixel_shuffle(Var x, int r) {
  Tape& t = *x.tape;
  Tensor out = ops::pixel_shuffle(x.value(), r);
  const int xi = x.id;
  return t.record(std::move(out), {xi}, [xi, r](Tape& tp, int self) {
    Tensor gout(tp.value(self).shape, tp.grad(self));
    Tensor back = ops::pixel_unshuffle(gout, r);
    auto& gx = tp.grad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += back.data[i];
  });
}

Var pixel_unshuffle(Var x, int r) {
  Tape& t = *x.tape;
  Tensor out = ops::pixel_unshuffle(x.value(), r);
  const int xi = x.id;
  return t.record(std::move(out), {xi}, [xi, r](Tape& tp, int self) {
    Tensor gout(tp.value(self).shape, tp.grad(self));
    Tensor back = ops::pixel_shuffle(gout, r);
    auto& gx = tp.grad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += back.data[i];
  });
}

Var add(Var a, Var b) {
  Tape& t = *a.tape;
  const Broadcast k = broadcast_kind("add", a.value(), b.value());
  Tensor out = binary_forward(a.value(), b.value(), k, [](float x, float y) { return x + y; });
  const int ai = a.id, bi = b.id;
  return t.record(std::move(out), {ai, bi}, [ai, bi, k](Tape& tp, int self) {
    const auto& g = tp.grad(self);
    auto one = [](std::size_t) { return 1.0f; };
    accumulate(tp, ai, k == Broadcast::kAScalar, g, one);
    accumulate(tp, bi, k == Broadcast::kBScalar, g, one);
  });
}

Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  const Broadcast k = broadcast_kind("sub", a.value(), b.value());
  Tensor out = binary_forward(a.value(), b.value(), k, [](float x, float y) { return x - y; });
  const int ai = a.id, bi = b.id;
  return t.record(std::move(out), {ai, bi}, [ai, bi, k](Tape& tp, int self) {
    const auto& g = tp.grad(self);
    accumulate(tp, ai, k == Broadcast::kAScalar, g, [](std::size_t) { return 1.0f; });
    accumulate(tp, bi, k == Broadcast::kBScalar, g, [](std::size_t) { return -1.0f; });
  });
}

Var mul(Var a, Var b) {
  Tape& t = *a.tape;
  const Broadcast k = broadcast_kind("mul", a.value(), b.value());
  Tensor out = binary_forward(a.value(), b.value(), k, [](float x, float y) { return x * y; });
  const int ai = a.id, bi = b.id;
  return t.record(std::move(out), {ai, bi}, [ai, bi, k](Tape& tp, int self) {
    const auto& g = tp.grad(self);
    const Tensor& av = tp.value(ai);
    const Tensor& bv = tp.value(bi);
    accumulate(tp, ai, k == Broadcast::kAScalar, g,
               [&](std::size_t i) { return k == Broadcast::kBScalar ? bv.data[0] : bv.data[i]; });
    accumulate(tp, bi, k == Broadcast::kBScalar, g,
               [&](std::size_t i) { return k == Broadcast::kAScalar ? av.data[0] : av.data[i]; });
  });
}

Var scale(Var a, float s) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (auto& v : out.data) v *= s;
  const int ai = a.id;
  return t.record(std::move(out), {ai}, [ai, s](Tape& tp, int self) {
    const auto& g = tp.grad(self);
    auto& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var relu(Var x) {
  Tape& t = *x.tape;
  Tensor out = ops::relu(x.value());
  const int xi = x.id;
  return t.record(std::move(out), {xi}, [xi](Tape& tp, int self) {
    const auto& g = tp.grad(self);
    const auto& xv = tp.value(xi).data;
    auto& gx = tp.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0f) gx[i] += g[i];
  });
}

Var clamp(Var x, float lo, float hi) {
  require(lo <= hi, "clamp: lo must be <= hi");
  Tape& t = *x.tape;
  Tensor out = x.value();
  for (auto& v : out.data) v = std::min(std::max(v, lo), hi);
  const int xi = x.id;
  return t.record(std::move(out), {xi}, [xi, lo, hi](Tape& tp, int self) {
    const auto& g = tp.grad(self);
    const auto& xv = tp.value(xi).data;
    auto& gx = tp.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > lo && xv[i] < hi) gx[i] += g[i];
  });
}

Var softplus(Var x) {
  Tape& t = *x.tape;
  Tensor out = x.value();
  for (auto& v : out.data) v = v > 20.0f ? v : std::log1p(std::exp(v));
  const int xi = x.id;
  return t.record(std::move(out), {xi}, [xi](Tape& tp, int self) {
    const auto& g = tp.grad(self);
    const auto& xv = tp.value(xi).data;
    auto& gx = tp.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / (1.0f + std::exp(-xv[i]));
  });
}

Var sum(Var x) {
  Tape& t = *x.tape;
  double s = 0.0;
  for (float v : x.value().data) s += v;
  const int xi = x.id;
  return t.record(Tensor::scalar(static_cast<float>(s)), {xi}, [xi](Tape& tp, int self) {
    const float g = tp.grad(self)[0];
    for (auto& v : tp.grad(xi)) v += g;
  });
}

Var mean(Var x) {
  const auto n = x.value().data.size();
  require(n > 0, "mean of empty tensor");
  return scale(sum(x), 1.0f / static_cast<float>(n));
}

Var reshape(Var x, Shape shape) {
  Tape& t = *x.tape;
  require(numel(shape) == x.value().size(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor out(std::move(shape), x.value().data);
  const int xi = x.id;
  return t.record(std::move(out), {xi}, [xi](Tape& tp, int self) {
    const auto& g = tp.grad(self);
    auto& gx = tp.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var global_avg_pool(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  require(xv.rank() == 4, "global_avg_pool: expected NCHW, got " + shape_str(xv.shape));
  const std::int64_t B = xv.dim(0), C = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  Tensor out(Shape{B, C});
  for (std::int64_t i = 0; i < B * C; ++i) {
    double s = 0.0;
    for (std::int64_t p = 0; p < plane; ++p) s += xv.data[static_cast<std::size_t>(i * plane + p)];
    out.data[static_cast<std::size_t>(i)] = static_cast<float>(s / static_cast<double>(plane));
  }
  const int xi = x.id;
  return t.record(std::move(out), {xi}, [xi, plane](Tape& tp, int self) {
    const auto& g = tp.grad(self);
    auto& gx = tp.grad(xi);
    const float inv = 1.0f / static_cast<float>(plane);
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::int64_t p = 0; p < plane; ++p) gx[i * static_cast<std::size_t>(plane) + static_cast<std::size_t>(p)] += g[i] * inv;
  });
}

Var l1_loss(Var prediction, Var target) {
  Tape& t = *prediction.tape;
  const Tensor& a = prediction.value();
  const Tensor& b = target.value();
  require(a.shape == b.shape,
          "l1_loss: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  require(!a.data.empty(), "l1_loss of empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += std::fabs(a.data[i] - b.data[i]);
  const float n = static_cast<float>(a.data.size());
  const int ai = prediction.id, bi = target.id;
  return t.record(Tensor::scalar(static_cast<float>(s / a.data.size())), {ai, bi},
                  [ai, bi, n](Tape& tp, int self) {
                    const float g = tp.grad(self)[0] / n;
                    const auto& av = tp.value(ai).data;
                    const auto& bv = tp.value(bi).data;
                    auto sign = [&](std::size_t i) {
                      const float d = av[i] - bv[i];
                      return d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
                    };
                    if (tp.needs_grad(ai)) {
                      auto& ga = tp.grad(ai);
                      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * sign(i);
                    }
                    if (tp.needs_grad(bi)) {
                      auto& gb = tp.grad(bi);
                      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g * sign(i);
                    }
                  });
}

Var mse_loss(Var prediction, Var target) {
  Tape& t = *prediction.tape;
  const Tensor& a = prediction.value();
  const Tensor& b = target.value();
  require(a.shape == b.shape,
          "mse_loss: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  require(!a.data.empty(), "mse_loss of empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    s += d * d;
  }
  const float n = static_cast<float>(a.data.size());
  const int ai = prediction.id, bi = target.id;
  return t.record(Tensor::scalar(static_cast<float>(s / a.data.size())), {ai, bi},
                  [ai, bi, n](Tape& tp, int self) {
                    const float g = 2.0f * tp.grad(self)[0] / n;
                    const auto& av = tp.value(ai).data;
                    const auto& bv = tp.value(bi).data;
                    if (tp.needs_grad(ai)) {
                      auto& ga = tp.grad(ai);
                      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * (av[i] - bv[i]);
                    }
                    if (tp.needs_grad(bi)) {
                      auto& gb = tp.grad(bi);
                      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g * (av[i] - bv[i]);
                    }
                  });
}

}  // namespace nmsls::ad
