// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "nmsls/tensor.hpp"

// Reverse-mode automatic differentiation over a linear tape.
//
// Nodes are appended in evaluation order, so parents always precede children
// and a single reverse sweep visits every node once. Gradients of parameter
// leaves are accumulated into the bound Tensor's `grad` buffer.
namespace nmsls::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  bool valid() const { return tape != nullptr && id >= 0; }
};

class Tape {
 public:
  // Called during the reverse sweep with the node id; reads grad(id) and
  // accumulates into grad(parent) for each parent that needs a gradient.
  using BackwardFn = std::function<void(Tape&, int)>;

  // With record_grad=false no backward closures are stored (inference mode).
  explicit Tape(bool record_grad = true) : record_grad_(record_grad) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t);
  // Leaf bound to a parameter; gradients flow into `t.grad` when
  // `t.requires_grad` is set.
  Var param(Tensor& t);

  Var record(Tensor value, std::vector<int> parents, BackwardFn fn);

  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  const std::vector<int>& parents(int id) const { return nodes_.at(static_cast<std::size_t>(id)).parents; }
  bool needs_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).needs_grad; }
  // Lazily allocated, zero-initialised gradient buffer for a node.
  std::vector<float>& grad(int id);

  // loss must be a scalar (exactly one element).
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return record_grad_; }

 private:
  struct Node {
    Tensor value;
    std::vector<float> grad;
    std::vector<int> parents;
    BackwardFn backward;
    Tensor* param = nullptr;
    bool needs_grad = false;
  };

  std::deque<Node> nodes_;
  bool record_grad_;
};

// --- primitive ops -------------------------------------------------------

Var conv2d(Var input, Var weight, int stride, int padding);
Var bias_add(Var x, Var bias);
Var pixel_shuffle(Var x, int r);
Var pixel_unshuffle(Var x, int r);

// Elementwise binary ops accept equal shapes or a one-element operand.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float s);

Var relu(Var x);
Var clamp(Var x, float lo, float hi);
Var softplus(Var x);

Var sum(Var x);
Var mean(Var x);
Var reshape(Var x, Shape shape);
// [B,C,H,W] -> [B,C]
Var global_avg_pool(Var x);

// Scalar means over all elements.
Var l1_loss(Var prediction, Var target);
Var mse_loss(Var prediction, Var target);

}  // namespace nmsls::ad
