// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "nmsls/autodiff.hpp"
#include "nmsls/optim.hpp"
#include "nmsls/tensor_ops.hpp"
#include "oracles.hpp"

using namespace nmsls;
using oracle::random_tensor;

TEST_CASE("tensor shape validation") {
  CHECK(numel(Shape{2, 3, 4}) == 24);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>{1, 2, 3}), std::invalid_argument);
  Tensor t(Shape{2, 2});
  t.requires_grad = true;
  CHECK(t.ensure_grad().size() == t.data.size());
}

TEST_CASE("conv2d examples") {
  SUBCASE("1x1 kernel of 2") {
    Tensor x(Shape{1, 1, 3, 3}, 1.0f);
    Tensor w(Shape{1, 1, 1, 1}, 2.0f);
    Tensor y = ops::conv2d(x, w, 1, 0);
    CHECK(y.shape == Shape{1, 1, 3, 3});
    for (float v : y.data) CHECK(v == 2.0f);
  }
  SUBCASE("full-window sum") {
    Tensor x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor w(Shape{1, 1, 2, 2}, 1.0f);
    Tensor y = ops::conv2d(x, w, 1, 0);
    CHECK(y.shape == Shape{1, 1, 1, 1});
    CHECK(y.data[0] == 10.0f);
  }
  SUBCASE("random vs naive loops") {
    Rng rng(1);
    Tensor x = random_tensor(rng, {2, 4, 8, 8});
    Tensor w = random_tensor(rng, {6, 4, 3, 3});
    CHECK(oracle::max_abs_diff(ops::conv2d(x, w, 1, 1).data, oracle::naive_conv2d(x, w, 1, 1).data) <= 1e-5);
    CHECK(oracle::max_abs_diff(ops::conv2d(x, w, 2, 1).data, oracle::naive_conv2d(x, w, 2, 1).data) <= 1e-5);
    CHECK(oracle::max_abs_diff(ops::conv2d(x, w, 2, 0).data, oracle::naive_conv2d(x, w, 2, 0).data) <= 1e-5);
  }
  SUBCASE("rejections") {
    Tensor x(Shape{1, 3, 4, 4});
    CHECK_THROWS_AS(ops::conv2d(x, Tensor(Shape{2, 4, 3, 3}), 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(ops::conv2d(x, Tensor(Shape{2, 3, 3, 3}), 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(ops::conv2d(Tensor(Shape{3, 4, 4}), Tensor(Shape{2, 3, 3, 3}), 1, 1), std::invalid_argument);
    try {
      ops::conv2d(x, Tensor(Shape{2, 4, 3, 3}), 1, 1);
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("[1,3,4,4]") != std::string::npos);
    }
  }
}

TEST_CASE("pixel_shuffle examples") {
  Tensor x(Shape{1, 4, 1, 1}, {1, 2, 3, 4});
  Tensor y = ops::pixel_shuffle(x, 2);
  CHECK(y.shape == Shape{1, 1, 2, 2});
  CHECK(y.data == std::vector<float>{1, 2, 3, 4});
  Rng rng(2);
  Tensor r = random_tensor(rng, {1, 8, 3, 3});
  CHECK(ops::pixel_shuffle(r, 1).data == r.data);
  Tensor back = ops::pixel_unshuffle(ops::pixel_shuffle(r, 2), 2);
  CHECK(back.shape == r.shape);
  CHECK(back.data == r.data);
  CHECK_THROWS_AS(ops::pixel_shuffle(Tensor(Shape{1, 6, 2, 2}), 2), std::invalid_argument);
}

TEST_CASE("elementwise examples") {
  ad::Tape tape;
  Rng rng(3);
  Tensor xv = random_tensor(rng, {2, 3});
  ad::Var x = tape.constant(xv);
  CHECK(ad::l1_loss(x, x).value().item() == 0.0f);
  ad::Var a = tape.constant(Tensor(Shape{2}, {1, 3}));
  ad::Var b = tape.constant(Tensor(Shape{2}, {1, 1}));
  CHECK(ad::mse_loss(a, b).value().item() == doctest::Approx(2.0));
  CHECK_THROWS_AS(ad::add(x, a), std::invalid_argument);
  CHECK_THROWS_AS(ad::mul(x, tape.constant(Tensor(Shape{3, 2}))), std::invalid_argument);
  // scalar-with-tensor broadcast in both positions
  ad::Var s = tape.constant(Tensor::scalar(2.0f));
  CHECK(ad::mul(s, x).value().data[1] == doctest::Approx(2.0f * xv.data[1]));
  CHECK(ad::add(x, s).value().data[4] == doctest::Approx(xv.data[4] + 2.0f));
}

TEST_CASE("clamp backward: 1 strictly inside, 0 outside and at the bounds") {
  Tensor x(Shape{5}, {-2.0f, -1.0f, 0.25f, 1.0f, 3.0f});
  x.requires_grad = true;
  ad::Tape tape;
  tape.backward(ad::sum(ad::clamp(tape.param(x), -1.0f, 1.0f)));
  CHECK(*x.grad == std::vector<float>{0, 0, 1, 0, 0});

  Rng rng(4);
  Tensor y = random_tensor(rng, {16}, -2.0f, 2.0f);
  for (auto& v : y.data)
    if (std::abs(std::abs(v) - 1.0f) < 0.01f) v = 0.5f;  // keep off the kinks
  auto gc = oracle::grad_check({&y}, [&](ad::Tape& t) {
    return oracle::project(t, ad::clamp(t.param(y), -1.0f, 1.0f));
  });
  CHECK(gc.rel_error <= 1e-3);
}

TEST_CASE("backward examples") {
  SUBCASE("sum") {
    Tensor w(Shape{3}, {1, 2, 3});
    w.requires_grad = true;
    ad::Tape tape;
    tape.backward(ad::sum(tape.param(w)));
    CHECK(*w.grad == std::vector<float>{1, 1, 1});
  }
  SUBCASE("sum of squares") {
    Tensor w(Shape{2}, {1, 2});
    w.requires_grad = true;
    ad::Tape tape;
    ad::Var p = tape.param(w);
    tape.backward(ad::sum(ad::mul(p, p)));
    CHECK(*w.grad == std::vector<float>{2, 4});
  }
  SUBCASE("non-scalar loss rejected") {
    Tensor w(Shape{2}, {1, 2});
    w.requires_grad = true;
    ad::Tape tape;
    CHECK_THROWS_AS(tape.backward(tape.param(w)), std::invalid_argument);
  }
  SUBCASE("gradients accumulate across tapes until zeroed") {
    Tensor w(Shape{2}, {1, 2});
    w.requires_grad = true;
    for (int i = 0; i < 2; ++i) {
      ad::Tape tape;
      tape.backward(ad::sum(tape.param(w)));
    }
    CHECK(*w.grad == std::vector<float>{2, 2});
    w.zero_grad();
    CHECK(*w.grad == std::vector<float>{0, 0});
  }
  SUBCASE("parents precede children") {
    Tensor w(Shape{2}, {1, 2});
    ad::Tape tape;
    ad::Var p = tape.param(w);
    ad::Var q = ad::relu(ad::add(p, p));
    ad::Var s = ad::sum(q);
    for (int id = 0; id < static_cast<int>(tape.size()); ++id)
      for (int par : tape.parents(id)) CHECK(par < id);
    CHECK(s.id == static_cast<int>(tape.size()) - 1);
  }
}

TEST_CASE("three-layer conv net gradients match finite differences") {
  Rng rng(5);
  Tensor x = random_tensor(rng, {2, 3, 6, 6});
  Tensor w1 = random_tensor(rng, {4, 3, 3, 3}, -0.5f, 0.5f), b1 = random_tensor(rng, {4}, -0.1f, 0.1f);
  Tensor w2 = random_tensor(rng, {8, 4, 3, 3}, -0.5f, 0.5f);
  Tensor w3 = random_tensor(rng, {3, 2, 3, 3}, -0.5f, 0.5f);
  Tensor target = random_tensor(rng, {2, 3, 12, 12});
  auto gc = oracle::grad_check({&w1, &b1, &w2, &w3, &x}, [&](ad::Tape& t) {
    ad::Var h = ad::relu(ad::bias_add(ad::conv2d(t.param(x), t.param(w1), 1, 1), t.param(b1)));
    h = ad::pixel_shuffle(ad::conv2d(h, t.param(w2), 1, 1), 2);
    h = ad::conv2d(h, t.param(w3), 1, 1);
    return ad::mse_loss(h, t.constant(target));
  });
  CHECK(gc.rel_error <= 1e-3);
}

TEST_CASE("per-op finite-difference checks") {
  Rng rng(6);
  Tensor a = random_tensor(rng, {2, 4, 5, 5});
  Tensor b = random_tensor(rng, {2, 4, 5, 5});
  for (auto& v : a.data)
    if (std::abs(v) < 0.01f) v = 0.3f;
  Tensor s = Tensor::scalar(0.7f);
  Tensor w = random_tensor(rng, {3, 4, 3, 3});
  Tensor bias = random_tensor(rng, {4});
  const std::vector<std::pair<const char*, oracle::LossFn>> cases = {
      {"conv stride 2", [&](ad::Tape& t) { return oracle::project(t, ad::conv2d(t.param(a), t.param(w), 2, 1)); }},
      {"bias_add", [&](ad::Tape& t) { return oracle::project(t, ad::bias_add(t.param(a), t.param(bias))); }},
      {"pixel_unshuffle",
       [&](ad::Tape& t) {
         Tensor& x = a;
         return oracle::project(t, ad::pixel_unshuffle(ad::reshape(t.param(x), {2, 4, 5, 5}), 1));
       }},
      {"add/sub", [&](ad::Tape& t) { return oracle::project(t, ad::sub(ad::add(t.param(a), t.param(b)), t.param(s))); }},
      {"mul", [&](ad::Tape& t) { return oracle::project(t, ad::mul(ad::mul(t.param(a), t.param(b)), t.param(s))); }},
      {"scale", [&](ad::Tape& t) { return oracle::project(t, ad::scale(t.param(a), -1.5f)); }},
      {"relu", [&](ad::Tape& t) { return oracle::project(t, ad::relu(t.param(a))); }},
      {"softplus", [&](ad::Tape& t) { return oracle::project(t, ad::softplus(t.param(a))); }},
      {"mean", [&](ad::Tape& t) { return ad::mean(ad::mul(t.param(a), t.param(b))); }},
      {"global_avg_pool", [&](ad::Tape& t) { return oracle::project(t, ad::global_avg_pool(t.param(a))); }},
  };
  for (const auto& [name, fn] : cases) {
    const std::string op = name;
    CAPTURE(op);
    auto gc = oracle::grad_check({&a, &b, &s, &w, &bias}, fn);
    CHECK(gc.rel_error <= 1e-3);
  }
  // Losses on few elements with |a - b| well away from 0 so the mean stays
  // resolvable in f32.
  Tensor la = random_tensor(rng, {2, 3}), lb = la;
  for (std::size_t i = 0; i < lb.data.size(); ++i) lb.data[i] += (i % 2 ? 0.5f : -0.5f) * (1.0f + la.data[i] * 0.1f);
  CHECK(oracle::grad_check({&la, &lb}, [&](ad::Tape& t) { return ad::l1_loss(t.param(la), t.param(lb)); }).rel_error <=
        1e-3);
  CHECK(oracle::grad_check({&la, &lb}, [&](ad::Tape& t) { return ad::mse_loss(t.param(la), t.param(lb)); }).rel_error <=
        1e-3);
  // pixel shuffle needs C divisible by r^2
  Tensor p = random_tensor(rng, {1, 8, 3, 3});
  auto gc = oracle::grad_check({&p}, [&](ad::Tape& t) { return oracle::project(t, ad::pixel_shuffle(t.param(p), 2)); });
  CHECK(gc.rel_error <= 1e-3);
}

TEST_CASE("backward is linear") {
  Rng rng(7);
  Tensor x = random_tensor(rng, {1, 2, 4, 4});
  Tensor w = random_tensor(rng, {2, 2, 3, 3});
  Tensor t1 = random_tensor(rng, {1, 2, 4, 4}), t2 = random_tensor(rng, {1, 2, 4, 4});
  auto grad_of = [&](float ca, float cb) {
    w.requires_grad = true;
    w.grad.reset();
    ad::Tape tape;
    ad::Var y = ad::conv2d(tape.constant(x), tape.param(w), 1, 1);
    ad::Var l1 = ad::mse_loss(y, tape.constant(t1));
    ad::Var l2 = ad::l1_loss(y, tape.constant(t2));
    tape.backward(ad::add(ad::scale(l1, ca), ad::scale(l2, cb)));
    return *w.grad;
  };
  const auto g1 = grad_of(1, 0), g2 = grad_of(0, 1), g = grad_of(2.0f, -3.0f);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(2.0f * g1[i] - 3.0f * g2[i]).epsilon(1e-4));
}

TEST_CASE("optimizer examples") {
  SUBCASE("sgd") {
    Tensor w(Shape{1}, {1.0f});
    w.requires_grad = true;
    w.ensure_grad()[0] = 2.0f;
    Optimizer opt(OptimizerKind::kSgd, {&w}, 0.1f);
    opt.step();
    CHECK(w.data[0] == doctest::Approx(0.8f));
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    for (auto kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
      Tensor w(Shape{3}, {1, -2, 3});
      w.requires_grad = true;
      w.ensure_grad();
      Optimizer opt(kind, {&w}, 0.1f);
      opt.step();
      CHECK(w.data == std::vector<float>{1, -2, 3});
    }
  }
  SUBCASE("adam first step moves by about lr") {
    Tensor w(Shape{1}, {1.0f});
    w.requires_grad = true;
    w.ensure_grad()[0] = 1.0f;
    Optimizer opt(OptimizerKind::kAdam, {&w}, 1e-3f);
    opt.step();
    // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
    CHECK(w.data[0] == doctest::Approx(1.0 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-7));
  }
}

TEST_CASE("seeded training steps are bit-identical") {
  auto run = [] {
    Rng rng(8);
    Tensor x = random_tensor(rng, {2, 3, 6, 6});
    Tensor w = random_tensor(rng, {3, 3, 3, 3});
    Tensor t = random_tensor(rng, {2, 3, 6, 6});
    w.requires_grad = true;
    Optimizer opt(OptimizerKind::kAdam, {&w}, 1e-2f);
    for (int i = 0; i < 20; ++i) {
      ad::Tape tape;
      ad::Var y = ad::relu(ad::conv2d(tape.constant(x), tape.param(w), 1, 1));
      opt.zero_grad();
      tape.backward(ad::l1_loss(y, tape.constant(t)));
      opt.step();
    }
    return w.data;
  };
  CHECK(run() == run());
}

TEST_CASE("inference tape records no gradients") {
  Tensor w(Shape{2}, {1, 2});
  w.requires_grad = true;
  ad::Tape tape(false);
  ad::Var s = ad::sum(ad::mul(tape.param(w), tape.param(w)));
  CHECK(s.value().item() == 5.0f);
  CHECK_FALSE(tape.recording());
}
