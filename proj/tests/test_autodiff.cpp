#include <doctest.h>

#include <cmath>

#include "cellgan/tape.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace cellgan;
using namespace cellgan::ad;
using gradcheck::draw_distinct;
using gradcheck::draw_uniform;
using T64 = TensorT<double>;

TEST_CASE("relu forward") {
  Tape64 t;
  Var x = t.constant(T64({3}, {-1.0, 0.0, 2.0}));
  auto y = t.val(relu(t, x));
  CHECK(y.v == std::vector<double>{0.0, 0.0, 2.0});
}

TEST_CASE("softmax of equal logits is uniform") {
  Tape64 t;
  Var x = t.constant(T64::zeros({1, 5}));
  auto y = t.val(softmax(t, x));
  for (double v : y.v) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and are translation invariant") {
  Rng r(11);
  Tape64 t;
  T64 x = draw_uniform(r, {6, 5}, -3, 3);
  T64 xs = x;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 5; ++j) xs.v[(size_t)i * 5 + j] += 17.25;  // per-row constant
  auto y = t.val(softmax(t, t.constant(x)));
  auto ys = t.val(softmax(t, t.constant(xs)));
  for (int i = 0; i < 6; ++i) {
    double s = 0;
    for (int j = 0; j < 5; ++j) s += y.v[(size_t)i * 5 + j];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  for (size_t i = 0; i < y.v.size(); ++i)
    CHECK(y.v[i] == doctest::Approx(ys.v[i]).epsilon(1e-6));
}

TEST_CASE("conv2d of ones: center 9, corner 4") {
  Tape64 t;
  Var x = t.constant(T64::full({1, 1, 5, 5}, 1.0));
  Var w = t.constant(T64::full({1, 1, 3, 3}, 1.0));
  auto y = t.val(conv2d(t, x, w, 1));
  CHECK(y.shape == Shape{1, 1, 5, 5});
  CHECK(y.v[2 * 5 + 2] == doctest::Approx(9.0));
  CHECK(y.v[0] == doctest::Approx(4.0));
  CHECK(y.v[4] == doctest::Approx(4.0));
  CHECK(y.v[24] == doctest::Approx(4.0));
}

TEST_CASE("shape errors name the op and dims") {
  Tape64 t;
  Var a = t.constant(T64::zeros({2, 3}));
  Var b = t.constant(T64::zeros({3, 3}));
  CHECK_THROWS_WITH_AS(add(t, a, b), doctest::Contains("add"), ShapeError);
  CHECK_THROWS_AS(matmul(t, a, a), ShapeError);
  CHECK_THROWS_AS(log(t, t.constant(T64({1}, {-1.0}))), NumericError);
}

TEST_CASE("backward of sum is ones; backward of sum of squares is 2x") {
  Tape64 t;
  Var x = t.leaf(T64({3}, {1.0, 2.0, 3.0}), true);
  auto g1 = backward(t, sum_all(t, x));
  CHECK(g1.at(x.id).v == std::vector<double>{1.0, 1.0, 1.0});

  Tape64 t2;
  Var x2 = t2.leaf(T64({3}, {1.0, 2.0, 3.0}), true);
  Var loss = sum_all(t2, mul(t2, x2, x2));
  auto g2 = backward(t2, loss);
  CHECK(g2.at(x2.id).v == std::vector<double>{2.0, 4.0, 6.0});
}

TEST_CASE("non-scalar loss is rejected") {
  Tape64 t;
  Var x = t.leaf(T64::zeros({3}), true);
  CHECK_THROWS_AS(backward(t, x), ShapeError);
}

TEST_CASE("gradient accumulates across fan-out") {
  Tape64 t;
  Var x = t.leaf(T64({2}, {1.5, -0.5}), true);
  Var y = add(t, mul(t, x, x), x);  // x^2 + x -> grad 2x + 1
  auto g = backward(t, sum_all(t, y));
  CHECK(g.at(x.id).v[0] == doctest::Approx(4.0));
  CHECK(g.at(x.id).v[1] == doctest::Approx(0.0));
}

TEST_CASE("two-layer relu net gradient matches finite differences") {
  Rng r(3);
  T64 w1 = draw_uniform(r, {4, 6}, -0.8, 0.8);
  T64 w2 = draw_uniform(r, {6, 1}, -0.8, 0.8);
  T64 x = draw_distinct(r, {3, 4});

  auto loss_of = [&](const T64& w1v, const T64& w2v, const T64& xv) {
    Tape64 t;
    Var h = relu(t, matmul(t, t.constant(xv), t.constant(w1v)));
    Var o = matmul(t, h, t.constant(w2v));
    return t.val(sum_all(t, mul(t, o, o))).item();
  };

  Tape64 t;
  Var w1v = t.leaf(w1, true), w2v = t.leaf(w2, true), xv = t.leaf(x, true);
  Var h = relu(t, matmul(t, xv, w1v));
  Var o = matmul(t, h, w2v);
  auto grads = backward(t, sum_all(t, mul(t, o, o)));

  auto fd_w1 = oracles::finite_difference_grad(
      [&](const T64& v) { return loss_of(v, w2, x); }, w1, 1e-5);
  auto fd_w2 = oracles::finite_difference_grad(
      [&](const T64& v) { return loss_of(w1, v, x); }, w2, 1e-5);
  auto fd_x = oracles::finite_difference_grad(
      [&](const T64& v) { return loss_of(w1, w2, v); }, x, 1e-5);
  CHECK(oracles::rel_err(grads.at(w1v.id), fd_w1) < 1e-4);
  CHECK(oracles::rel_err(grads.at(w2v.id), fd_w2) < 1e-4);
  CHECK(oracles::rel_err(grads.at(xv.id), fd_x) < 1e-4);
}

TEST_CASE("finite difference oracle sanity") {
  // f = sum -> all ones
  T64 x({3}, {0.3, -1.2, 2.0});
  auto g = oracles::finite_difference_grad(
      [](const T64& v) {
        double s = 0;
        for (double e : v.v) s += e;
        return s;
      },
      x, 1e-3);
  for (double e : g.v) CHECK(e == doctest::Approx(1.0).epsilon(1e-9));

  // f(x) = x^2 at 3 -> 6
  T64 s({1}, {3.0});
  auto g2 = oracles::finite_difference_grad(
      [](const T64& v) { return v.v[0] * v.v[0]; }, s, 1e-4);
  CHECK(g2.v[0] == doctest::Approx(6.0).epsilon(1e-6));
}

TEST_CASE("gradcheck across the op catalogue (2 instances each)") {
  for (const auto& c : gradcheck::op_catalogue()) {
    auto res = gradcheck::check_op(c, 2, 1234);
    INFO("op ", c.name);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("grad_norm of a linear map is the weight norm") {
  Tape64 t;
  Var x = t.leaf(draw_uniform(*(new Rng(5)), {4, 2}, -2, 2), true);
  Var w = t.constant(T64({2, 1}, {3.0, 4.0}));
  Var out = reshape(t, matmul(t, x, w), {4});
  Var n = grad_norm(t, out, x, 2.0);
  for (double v : t.val(n).v) CHECK(v == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("grad_norm of a constant output is ~0 (sqrt guard)") {
  Tape64 t;
  Var x = t.leaf(T64::zeros({4, 2}), true);
  Var out = t.constant(T64::zeros({4}));
  Var n = grad_norm(t, out, x, 2.0);
  for (double v : t.val(n).v) CHECK(v == doctest::Approx(1e-6).epsilon(1e-3));
}

TEST_CASE("grad_norm rejects p <= 0") {
  Tape64 t;
  Var x = t.leaf(T64::zeros({2, 2}), true);
  Var out = t.constant(T64::zeros({2}));
  CHECK_THROWS_AS(grad_norm(t, out, x, 0.0), ConfigError);
}

TEST_CASE("double backprop of the penalty matches finite differences of the gradient") {
  for (uint64_t seed : {101ull, 202ull}) {
    CHECK(gradcheck::double_backprop_rel_err(seed) < 1e-3);
  }
}

TEST_CASE("graph replay determinism") {
  auto run = [](uint64_t seed) {
    Rng r(seed);
    Tape64 t;
    Var x = t.leaf(draw_uniform(r, {2, 3, 4, 4}, -1, 1), true);
    Var w = t.leaf(draw_uniform(r, {2, 3, 3, 3}, -1, 1), true);
    Var y = relu(t, conv2d(t, x, w, 1));
    Var loss = mean_all(t, mul(t, y, y));
    auto g = backward(t, loss);
    return std::make_pair(t.val(loss).item(), g.at(x.id).v);
  };
  auto a = run(42), b = run(42);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("non-differentiable mode rolls the tape back") {
  Tape64 t;
  t.set_differentiable(false);
  Var x = t.leaf(T64({2}, {1.0, 2.0}), true);
  Var loss = sum_all(t, mul(t, x, x));
  const size_t before = t.size();
  auto g = backward(t, loss);
  CHECK(t.size() == before);
  CHECK(g.at(x.id).v == std::vector<double>{2.0, 4.0});
}

TEST_CASE("maxpool ties break toward the first element in scan order") {
  Tape64 t;
  T64 x = T64::zeros({1, 1, 2, 2});
  x.v = {1.0, 1.0, 1.0, 1.0};
  Var xv = t.leaf(x, true);
  Var y = maxpool2x2(t, xv);
  CHECK(t.val(y).v[0] == 1.0);
  auto g = backward(t, sum_all(t, y));
  CHECK(g.at(xv.id).v == std::vector<double>{1.0, 0.0, 0.0, 0.0});
}
