#pragma once

// Finite-difference gradient checking harness shared by the unit tests and
// the acceptance suite. Everything here runs on the 64-bit instantiation.

#include <functional>
#include <string>
#include <vector>

#include "cellgan/rng.hpp"
#include "cellgan/tape.hpp"
#include "oracles.hpp"

namespace gradcheck {

using cellgan::Rng;
using cellgan::ad::Shape;
using cellgan::ad::TapeT;
using cellgan::ad::TensorT;
using cellgan::ad::Var;
using T64 = TensorT<double>;
using Tape64 = TapeT<double>;

struct OpCase {
  std::string name;
  // Builds the op output from leaf vars (one per input tensor).
  std::function<Var(Tape64&, const std::vector<Var>&)> build;
  // Draws one random instance of the input tensors.
  std::function<std::vector<T64>(Rng&)> draw;
};

inline T64 draw_uniform(Rng& r, const Shape& s, double lo, double hi) {
  T64 t = T64::zeros(s);
  for (auto& x : t.v) x = r.uniform(lo, hi);
  return t;
}

// All-distinct values; keeps maxpool/relu/abs away from ties and kinks.
inline T64 draw_distinct(Rng& r, const Shape& s) {
  T64 t = T64::zeros(s);
  for (size_t i = 0; i < t.v.size(); ++i) t.v[i] = r.uniform(-2.0, 2.0) + 1e-3 * (double)i;
  return t;
}

// Scalar probe loss: sum(out * fixed_weights). Weighting makes the pullback
// non-uniform so symmetric op errors cannot cancel.
inline double probe_loss(Tape64& t, Var out, const T64& w) {
  Var wv = t.constant(w);
  return t.val(cellgan::ad::sum_all(t, cellgan::ad::mul(t, out, wv))).item();
}

struct CheckResult {
  double max_rel_err = 0.0;
  int instances = 0;
};

// Checks d(probe)/d(input_i) for every input of the case against central
// finite differences.
inline CheckResult check_op(const OpCase& c, int instances, uint64_t seed, double h = 1e-5) {
  CheckResult res;
  Rng rng(seed);
  for (int inst = 0; inst < instances; ++inst) {
    std::vector<T64> inputs = c.draw(rng);

    // probe weights fixed per instance
    Tape64 probe_tape;
    std::vector<Var> pv;
    for (auto& in : inputs) pv.push_back(probe_tape.leaf(in, false));
    Var pout = c.build(probe_tape, pv);
    T64 w = draw_uniform(rng, probe_tape.val(pout).shape, -1.0, 1.0);

    // autodiff gradients
    Tape64 tape;
    std::vector<Var> lv;
    for (auto& in : inputs) lv.push_back(tape.leaf(in, true));
    Var out = c.build(tape, lv);
    Var loss = cellgan::ad::sum_all(tape, cellgan::ad::mul(tape, out, tape.constant(w)));
    auto grads = cellgan::ad::backward(tape, loss);

    for (size_t i = 0; i < inputs.size(); ++i) {
      auto fd = oracles::finite_difference_grad(
          [&](const T64& x) {
            Tape64 ft;
            std::vector<Var> fv;
            for (size_t j = 0; j < inputs.size(); ++j)
              fv.push_back(ft.leaf(j == i ? x : inputs[j], false));
            return probe_loss(ft, c.build(ft, fv), w);
          },
          inputs[i], h);
      auto it = grads.find(lv[i].id);
      T64 ad_grad = it != grads.end() ? it->second : T64::zeros(inputs[i].shape);
      res.max_rel_err = std::max(res.max_rel_err, oracles::rel_err(ad_grad, fd));
      ++res.instances;
    }
  }
  return res;
}

// The differentiable-op catalogue. Shapes are small so the FD sweeps stay fast.
inline std::vector<OpCase> op_catalogue() {
  using namespace cellgan::ad;
  std::vector<OpCase> cases;
  auto add_case = [&](std::string name, std::function<Var(Tape64&, const std::vector<Var>&)> b,
                      std::function<std::vector<T64>(Rng&)> d) {
    cases.push_back(OpCase{std::move(name), std::move(b), std::move(d)});
  };

  auto pair_draw = [](Rng& r) {
    return std::vector<T64>{draw_distinct(r, {3, 4}), draw_distinct(r, {3, 4})};
  };
  add_case("add", [](Tape64& t, const std::vector<Var>& v) { return add(t, v[0], v[1]); }, pair_draw);
  add_case("sub", [](Tape64& t, const std::vector<Var>& v) { return sub(t, v[0], v[1]); }, pair_draw);
  add_case("mul", [](Tape64& t, const std::vector<Var>& v) { return mul(t, v[0], v[1]); }, pair_draw);
  add_case("div", [](Tape64& t, const std::vector<Var>& v) { return div(t, v[0], v[1]); },
           [](Rng& r) {
             return std::vector<T64>{draw_uniform(r, {3, 4}, -2, 2), draw_uniform(r, {3, 4}, 0.5, 2.0)};
           });
  add_case("add_scalar", [](Tape64& t, const std::vector<Var>& v) { return add_scalar(t, v[0], 0.7); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {3, 4})}; });
  add_case("mul_scalar", [](Tape64& t, const std::vector<Var>& v) { return mul_scalar(t, v[0], -1.3); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {3, 4})}; });
  add_case("pow_scalar", [](Tape64& t, const std::vector<Var>& v) { return pow_scalar(t, v[0], 1.7); },
           [](Rng& r) { return std::vector<T64>{draw_uniform(r, {3, 4}, 0.3, 2.0)}; });
  add_case("pow_scalar_sq", [](Tape64& t, const std::vector<Var>& v) { return pow_scalar(t, v[0], 2.0); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {3, 4})}; });
  add_case("clamp_min", [](Tape64& t, const std::vector<Var>& v) { return clamp_min(t, v[0], 0.5); },
           [](Rng& r) {
             auto x = draw_uniform(r, {3, 4}, -2, 2);
             for (auto& e : x.v)
               if (std::fabs(e - 0.5) < 0.05) e += 0.1;  // stay off the kink
             return std::vector<T64>{x};
           });
  add_case("sqrt", [](Tape64& t, const std::vector<Var>& v) { return sqrt(t, v[0]); },
           [](Rng& r) { return std::vector<T64>{draw_uniform(r, {3, 4}, 0.2, 3.0)}; });
  add_case("log", [](Tape64& t, const std::vector<Var>& v) { return log(t, v[0]); },
           [](Rng& r) { return std::vector<T64>{draw_uniform(r, {3, 4}, 0.2, 3.0)}; });
  add_case("exp", [](Tape64& t, const std::vector<Var>& v) { return exp(t, v[0]); },
           [](Rng& r) { return std::vector<T64>{draw_uniform(r, {3, 4}, -1.5, 1.5)}; });
  add_case("tanh", [](Tape64& t, const std::vector<Var>& v) { return tanh(t, v[0]); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {3, 4})}; });
  add_case("relu", [](Tape64& t, const std::vector<Var>& v) { return relu(t, v[0]); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {3, 4})}; });
  add_case("abs", [](Tape64& t, const std::vector<Var>& v) { return abs(t, v[0]); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {3, 4})}; });
  add_case("matmul", [](Tape64& t, const std::vector<Var>& v) { return matmul(t, v[0], v[1]); },
           [](Rng& r) {
             return std::vector<T64>{draw_distinct(r, {3, 5}), draw_distinct(r, {5, 2})};
           });
  add_case("transpose", [](Tape64& t, const std::vector<Var>& v) { return transpose(t, v[0]); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {3, 4})}; });
  add_case("conv2d_3x3", [](Tape64& t, const std::vector<Var>& v) { return conv2d(t, v[0], v[1], 1); },
           [](Rng& r) {
             return std::vector<T64>{draw_distinct(r, {2, 2, 5, 6}), draw_distinct(r, {3, 2, 3, 3})};
           });
  add_case("conv2d_1x1", [](Tape64& t, const std::vector<Var>& v) { return conv2d(t, v[0], v[1], 0); },
           [](Rng& r) {
             return std::vector<T64>{draw_distinct(r, {2, 3, 4, 4}), draw_distinct(r, {2, 3, 1, 1})};
           });
  add_case("conv2d_input_vjp",
           [](Tape64& t, const std::vector<Var>& v) { return conv2d_input_vjp(t, v[0], v[1], 1); },
           [](Rng& r) {
             return std::vector<T64>{draw_distinct(r, {2, 3, 5, 6}), draw_distinct(r, {3, 2, 3, 3})};
           });
  add_case("conv2d_weight_vjp",
           [](Tape64& t, const std::vector<Var>& v) { return conv2d_weight_vjp(t, v[0], v[1], 1, 3); },
           [](Rng& r) {
             return std::vector<T64>{draw_distinct(r, {2, 2, 5, 6}), draw_distinct(r, {2, 3, 5, 6})};
           });
  add_case("upsample_nn2x", [](Tape64& t, const std::vector<Var>& v) { return upsample_nn2x(t, v[0]); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {2, 3, 3, 4})}; });
  add_case("avgpool2x", [](Tape64& t, const std::vector<Var>& v) { return avgpool2x(t, v[0]); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {2, 3, 4, 6})}; });
  add_case("maxpool2x2", [](Tape64& t, const std::vector<Var>& v) { return maxpool2x2(t, v[0]); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {2, 3, 4, 6})}; });
  add_case("maxpool_scatter",
           [](Tape64& t, const std::vector<Var>& v) {
             return maxpool_scatter(t, t.constant(t.val(v[0])), v[1]);
           },
           [](Rng& r) {
             return std::vector<T64>{draw_distinct(r, {2, 2, 4, 4}), draw_distinct(r, {2, 2, 2, 2})};
           });
  add_case("maxpool_gather",
           [](Tape64& t, const std::vector<Var>& v) {
             return maxpool_gather(t, t.constant(t.val(v[0])), v[1]);
           },
           [](Rng& r) {
             return std::vector<T64>{draw_distinct(r, {2, 2, 4, 4}), draw_distinct(r, {2, 2, 4, 4})};
           });
  add_case("softmax", [](Tape64& t, const std::vector<Var>& v) { return softmax(t, v[0]); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {4, 5})}; });
  add_case("sum_all", [](Tape64& t, const std::vector<Var>& v) { return sum_all(t, v[0]); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {3, 4})}; });
  add_case("bcast_all", [](Tape64& t, const std::vector<Var>& v) { return bcast_all(t, v[0], {3, 4}); },
           [](Rng& r) { return std::vector<T64>{draw_uniform(r, {}, -2, 2)}; });
  add_case("sum_per_sample", [](Tape64& t, const std::vector<Var>& v) { return sum_per_sample(t, v[0]); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {3, 4, 2})}; });
  add_case("bcast_per_sample",
           [](Tape64& t, const std::vector<Var>& v) { return bcast_per_sample(t, v[0], {3, 4}); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {3})}; });
  add_case("sum_cols", [](Tape64& t, const std::vector<Var>& v) { return sum_cols(t, v[0]); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {3, 4})}; });
  add_case("bcast_rows", [](Tape64& t, const std::vector<Var>& v) { return bcast_rows(t, v[0], 3); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {4})}; });
  add_case("sum_channel", [](Tape64& t, const std::vector<Var>& v) { return sum_channel(t, v[0]); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {2, 3, 2, 2})}; });
  add_case("bcast_channel",
           [](Tape64& t, const std::vector<Var>& v) { return bcast_channel(t, v[0], 2, 3, 3); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {4})}; });
  add_case("sum_spatial", [](Tape64& t, const std::vector<Var>& v) { return sum_spatial(t, v[0]); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {2, 3, 2, 2})}; });
  add_case("bcast_spatial",
           [](Tape64& t, const std::vector<Var>& v) { return bcast_spatial(t, v[0], 3, 2); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {2, 4})}; });
  add_case("reshape", [](Tape64& t, const std::vector<Var>& v) { return reshape(t, v[0], {4, 3}); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {3, 4})}; });
  add_case("concat_cols",
           [](Tape64& t, const std::vector<Var>& v) { return concat_cols(t, {v[0], v[1], v[2]}); },
           [](Rng& r) {
             return std::vector<T64>{draw_distinct(r, {3, 2}), draw_distinct(r, {3, 4}),
                                     draw_distinct(r, {3, 1})};
           });
  add_case("slice_cols", [](Tape64& t, const std::vector<Var>& v) { return slice_cols(t, v[0], 1, 4); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {3, 5})}; });
  add_case("embed_cols", [](Tape64& t, const std::vector<Var>& v) { return embed_cols(t, v[0], 2, 7); },
           [](Rng& r) { return std::vector<T64>{draw_distinct(r, {3, 3})}; });
  return cases;
}

// ---- double-backprop check -------------------------------------------------
//
// Builds a random two-conv + dense net D, forms the gradient-penalty style
// scalar F(theta) = mean((||grad_x D(x)||_2 - 1)^2), and compares the autodiff
// gradient dF/dtheta with central finite differences of F. F itself already
// contains one backward pass, so the FD probe differentiates a gradient.

struct SmallNet {
  T64 w1;  // [C1, C0, 3, 3]
  T64 w2;  // [C2, C1, 3, 3]
  T64 wd;  // [C2*H*W, 1]
};

inline SmallNet draw_small_net(Rng& r, int c0 = 1, int c1 = 2, int c2 = 2, int hw = 4) {
  SmallNet n;
  n.w1 = draw_uniform(r, {c1, c0, 3, 3}, -0.6, 0.6);
  n.w2 = draw_uniform(r, {c2, c1, 3, 3}, -0.6, 0.6);
  n.wd = draw_uniform(r, {c2 * hw * hw, 1}, -0.6, 0.6);
  return n;
}

// D maps [N,C0,H,W] -> [N]; a smooth-ish conv net (tanh keeps it C^inf except
// for the relu-free path, which keeps the FD probe stable).
inline Var small_net_out(Tape64& t, Var x, Var w1, Var w2, Var wd) {
  using namespace cellgan::ad;
  Var h1 = tanh(t, conv2d(t, x, w1, 1));
  Var h2 = tanh(t, conv2d(t, h1, w2, 1));
  const auto& s = t.val(h2).shape;
  Var flat = reshape(t, h2, {s[0], s[1] * s[2] * s[3]});
  Var o = matmul(t, flat, wd);
  return reshape(t, o, {s[0]});
}

inline double penalty_value(const SmallNet& n, const T64& x) {
  using namespace cellgan::ad;
  Tape64 t;
  Var xv = t.leaf(x, true);
  Var w1 = t.leaf(n.w1, false), w2 = t.leaf(n.w2, false), wd = t.leaf(n.wd, false);
  Var out = small_net_out(t, xv, w1, w2, wd);
  Var norm = grad_norm(t, out, xv, 2.0);
  Var pen = mean_all(t, pow_scalar(t, add_scalar(t, norm, -1.0), 2.0));
  return t.val(pen).item();
}

inline double double_backprop_rel_err(uint64_t seed) {
  using namespace cellgan::ad;
  Rng r(seed);
  SmallNet n = draw_small_net(r);
  T64 x = draw_uniform(r, {3, 1, 4, 4}, -1.0, 1.0);

  // autodiff: gradient of the penalty w.r.t. all three weight tensors
  Tape64 t;
  Var xv = t.leaf(x, true);
  Var w1 = t.leaf(n.w1, true), w2 = t.leaf(n.w2, true), wd = t.leaf(n.wd, true);
  Var out = small_net_out(t, xv, w1, w2, wd);
  Var norm = grad_norm(t, out, xv, 2.0);
  Var pen = mean_all(t, pow_scalar(t, add_scalar(t, norm, -1.0), 2.0));
  auto grads = backward(t, pen);

  double worst = 0.0;
  const Var leaves[3] = {w1, w2, wd};
  const T64* tensors[3] = {&n.w1, &n.w2, &n.wd};
  for (int i = 0; i < 3; ++i) {
    auto fd = oracles::finite_difference_grad(
        [&](const T64& wt) {
          SmallNet m = n;
          (i == 0 ? m.w1 : i == 1 ? m.w2 : m.wd) = wt;
          return penalty_value(m, x);
        },
        *tensors[i], 1e-5);
    auto it = grads.find(leaves[i].id);
    T64 g = it != grads.end() ? it->second : T64::zeros(tensors[i]->shape);
    worst = std::max(worst, oracles::rel_err(g, fd));
  }
  return worst;
}

}  // namespace gradcheck
