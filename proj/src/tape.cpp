#include "cellgan/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cellgan::ad {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::MulScalar: return "mul_scalar";
    case OpKind::PowScalar: return "pow_scalar";
    case OpKind::ClampMin: return "clamp_min";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Log: return "log";
    case OpKind::Exp: return "exp";
    case OpKind::Tanh: return "tanh";
    case OpKind::Relu: return "relu";
    case OpKind::Abs: return "abs";
    case OpKind::GtZeroMask: return "gt_zero_mask";
    case OpKind::SignMask: return "sign_mask";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Conv2dInputVjp: return "conv2d_input_vjp";
    case OpKind::Conv2dWeightVjp: return "conv2d_weight_vjp";
    case OpKind::UpsampleNn2x: return "upsample_nn2x";
    case OpKind::AvgPool2x: return "avgpool2x";
    case OpKind::MaxPool2x2: return "maxpool2x2";
    case OpKind::MaxPoolScatter: return "maxpool_scatter";
    case OpKind::MaxPoolGather: return "maxpool_gather";
    case OpKind::Softmax: return "softmax";
    case OpKind::SumAll: return "sum_all";
    case OpKind::BcastAll: return "bcast_all";
    case OpKind::SumPerSample: return "sum_per_sample";
    case OpKind::BcastPerSample: return "bcast_per_sample";
    case OpKind::SumCols: return "sum_cols";
    case OpKind::BcastRows: return "bcast_rows";
    case OpKind::SumChannel: return "sum_channel";
    case OpKind::BcastChannel: return "bcast_channel";
    case OpKind::SumSpatial: return "sum_spatial";
    case OpKind::BcastSpatial: return "bcast_spatial";
    case OpKind::Reshape: return "reshape";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::EmbedCols: return "embed_cols";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_fail(OpKind op, const std::string& detail) {
  throw ShapeError(std::string(op_name(op)) + ": " + detail);
}

void need_rank(OpKind op, const Shape& s, int r) {
  if ((int)s.size() != r)
    shape_fail(op, strfmt("expected rank %d, got %s", r, shape_str(s).c_str()));
}

void need_same(OpKind op, const Shape& a, const Shape& b) {
  if (a != b)
    shape_fail(op, "operand shapes differ: " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

// ---- tape core ----------------------------------------------------------

template <typename S>
const typename TapeT<S>::Node& TapeT<S>::node(Var v) const {
  if (!v.valid() || (size_t)v.id >= nodes_.size())
    throw std::logic_error("tape: invalid var handle");
  return nodes_[(size_t)v.id];
}

template <typename S>
Var TapeT<S>::leaf(TensorT<S> t, bool requires_grad) {
  Var v = emit(OpKind::Leaf, {}, {}, std::move(t));
  nodes_[(size_t)v.id].requires_grad = requires_grad;
  return v;
}

template <typename S>
Var TapeT<S>::emit(OpKind op, std::vector<int32_t> inputs, OpAttrs attrs, TensorT<S> val) {
#ifndef NDEBUG
  if (!val.all_finite())
    throw NumericError(std::string("non-finite value produced by op ") + op_name(op));
#endif
  bool rg = false;
  for (int32_t id : inputs) {
    if ((size_t)id >= nodes_.size()) throw std::logic_error("tape: input from the future");
    rg = rg || nodes_[(size_t)id].requires_grad;
  }
  if (op == OpKind::GtZeroMask || op == OpKind::SignMask) rg = false;
  nodes_.push_back(Node{op, std::move(inputs), std::move(attrs), std::move(val), rg});
  return Var{(int32_t)nodes_.size() - 1};
}

template <typename S>
void TapeT<S>::truncate(size_t n) {
  if (n > nodes_.size()) throw std::logic_error("tape: truncate beyond end");
  nodes_.resize(n);
}

// ---- forward kernels ----------------------------------------------------

namespace {

template <typename S, typename F>
TensorT<S> map1(const TensorT<S>& a, F f) {
  TensorT<S> out = a;
  for (auto& x : out.v) x = f(x);
  return out;
}

template <typename S, typename F>
TensorT<S> map2(const TensorT<S>& a, const TensorT<S>& b, F f) {
  TensorT<S> out = a;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = f(a.v[i], b.v[i]);
  return out;
}

template <typename S>
TensorT<S> matmul_fwd(const TensorT<S>& a, const TensorT<S>& b) {
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  TensorT<S> y = TensorT<S>::zeros({n, m});
  const S* pa = a.data();
  const S* pb = b.data();
  S* py = y.data();
  for (int i = 0; i < n; ++i) {
    const S* arow = pa + (size_t)i * k;
    S* yrow = py + (size_t)i * m;
    for (int kk = 0; kk < k; ++kk) {
      const S av = arow[kk];
      const S* brow = pb + (size_t)kk * m;
      for (int j = 0; j < m; ++j) yrow[j] += av * brow[j];
    }
  }
  return y;
}

template <typename S>
TensorT<S> conv2d_fwd(const TensorT<S>& x, const TensorT<S>& w, int pad) {
  const int N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Co = w.dim(0), K = w.dim(2);
  const int Ho = H + 2 * pad - K + 1, Wo = W + 2 * pad - K + 1;
  TensorT<S> y = TensorT<S>::zeros({N, Co, Ho, Wo});
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Co; ++co) {
      S* yp = y.data() + ((size_t)n * Co + co) * Ho * Wo;
      for (int ci = 0; ci < Ci; ++ci) {
        const S* xp = x.data() + ((size_t)n * Ci + ci) * H * W;
        const S* wp = w.data() + ((size_t)co * Ci + ci) * K * K;
        for (int kh = 0; kh < K; ++kh) {
          for (int kw = 0; kw < K; ++kw) {
            const S wv = wp[kh * K + kw];
            if (wv == S(0)) continue;
            for (int oh = 0; oh < Ho; ++oh) {
              const int ih = oh + kh - pad;
              if (ih < 0 || ih >= H) continue;
              const int ow_lo = std::max(0, pad - kw);
              const int ow_hi = std::min(Wo, W + pad - kw);
              const S* xrow = xp + (size_t)ih * W + (ow_lo + kw - pad);
              S* yrow = yp + (size_t)oh * Wo + ow_lo;
              for (int i = 0; i < ow_hi - ow_lo; ++i) yrow[i] += wv * xrow[i];
            }
          }
        }
      }
    }
  }
  return y;
}

template <typename S>
TensorT<S> conv2d_dx_fwd(const TensorT<S>& gy, const TensorT<S>& w, int pad) {
  const int N = gy.dim(0), Co = gy.dim(1), Ho = gy.dim(2), Wo = gy.dim(3);
  const int Ci = w.dim(1), K = w.dim(2);
  const int H = Ho + K - 1 - 2 * pad, W = Wo + K - 1 - 2 * pad;
  TensorT<S> gx = TensorT<S>::zeros({N, Ci, H, W});
  for (int n = 0; n < N; ++n) {
    for (int ci = 0; ci < Ci; ++ci) {
      S* gxp = gx.data() + ((size_t)n * Ci + ci) * H * W;
      for (int co = 0; co < Co; ++co) {
        const S* gyp = gy.data() + ((size_t)n * Co + co) * Ho * Wo;
        const S* wp = w.data() + ((size_t)co * Ci + ci) * K * K;
        for (int kh = 0; kh < K; ++kh) {
          for (int kw = 0; kw < K; ++kw) {
            const S wv = wp[kh * K + kw];
            if (wv == S(0)) continue;
            // gx[ih,iw] += wv * gy[ih-kh+pad, iw-kw+pad]
            for (int ih = 0; ih < H; ++ih) {
              const int oh = ih - kh + pad;
              if (oh < 0 || oh >= Ho) continue;
              const int iw_lo = std::max(0, kw - pad);
              const int iw_hi = std::min(W, Wo + kw - pad);
              S* gxrow = gxp + (size_t)ih * W + iw_lo;
              const S* gyrow = gyp + (size_t)oh * Wo + (iw_lo - kw + pad);
              for (int i = 0; i < iw_hi - iw_lo; ++i) gxrow[i] += wv * gyrow[i];
            }
          }
        }
      }
    }
  }
  return gx;
}

template <typename S>
TensorT<S> conv2d_dw_fwd(const TensorT<S>& x, const TensorT<S>& gy, int pad, int K) {
  const int N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Co = gy.dim(1), Ho = gy.dim(2), Wo = gy.dim(3);
  TensorT<S> gw = TensorT<S>::zeros({Co, Ci, K, K});
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Co; ++co) {
      const S* gyp = gy.data() + ((size_t)n * Co + co) * Ho * Wo;
      for (int ci = 0; ci < Ci; ++ci) {
        const S* xp = x.data() + ((size_t)n * Ci + ci) * H * W;
        S* gwp = gw.data() + ((size_t)co * Ci + ci) * K * K;
        for (int kh = 0; kh < K; ++kh) {
          for (int kw = 0; kw < K; ++kw) {
            S acc = 0;
            for (int oh = 0; oh < Ho; ++oh) {
              const int ih = oh + kh - pad;
              if (ih < 0 || ih >= H) continue;
              const int ow_lo = std::max(0, pad - kw);
              const int ow_hi = std::min(Wo, W + pad - kw);
              const S* xrow = xp + (size_t)ih * W + (ow_lo + kw - pad);
              const S* gyrow = gyp + (size_t)oh * Wo + ow_lo;
              for (int i = 0; i < ow_hi - ow_lo; ++i) acc += gyrow[i] * xrow[i];
            }
            gwp[kh * K + kw] += acc;
          }
        }
      }
    }
  }
  return gw;
}

// 2x2 block argmax index (0..3) with first-wins tie rule, shared by the
// maxpool forward and both adjoints so they always agree.
template <typename S>
inline int block_argmax(const S* xp, int W, int h2, int w2) {
  const S* r0 = xp + (size_t)(2 * h2) * W + 2 * w2;
  const S* r1 = r0 + W;
  int arg = 0;
  S best = r0[0];
  if (r0[1] > best) { best = r0[1]; arg = 1; }
  if (r1[0] > best) { best = r1[0]; arg = 2; }
  if (r1[1] > best) { best = r1[1]; arg = 3; }
  return arg;
}

}  // namespace

// ---- op builders ---------------------------------------------------------

template <typename S>
Var add(TapeT<S>& t, Var a, Var b) {
  need_same(OpKind::Add, t.val(a).shape, t.val(b).shape);
  return t.emit(OpKind::Add, {a.id, b.id}, {},
                map2(t.val(a), t.val(b), [](S x, S y) { return x + y; }));
}

template <typename S>
Var sub(TapeT<S>& t, Var a, Var b) {
  need_same(OpKind::Sub, t.val(a).shape, t.val(b).shape);
  return t.emit(OpKind::Sub, {a.id, b.id}, {},
                map2(t.val(a), t.val(b), [](S x, S y) { return x - y; }));
}

template <typename S>
Var mul(TapeT<S>& t, Var a, Var b) {
  need_same(OpKind::Mul, t.val(a).shape, t.val(b).shape);
  return t.emit(OpKind::Mul, {a.id, b.id}, {},
                map2(t.val(a), t.val(b), [](S x, S y) { return x * y; }));
}

template <typename S>
Var div(TapeT<S>& t, Var a, Var b) {
  need_same(OpKind::Div, t.val(a).shape, t.val(b).shape);
  return t.emit(OpKind::Div, {a.id, b.id}, {},
                map2(t.val(a), t.val(b), [](S x, S y) { return x / y; }));
}

template <typename S>
Var add_scalar(TapeT<S>& t, Var a, double c) {
  OpAttrs at; at.x = c;
  return t.emit(OpKind::AddScalar, {a.id}, at, map1(t.val(a), [=](S x) { return S(x + (S)c); }));
}

template <typename S>
Var mul_scalar(TapeT<S>& t, Var a, double c) {
  OpAttrs at; at.x = c;
  return t.emit(OpKind::MulScalar, {a.id}, at, map1(t.val(a), [=](S x) { return S(x * (S)c); }));
}

template <typename S>
Var pow_scalar(TapeT<S>& t, Var a, double p) {
  OpAttrs at; at.x = p;
  return t.emit(OpKind::PowScalar, {a.id}, at,
                map1(t.val(a), [=](S x) { return (S)std::pow((double)x, p); }));
}

template <typename S>
Var clamp_min(TapeT<S>& t, Var a, double lo) {
  OpAttrs at; at.x = lo;
  return t.emit(OpKind::ClampMin, {a.id}, at,
                map1(t.val(a), [=](S x) { return x < (S)lo ? (S)lo : x; }));
}

template <typename S>
Var sqrt(TapeT<S>& t, Var a) {
  for (S x : t.val(a).v)
    if (x < S(0)) throw NumericError("sqrt: negative operand");
  return t.emit(OpKind::Sqrt, {a.id}, {}, map1(t.val(a), [](S x) { return (S)std::sqrt((double)x); }));
}

template <typename S>
Var log(TapeT<S>& t, Var a) {
  for (S x : t.val(a).v)
    if (x <= S(0)) throw NumericError("log: non-positive operand is a domain error");
  return t.emit(OpKind::Log, {a.id}, {}, map1(t.val(a), [](S x) { return (S)std::log((double)x); }));
}

template <typename S>
Var exp(TapeT<S>& t, Var a) {
  return t.emit(OpKind::Exp, {a.id}, {}, map1(t.val(a), [](S x) { return (S)std::exp((double)x); }));
}

template <typename S>
Var tanh(TapeT<S>& t, Var a) {
  return t.emit(OpKind::Tanh, {a.id}, {}, map1(t.val(a), [](S x) { return (S)std::tanh((double)x); }));
}

template <typename S>
Var relu(TapeT<S>& t, Var a) {
  return t.emit(OpKind::Relu, {a.id}, {}, map1(t.val(a), [](S x) { return x > S(0) ? x : S(0); }));
}

template <typename S>
Var abs(TapeT<S>& t, Var a) {
  return t.emit(OpKind::Abs, {a.id}, {}, map1(t.val(a), [](S x) { return x < S(0) ? -x : x; }));
}

template <typename S>
Var gt_zero_mask(TapeT<S>& t, Var a) {
  return t.emit(OpKind::GtZeroMask, {a.id}, {},
                map1(t.val(a), [](S x) { return x > S(0) ? S(1) : S(0); }));
}

template <typename S>
Var sign_mask(TapeT<S>& t, Var a) {
  return t.emit(OpKind::SignMask, {a.id}, {},
                map1(t.val(a), [](S x) { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); }));
}

template <typename S>
Var matmul(TapeT<S>& t, Var a, Var b) {
  const auto& sa = t.val(a).shape;
  const auto& sb = t.val(b).shape;
  need_rank(OpKind::MatMul, sa, 2);
  need_rank(OpKind::MatMul, sb, 2);
  if (sa[1] != sb[0])
    shape_fail(OpKind::MatMul, "inner dimensions " + shape_str(sa) + " x " + shape_str(sb));
  return t.emit(OpKind::MatMul, {a.id, b.id}, {}, matmul_fwd(t.val(a), t.val(b)));
}

template <typename S>
Var transpose(TapeT<S>& t, Var a) {
  const auto& x = t.val(a);
  need_rank(OpKind::Transpose, x.shape, 2);
  const int n = x.dim(0), m = x.dim(1);
  TensorT<S> y = TensorT<S>::zeros({m, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) y.v[(size_t)j * n + i] = x.v[(size_t)i * m + j];
  return t.emit(OpKind::Transpose, {a.id}, {}, std::move(y));
}

namespace {
template <typename S>
void check_conv_args(OpKind op, const Shape& x, const Shape& w, int pad) {
  need_rank(op, x, 4);
  need_rank(op, w, 4);
  if (w[2] != w[3] || w[2] % 2 == 0)
    shape_fail(op, "kernel must be square with odd size, got " + shape_str(w));
  if (pad < 0) shape_fail(op, "padding must be >= 0");
}
}  // namespace

template <typename S>
Var conv2d(TapeT<S>& t, Var x, Var w, int pad) {
  const auto& sx = t.val(x).shape;
  const auto& sw = t.val(w).shape;
  check_conv_args<S>(OpKind::Conv2d, sx, sw, pad);
  if (sx[1] != sw[1])
    shape_fail(OpKind::Conv2d,
               "input channels " + shape_str(sx) + " vs kernel " + shape_str(sw));
  if (sx[2] + 2 * pad < sw[2] || sx[3] + 2 * pad < sw[2])
    shape_fail(OpKind::Conv2d, "kernel larger than padded input");
  OpAttrs at; at.i0 = pad;
  return t.emit(OpKind::Conv2d, {x.id, w.id}, at, conv2d_fwd(t.val(x), t.val(w), pad));
}

template <typename S>
Var conv2d_input_vjp(TapeT<S>& t, Var gy, Var w, int pad) {
  const auto& sg = t.val(gy).shape;
  const auto& sw = t.val(w).shape;
  check_conv_args<S>(OpKind::Conv2dInputVjp, sg, sw, pad);
  if (sg[1] != sw[0])
    shape_fail(OpKind::Conv2dInputVjp,
               "grad channels " + shape_str(sg) + " vs kernel " + shape_str(sw));
  OpAttrs at; at.i0 = pad;
  return t.emit(OpKind::Conv2dInputVjp, {gy.id, w.id}, at,
                conv2d_dx_fwd(t.val(gy), t.val(w), pad));
}

template <typename S>
Var conv2d_weight_vjp(TapeT<S>& t, Var x, Var gy, int pad, int ksize) {
  const auto& sx = t.val(x).shape;
  const auto& sg = t.val(gy).shape;
  need_rank(OpKind::Conv2dWeightVjp, sx, 4);
  need_rank(OpKind::Conv2dWeightVjp, sg, 4);
  if (sx[0] != sg[0]) shape_fail(OpKind::Conv2dWeightVjp, "batch mismatch");
  if (sg[2] != sx[2] + 2 * pad - ksize + 1 || sg[3] != sx[3] + 2 * pad - ksize + 1)
    shape_fail(OpKind::Conv2dWeightVjp,
               "grad spatial " + shape_str(sg) + " inconsistent with input " + shape_str(sx));
  OpAttrs at; at.i0 = pad; at.i1 = ksize;
  return t.emit(OpKind::Conv2dWeightVjp, {x.id, gy.id}, at,
                conv2d_dw_fwd(t.val(x), t.val(gy), pad, ksize));
}

template <typename S>
Var upsample_nn2x(TapeT<S>& t, Var a) {
  const auto& x = t.val(a);
  need_rank(OpKind::UpsampleNn2x, x.shape, 4);
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  TensorT<S> y = TensorT<S>::zeros({N, C, 2 * H, 2 * W});
  for (int nc = 0; nc < N * C; ++nc) {
    const S* xp = x.data() + (size_t)nc * H * W;
    S* yp = y.data() + (size_t)nc * 4 * H * W;
    for (int h = 0; h < H; ++h) {
      for (int w = 0; w < W; ++w) {
        const S v = xp[h * W + w];
        S* o = yp + (size_t)(2 * h) * (2 * W) + 2 * w;
        o[0] = v;
        o[1] = v;
        o[2 * W] = v;
        o[2 * W + 1] = v;
      }
    }
  }
  return t.emit(OpKind::UpsampleNn2x, {a.id}, {}, std::move(y));
}

namespace {
template <typename S>
void need_even_spatial(OpKind op, const TensorT<S>& x) {
  need_rank(op, x.shape, 4);
  if (x.dim(2) % 2 || x.dim(3) % 2)
    shape_fail(op, "spatial dims must be even, got " + shape_str(x.shape));
}
}  // namespace

template <typename S>
Var avgpool2x(TapeT<S>& t, Var a) {
  const auto& x = t.val(a);
  need_even_spatial(OpKind::AvgPool2x, x);
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  TensorT<S> y = TensorT<S>::zeros({N, C, H / 2, W / 2});
  for (int nc = 0; nc < N * C; ++nc) {
    const S* xp = x.data() + (size_t)nc * H * W;
    S* yp = y.data() + (size_t)nc * (H / 2) * (W / 2);
    for (int h = 0; h < H / 2; ++h)
      for (int w = 0; w < W / 2; ++w) {
        const S* r0 = xp + (size_t)(2 * h) * W + 2 * w;
        yp[h * (W / 2) + w] = (r0[0] + r0[1] + r0[W] + r0[W + 1]) * S(0.25);
      }
  }
  return t.emit(OpKind::AvgPool2x, {a.id}, {}, std::move(y));
}

template <typename S>
Var maxpool2x2(TapeT<S>& t, Var a) {
  const auto& x = t.val(a);
  need_even_spatial(OpKind::MaxPool2x2, x);
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  TensorT<S> y = TensorT<S>::zeros({N, C, H / 2, W / 2});
  for (int nc = 0; nc < N * C; ++nc) {
    const S* xp = x.data() + (size_t)nc * H * W;
    S* yp = y.data() + (size_t)nc * (H / 2) * (W / 2);
    for (int h = 0; h < H / 2; ++h)
      for (int w = 0; w < W / 2; ++w) {
        const int arg = block_argmax(xp, W, h, w);
        const S* r0 = xp + (size_t)(2 * h) * W + 2 * w;
        yp[h * (W / 2) + w] = arg == 0 ? r0[0] : arg == 1 ? r0[1] : arg == 2 ? r0[W] : r0[W + 1];
      }
  }
  return t.emit(OpKind::MaxPool2x2, {a.id}, {}, std::move(y));
}

template <typename S>
Var maxpool_scatter(TapeT<S>& t, Var xv, Var uv) {
  const auto& x = t.val(xv);
  const auto& u = t.val(uv);
  need_even_spatial(OpKind::MaxPoolScatter, x);
  Shape pooled{x.dim(0), x.dim(1), x.dim(2) / 2, x.dim(3) / 2};
  need_same(OpKind::MaxPoolScatter, u.shape, pooled);
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  TensorT<S> y = TensorT<S>::zeros(x.shape);
  for (int nc = 0; nc < N * C; ++nc) {
    const S* xp = x.data() + (size_t)nc * H * W;
    const S* up = u.data() + (size_t)nc * (H / 2) * (W / 2);
    S* yp = y.data() + (size_t)nc * H * W;
    for (int h = 0; h < H / 2; ++h)
      for (int w = 0; w < W / 2; ++w) {
        const int arg = block_argmax(xp, W, h, w);
        S* o = yp + (size_t)(2 * h + arg / 2) * W + (2 * w + arg % 2);
        *o = up[h * (W / 2) + w];
      }
  }
  return t.emit(OpKind::MaxPoolScatter, {xv.id, uv.id}, {}, std::move(y));
}

template <typename S>
Var maxpool_gather(TapeT<S>& t, Var xv, Var fv) {
  const auto& x = t.val(xv);
  const auto& f = t.val(fv);
  need_even_spatial(OpKind::MaxPoolGather, x);
  need_same(OpKind::MaxPoolGather, f.shape, x.shape);
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  TensorT<S> y = TensorT<S>::zeros({N, C, H / 2, W / 2});
  for (int nc = 0; nc < N * C; ++nc) {
    const S* xp = x.data() + (size_t)nc * H * W;
    const S* fp = f.data() + (size_t)nc * H * W;
    S* yp = y.data() + (size_t)nc * (H / 2) * (W / 2);
    for (int h = 0; h < H / 2; ++h)
      for (int w = 0; w < W / 2; ++w) {
        const int arg = block_argmax(xp, W, h, w);
        yp[h * (W / 2) + w] = fp[(size_t)(2 * h + arg / 2) * W + (2 * w + arg % 2)];
      }
  }
  return t.emit(OpKind::MaxPoolGather, {xv.id, fv.id}, {}, std::move(y));
}

template <typename S>
Var softmax(TapeT<S>& t, Var a) {
  const auto& x = t.val(a);
  need_rank(OpKind::Softmax, x.shape, 2);
  const int n = x.dim(0), k = x.dim(1);
  TensorT<S> y = x;
  for (int i = 0; i < n; ++i) {
    S* row = y.data() + (size_t)i * k;
    S m = row[0];
    for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
    S s = 0;
    for (int j = 0; j < k; ++j) {
      row[j] = (S)std::exp((double)(row[j] - m));
      s += row[j];
    }
    const S inv = S(1) / s;
    for (int j = 0; j < k; ++j) row[j] *= inv;
  }
  return t.emit(OpKind::Softmax, {a.id}, {}, std::move(y));
}

template <typename S>
Var sum_all(TapeT<S>& t, Var a) {
  const auto& x = t.val(a);
  S s = 0;
  for (S v : x.v) s += v;
  OpAttrs at; at.shape = x.shape;
  return t.emit(OpKind::SumAll, {a.id}, at, TensorT<S>::scalar(s));
}

template <typename S>
Var bcast_all(TapeT<S>& t, Var a, const Shape& shape) {
  const auto& x = t.val(a);
  if (x.size() != 1) shape_fail(OpKind::BcastAll, "operand is not a scalar");
  OpAttrs at; at.shape = shape;
  return t.emit(OpKind::BcastAll, {a.id}, at, TensorT<S>::full(shape, x.v[0]));
}

template <typename S>
Var mean_all(TapeT<S>& t, Var a) {
  return mul_scalar(t, sum_all(t, a), 1.0 / (double)t.val(a).size());
}

template <typename S>
Var sum_per_sample(TapeT<S>& t, Var a) {
  const auto& x = t.val(a);
  if (x.rank() < 1) shape_fail(OpKind::SumPerSample, "rank must be >= 1");
  const int n = x.dim(0);
  const int64_t inner = x.size() / n;
  TensorT<S> y = TensorT<S>::zeros({n});
  for (int i = 0; i < n; ++i) {
    S s = 0;
    const S* p = x.data() + (size_t)i * inner;
    for (int64_t j = 0; j < inner; ++j) s += p[j];
    y.v[(size_t)i] = s;
  }
  OpAttrs at; at.shape = x.shape;
  return t.emit(OpKind::SumPerSample, {a.id}, at, std::move(y));
}

template <typename S>
Var bcast_per_sample(TapeT<S>& t, Var a, const Shape& shape) {
  const auto& x = t.val(a);
  need_rank(OpKind::BcastPerSample, x.shape, 1);
  if (shape.empty() || shape[0] != x.dim(0))
    shape_fail(OpKind::BcastPerSample,
               "leading dim of " + shape_str(shape) + " must match " + shape_str(x.shape));
  const int n = x.dim(0);
  const int64_t inner = shape_numel(shape) / n;
  TensorT<S> y = TensorT<S>::zeros(shape);
  for (int i = 0; i < n; ++i) {
    S* p = y.data() + (size_t)i * inner;
    for (int64_t j = 0; j < inner; ++j) p[j] = x.v[(size_t)i];
  }
  OpAttrs at; at.shape = shape;
  return t.emit(OpKind::BcastPerSample, {a.id}, at, std::move(y));
}

template <typename S>
Var sum_cols(TapeT<S>& t, Var a) {
  const auto& x = t.val(a);
  need_rank(OpKind::SumCols, x.shape, 2);
  const int n = x.dim(0), f = x.dim(1);
  TensorT<S> y = TensorT<S>::zeros({f});
  for (int i = 0; i < n; ++i) {
    const S* row = x.data() + (size_t)i * f;
    for (int j = 0; j < f; ++j) y.v[(size_t)j] += row[j];
  }
  OpAttrs at; at.i0 = n;
  return t.emit(OpKind::SumCols, {a.id}, at, std::move(y));
}

template <typename S>
Var bcast_rows(TapeT<S>& t, Var a, int n_rows) {
  const auto& x = t.val(a);
  need_rank(OpKind::BcastRows, x.shape, 1);
  const int f = x.dim(0);
  TensorT<S> y = TensorT<S>::zeros({n_rows, f});
  for (int i = 0; i < n_rows; ++i)
    std::memcpy(y.data() + (size_t)i * f, x.data(), sizeof(S) * (size_t)f);
  OpAttrs at; at.i0 = n_rows;
  return t.emit(OpKind::BcastRows, {a.id}, at, std::move(y));
}

template <typename S>
Var sum_channel(TapeT<S>& t, Var a) {
  const auto& x = t.val(a);
  need_rank(OpKind::SumChannel, x.shape, 4);
  const int N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  TensorT<S> y = TensorT<S>::zeros({C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const S* p = x.data() + ((size_t)n * C + c) * HW;
      S s = 0;
      for (int j = 0; j < HW; ++j) s += p[j];
      y.v[(size_t)c] += s;
    }
  OpAttrs at; at.shape = x.shape;
  return t.emit(OpKind::SumChannel, {a.id}, at, std::move(y));
}

template <typename S>
Var bcast_channel(TapeT<S>& t, Var a, int n, int h, int w) {
  const auto& x = t.val(a);
  need_rank(OpKind::BcastChannel, x.shape, 1);
  const int C = x.dim(0);
  TensorT<S> y = TensorT<S>::zeros({n, C, h, w});
  const int HW = h * w;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < C; ++c) {
      S* p = y.data() + ((size_t)i * C + c) * HW;
      for (int j = 0; j < HW; ++j) p[j] = x.v[(size_t)c];
    }
  OpAttrs at; at.shape = {n, C, h, w};
  return t.emit(OpKind::BcastChannel, {a.id}, at, std::move(y));
}

template <typename S>
Var sum_spatial(TapeT<S>& t, Var a) {
  const auto& x = t.val(a);
  need_rank(OpKind::SumSpatial, x.shape, 4);
  const int N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  TensorT<S> y = TensorT<S>::zeros({N, C});
  for (int i = 0; i < N * C; ++i) {
    const S* p = x.data() + (size_t)i * HW;
    S s = 0;
    for (int j = 0; j < HW; ++j) s += p[j];
    y.v[(size_t)i] = s;
  }
  OpAttrs at; at.shape = x.shape;
  return t.emit(OpKind::SumSpatial, {a.id}, at, std::move(y));
}

template <typename S>
Var bcast_spatial(TapeT<S>& t, Var a, int h, int w) {
  const auto& x = t.val(a);
  need_rank(OpKind::BcastSpatial, x.shape, 2);
  const int N = x.dim(0), C = x.dim(1), HW = h * w;
  TensorT<S> y = TensorT<S>::zeros({N, C, h, w});
  for (int i = 0; i < N * C; ++i) {
    S* p = y.data() + (size_t)i * HW;
    for (int j = 0; j < HW; ++j) p[j] = x.v[(size_t)i];
  }
  OpAttrs at; at.shape = {N, C, h, w};
  return t.emit(OpKind::BcastSpatial, {a.id}, at, std::move(y));
}

template <typename S>
Var reshape(TapeT<S>& t, Var a, const Shape& shape) {
  const auto& x = t.val(a);
  if (shape_numel(shape) != x.size())
    shape_fail(OpKind::Reshape,
               shape_str(x.shape) + " cannot be viewed as " + shape_str(shape));
  TensorT<S> y(shape, x.v);
  OpAttrs at; at.shape = x.shape;
  return t.emit(OpKind::Reshape, {a.id}, at, std::move(y));
}

template <typename S>
Var concat_cols(TapeT<S>& t, const std::vector<Var>& xs) {
  if (xs.empty()) shape_fail(OpKind::ConcatCols, "no operands");
  const int n = t.val(xs[0]).dim(0);
  int total = 0;
  std::vector<int32_t> ids;
  for (Var v : xs) {
    need_rank(OpKind::ConcatCols, t.val(v).shape, 2);
    if (t.val(v).dim(0) != n) shape_fail(OpKind::ConcatCols, "row counts differ");
    total += t.val(v).dim(1);
    ids.push_back(v.id);
  }
  TensorT<S> y = TensorT<S>::zeros({n, total});
  int off = 0;
  for (Var v : xs) {
    const auto& x = t.val(v);
    const int f = x.dim(1);
    for (int i = 0; i < n; ++i)
      std::memcpy(y.data() + (size_t)i * total + off, x.data() + (size_t)i * f,
                  sizeof(S) * (size_t)f);
    off += f;
  }
  return t.emit(OpKind::ConcatCols, std::move(ids), {}, std::move(y));
}

template <typename S>
Var slice_cols(TapeT<S>& t, Var a, int lo, int hi) {
  const auto& x = t.val(a);
  need_rank(OpKind::SliceCols, x.shape, 2);
  if (lo < 0 || hi > x.dim(1) || lo >= hi)
    shape_fail(OpKind::SliceCols, strfmt("range [%d,%d) invalid for %s", lo, hi,
                                         shape_str(x.shape).c_str()));
  const int n = x.dim(0), f = x.dim(1), fo = hi - lo;
  TensorT<S> y = TensorT<S>::zeros({n, fo});
  for (int i = 0; i < n; ++i)
    std::memcpy(y.data() + (size_t)i * fo, x.data() + (size_t)i * f + lo,
                sizeof(S) * (size_t)fo);
  OpAttrs at; at.i0 = lo; at.i1 = hi;
  return t.emit(OpKind::SliceCols, {a.id}, at, std::move(y));
}

template <typename S>
Var embed_cols(TapeT<S>& t, Var a, int lo, int total) {
  const auto& x = t.val(a);
  need_rank(OpKind::EmbedCols, x.shape, 2);
  const int n = x.dim(0), f = x.dim(1);
  if (lo < 0 || lo + f > total) shape_fail(OpKind::EmbedCols, "slot out of range");
  TensorT<S> y = TensorT<S>::zeros({n, total});
  for (int i = 0; i < n; ++i)
    std::memcpy(y.data() + (size_t)i * total + lo, x.data() + (size_t)i * f,
                sizeof(S) * (size_t)f);
  OpAttrs at; at.i0 = lo; at.i1 = total;
  return t.emit(OpKind::EmbedCols, {a.id}, at, std::move(y));
}

// ---- backward ------------------------------------------------------------

namespace {

// Accumulates gradient vars per node id during the reverse sweep.
template <typename S>
struct GradAcc {
  std::vector<Var> slots;
  TapeT<S>* tape;
  void put(int32_t id, Var g) {
    if (!tape->requires_grad(Var{id})) return;
    Var& slot = slots[(size_t)id];
    slot = slot.valid() ? add(*tape, slot, g) : g;
  }
};

}  // namespace

template <typename S>
GradVars<S> backward_graph(TapeT<S>& t, Var loss) {
  if (t.val(loss).size() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(t.val(loss).shape));

  GradAcc<S> acc;
  acc.tape = &t;
  acc.slots.assign((size_t)loss.id + 1, Var{});

  GradVars<S> out;
  if (!t.requires_grad(loss)) return out;

  acc.slots[(size_t)loss.id] = t.constant(TensorT<S>(t.val(loss).shape,
                                                     std::vector<S>{S(1)}));

  for (int32_t id = loss.id; id >= 0; --id) {
    Var g = acc.slots[(size_t)id];
    if (!g.valid()) continue;
    out[id] = g;
    // copy node metadata: emitting gradient nodes may reallocate the tape
    const OpKind op = t.node(Var{id}).op;
    const std::vector<int32_t> in = t.node(Var{id}).inputs;
    const OpAttrs attrs = t.node(Var{id}).attrs;
    if (op == OpKind::Leaf) continue;
    const Var self{id};
    auto ival = [&](size_t i) { return Var{in[i]}; };
    auto rg = [&](size_t i) { return t.requires_grad(Var{in[i]}); };

    switch (op) {
      case OpKind::Leaf:
        break;
      case OpKind::Add:
        if (rg(0)) acc.put(in[0], g);
        if (rg(1)) acc.put(in[1], g);
        break;
      case OpKind::Sub:
        if (rg(0)) acc.put(in[0], g);
        if (rg(1)) acc.put(in[1], mul_scalar(t, g, -1.0));
        break;
      case OpKind::Mul:
        if (rg(0)) acc.put(in[0], mul(t, g, ival(1)));
        if (rg(1)) acc.put(in[1], mul(t, g, ival(0)));
        break;
      case OpKind::Div:
        if (rg(0)) acc.put(in[0], div(t, g, ival(1)));
        if (rg(1))
          acc.put(in[1], mul_scalar(t, div(t, mul(t, g, self), ival(1)), -1.0));
        break;
      case OpKind::AddScalar:
        if (rg(0)) acc.put(in[0], g);
        break;
      case OpKind::MulScalar:
        if (rg(0)) acc.put(in[0], mul_scalar(t, g, attrs.x));
        break;
      case OpKind::PowScalar:
        if (rg(0)) {
          const double p = attrs.x;
          Var d = mul_scalar(t, pow_scalar(t, ival(0), p - 1.0), p);
          acc.put(in[0], mul(t, g, d));
        }
        break;
      case OpKind::ClampMin:
        if (rg(0)) {
          Var m = gt_zero_mask(t, add_scalar(t, ival(0), -attrs.x));
          acc.put(in[0], mul(t, g, m));
        }
        break;
      case OpKind::Sqrt:
        if (rg(0)) acc.put(in[0], mul_scalar(t, div(t, g, self), 0.5));
        break;
      case OpKind::Log:
        if (rg(0)) acc.put(in[0], div(t, g, ival(0)));
        break;
      case OpKind::Exp:
        if (rg(0)) acc.put(in[0], mul(t, g, self));
        break;
      case OpKind::Tanh:
        if (rg(0)) {
          Var one_minus = add_scalar(t, mul_scalar(t, mul(t, self, self), -1.0), 1.0);
          acc.put(in[0], mul(t, g, one_minus));
        }
        break;
      case OpKind::Relu:
        if (rg(0)) acc.put(in[0], mul(t, g, gt_zero_mask(t, ival(0))));
        break;
      case OpKind::Abs:
        if (rg(0)) acc.put(in[0], mul(t, g, sign_mask(t, ival(0))));
        break;
      case OpKind::GtZeroMask:
      case OpKind::SignMask:
        break;
      case OpKind::MatMul:
        if (rg(0)) acc.put(in[0], matmul(t, g, transpose(t, ival(1))));
        if (rg(1)) acc.put(in[1], matmul(t, transpose(t, ival(0)), g));
        break;
      case OpKind::Transpose:
        if (rg(0)) acc.put(in[0], transpose(t, g));
        break;
      case OpKind::Conv2d:
        if (rg(0)) acc.put(in[0], conv2d_input_vjp(t, g, ival(1), attrs.i0));
        if (rg(1)) {
          const int k = t.val(ival(1)).dim(2);
          acc.put(in[1], conv2d_weight_vjp(t, ival(0), g, attrs.i0, k));
        }
        break;
      case OpKind::Conv2dInputVjp:
        // node = dx(q, w); d/dq = conv2d(g, w); d/dw = dw(g, q)
        if (rg(0)) acc.put(in[0], conv2d(t, g, ival(1), attrs.i0));
        if (rg(1)) {
          const int k = t.val(ival(1)).dim(2);
          acc.put(in[1], conv2d_weight_vjp(t, g, ival(0), attrs.i0, k));
        }
        break;
      case OpKind::Conv2dWeightVjp:
        // node = dw(x, q); d/dx = dx(q, g); d/dq = conv2d(x, g)
        if (rg(0)) acc.put(in[0], conv2d_input_vjp(t, ival(1), g, attrs.i0));
        if (rg(1)) acc.put(in[1], conv2d(t, ival(0), g, attrs.i0));
        break;
      case OpKind::UpsampleNn2x:
        if (rg(0)) acc.put(in[0], mul_scalar(t, avgpool2x(t, g), 4.0));
        break;
      case OpKind::AvgPool2x:
        if (rg(0)) acc.put(in[0], mul_scalar(t, upsample_nn2x(t, g), 0.25));
        break;
      case OpKind::MaxPool2x2:
        if (rg(0)) acc.put(in[0], maxpool_scatter(t, ival(0), g));
        break;
      case OpKind::MaxPoolScatter:
        // gradient flows only to the scattered values, not the argmax source
        if (rg(1)) acc.put(in[1], maxpool_gather(t, ival(0), g));
        break;
      case OpKind::MaxPoolGather:
        if (rg(1)) acc.put(in[1], maxpool_scatter(t, ival(0), g));
        break;
      case OpKind::Softmax:
        if (rg(0)) {
          Var gy_y = mul(t, g, self);
          Var s = sum_per_sample(t, gy_y);
          Var centered = sub(t, g, bcast_per_sample(t, s, t.val(self).shape));
          acc.put(in[0], mul(t, self, centered));
        }
        break;
      case OpKind::SumAll:
        if (rg(0)) acc.put(in[0], bcast_all(t, g, attrs.shape));
        break;
      case OpKind::BcastAll:
        if (rg(0)) acc.put(in[0], sum_all(t, g));
        break;
      case OpKind::SumPerSample:
        if (rg(0)) acc.put(in[0], bcast_per_sample(t, g, attrs.shape));
        break;
      case OpKind::BcastPerSample:
        if (rg(0)) acc.put(in[0], sum_per_sample(t, g));
        break;
      case OpKind::SumCols:
        if (rg(0)) acc.put(in[0], bcast_rows(t, g, attrs.i0));
        break;
      case OpKind::BcastRows:
        if (rg(0)) acc.put(in[0], sum_cols(t, g));
        break;
      case OpKind::SumChannel:
        if (rg(0)) {
          const Shape& s = attrs.shape;
          acc.put(in[0], bcast_channel(t, g, s[0], s[2], s[3]));
        }
        break;
      case OpKind::BcastChannel:
        if (rg(0)) acc.put(in[0], sum_channel(t, g));
        break;
      case OpKind::SumSpatial:
        if (rg(0)) {
          const Shape& s = attrs.shape;
          acc.put(in[0], bcast_spatial(t, g, s[2], s[3]));
        }
        break;
      case OpKind::BcastSpatial:
        if (rg(0)) acc.put(in[0], sum_spatial(t, g));
        break;
      case OpKind::Reshape:
        if (rg(0)) acc.put(in[0], reshape(t, g, attrs.shape));
        break;
      case OpKind::ConcatCols: {
        int off = 0;
        for (size_t i = 0; i < in.size(); ++i) {
          const int f = t.val(ival(i)).dim(1);
          if (rg(i)) acc.put(in[i], slice_cols(t, g, off, off + f));
          off += f;
        }
        break;
      }
      case OpKind::SliceCols:
        if (rg(0))
          acc.put(in[0], embed_cols(t, g, attrs.i0, t.val(ival(0)).dim(1)));
        break;
      case OpKind::EmbedCols:
        if (rg(0)) acc.put(in[0], slice_cols(t, g, attrs.i0, attrs.i0 + t.val(ival(0)).dim(1)));
        break;
    }
  }
  return out;
}

template <typename S>
GradMap<S> backward(TapeT<S>& t, Var loss) {
  const size_t mark = t.size();
  GradVars<S> gv = backward_graph(t, loss);
  GradMap<S> out;
  for (auto& [id, v] : gv)
    if (t.node(Var{id}).op == OpKind::Leaf) out.emplace(id, t.val(v));
  if (!t.differentiable()) t.truncate(mark);
  return out;
}

template <typename S>
Var grad_norm(TapeT<S>& t, Var output, Var wrt, double p) {
  if (p <= 0.0) throw ConfigError("grad_norm: norm order p must be > 0");
  const auto& os = t.val(output);
  const auto& ws = t.val(wrt);
  if (ws.rank() < 1) throw ShapeError("grad_norm: wrt must be batched (rank >= 1)");
  const int n = ws.dim(0);
  if (os.size() != n)
    throw ShapeError(strfmt("grad_norm: output has %lld values for %d samples",
                            (long long)os.size(), n));
  if (!t.differentiable())
    throw std::logic_error("grad_norm: tape must be in differentiable mode");

  GradVars<S> gv = backward_graph(t, sum_all(t, output));
  Var g;
  auto it = gv.find(wrt.id);
  if (it != gv.end()) {
    g = it->second;
  } else {
    // output does not depend on wrt; the gradient is identically zero
    g = t.constant(TensorT<S>::zeros(ws.shape));
  }
  if (p == 2.0) {
    Var n2 = t.val(g).rank() > 1 ? sum_per_sample(t, mul(t, g, g)) : mul(t, g, g);
    return sqrt(t, add_scalar(t, n2, 1e-12));
  }
  Var ap = pow_scalar(t, abs(t, g), p);
  Var s = t.val(ap).rank() > 1 ? sum_per_sample(t, ap) : ap;
  return pow_scalar(t, add_scalar(t, s, 1e-12), 1.0 / p);
}

// ---- explicit instantiation ----------------------------------------------

template class TapeT<float>;
template class TapeT<double>;

#define CELLGAN_INSTANTIATE_OPS(S)                                              \
  template Var add(TapeT<S>&, Var, Var);                                        \
  template Var sub(TapeT<S>&, Var, Var);                                        \
  template Var mul(TapeT<S>&, Var, Var);                                        \
  template Var div(TapeT<S>&, Var, Var);                                        \
  template Var add_scalar(TapeT<S>&, Var, double);                              \
  template Var mul_scalar(TapeT<S>&, Var, double);                              \
  template Var pow_scalar(TapeT<S>&, Var, double);                              \
  template Var clamp_min(TapeT<S>&, Var, double);                               \
  template Var sqrt(TapeT<S>&, Var);                                            \
  template Var log(TapeT<S>&, Var);                                             \
  template Var exp(TapeT<S>&, Var);                                             \
  template Var tanh(TapeT<S>&, Var);                                            \
  template Var relu(TapeT<S>&, Var);                                            \
  template Var abs(TapeT<S>&, Var);                                             \
  template Var gt_zero_mask(TapeT<S>&, Var);                                    \
  template Var sign_mask(TapeT<S>&, Var);                                       \
  template Var matmul(TapeT<S>&, Var, Var);                                     \
  template Var transpose(TapeT<S>&, Var);                                       \
  template Var conv2d(TapeT<S>&, Var, Var, int);                                \
  template Var conv2d_input_vjp(TapeT<S>&, Var, Var, int);                      \
  template Var conv2d_weight_vjp(TapeT<S>&, Var, Var, int, int);                \
  template Var upsample_nn2x(TapeT<S>&, Var);                                   \
  template Var avgpool2x(TapeT<S>&, Var);                                       \
  template Var maxpool2x2(TapeT<S>&, Var);                                      \
  template Var maxpool_scatter(TapeT<S>&, Var, Var);                            \
  template Var maxpool_gather(TapeT<S>&, Var, Var);                             \
  template Var softmax(TapeT<S>&, Var);                                         \
  template Var sum_all(TapeT<S>&, Var);                                         \
  template Var bcast_all(TapeT<S>&, Var, const Shape&);                         \
  template Var mean_all(TapeT<S>&, Var);                                        \
  template Var sum_per_sample(TapeT<S>&, Var);                                  \
  template Var bcast_per_sample(TapeT<S>&, Var, const Shape&);                  \
  template Var sum_cols(TapeT<S>&, Var);                                        \
  template Var bcast_rows(TapeT<S>&, Var, int);                                 \
  template Var sum_channel(TapeT<S>&, Var);                                     \
  template Var bcast_channel(TapeT<S>&, Var, int, int, int);                    \
  template Var sum_spatial(TapeT<S>&, Var);                                     \
  template Var bcast_spatial(TapeT<S>&, Var, int, int);                         \
  template Var reshape(TapeT<S>&, Var, const Shape&);                           \
  template Var concat_cols(TapeT<S>&, const std::vector<Var>&);                 \
  template Var slice_cols(TapeT<S>&, Var, int, int);                            \
  template Var embed_cols(TapeT<S>&, Var, int, int);                            \
  template GradVars<S> backward_graph(TapeT<S>&, Var);                          \
  template GradMap<S> backward(TapeT<S>&, Var);                                 \
  template Var grad_norm(TapeT<S>&, Var, Var, double);

CELLGAN_INSTANTIATE_OPS(float)
CELLGAN_INSTANTIATE_OPS(double)

#undef CELLGAN_INSTANTIATE_OPS

}  // namespace cellgan::ad
