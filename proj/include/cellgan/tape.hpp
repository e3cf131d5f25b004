#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "cellgan/tensor.hpp"

namespace cellgan::ad {

// Handle into a tape. Vars are cheap value types; the tape owns the data.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

enum class OpKind : uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  AddScalar,
  MulScalar,
  PowScalar,
  ClampMin,
  Sqrt,
  Log,
  Exp,
  Tanh,
  Relu,
  Abs,
  GtZeroMask,  // 1 where x > 0, else 0; not differentiable
  SignMask,    // +1 / 0 / -1; not differentiable
  MatMul,
  Transpose,
  Conv2d,           // (x, w) stride 1, square odd kernel, zero padding
  Conv2dInputVjp,   // (gy, w): adjoint of Conv2d w.r.t. x
  Conv2dWeightVjp,  // (x, gy): adjoint of Conv2d w.r.t. w
  UpsampleNn2x,
  AvgPool2x,
  MaxPool2x2,
  MaxPoolScatter,  // (x, u): place pooled u at argmax positions of x
  MaxPoolGather,   // (x, t): read t at argmax positions of x
  Softmax,         // last axis of a 2-D tensor
  SumAll,          // -> scalar
  BcastAll,        // scalar -> shape
  SumPerSample,    // [N,...] -> [N]
  BcastPerSample,  // [N] -> [N,...]
  SumCols,         // [N,F] -> [F]
  BcastRows,       // [F] -> [N,F]
  SumChannel,      // [N,C,H,W] -> [C]
  BcastChannel,    // [C] -> [N,C,H,W]
  SumSpatial,      // [N,C,H,W] -> [N,C]
  BcastSpatial,    // [N,C] -> [N,C,H,W]
  Reshape,
  ConcatCols,  // n x [N,Fi] -> [N, sum Fi]
  SliceCols,   // [N,F] -> [N, hi-lo]
  EmbedCols,   // [N,F'] -> [N,F] zero elsewhere; adjoint of SliceCols
};

const char* op_name(OpKind k);

struct OpAttrs {
  double x = 0.0;  // scalar operand / exponent / clamp bound
  int i0 = 0;      // padding, slice lo, row count N ...
  int i1 = 0;      // slice hi ...
  Shape shape;     // target shape for reshape/broadcast ops
};

// Append-only computation graph with eager evaluation. When `differentiable`
// is true a backward pass appends its nodes to the tape, so gradients are
// themselves graph values and can be differentiated again (the gradient
// penalty needs this). When false, backward still runs through the same rules
// but the tape is rolled back afterwards and only raw gradient tensors
// survive.
template <typename S>
class TapeT {
 public:
  struct Node {
    OpKind op;
    std::vector<int32_t> inputs;
    OpAttrs attrs;
    TensorT<S> val;
    bool requires_grad = false;
  };

  Var leaf(TensorT<S> t, bool requires_grad);
  Var constant(TensorT<S> t) { return leaf(std::move(t), false); }

  const TensorT<S>& val(Var v) const { return node(v).val; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  const Node& node(Var v) const;

  size_t size() const { return nodes_.size(); }
  void truncate(size_t n);

  bool differentiable() const { return differentiable_; }
  void set_differentiable(bool d) { differentiable_ = d; }

  Var emit(OpKind op, std::vector<int32_t> inputs, OpAttrs attrs, TensorT<S> val);

 private:
  std::vector<Node> nodes_;
  bool differentiable_ = true;
};

using Tape32 = TapeT<float>;
using Tape64 = TapeT<double>;

// ---- op builders ------------------------------------------------------

template <typename S> Var add(TapeT<S>& t, Var a, Var b);
template <typename S> Var sub(TapeT<S>& t, Var a, Var b);
template <typename S> Var mul(TapeT<S>& t, Var a, Var b);
template <typename S> Var div(TapeT<S>& t, Var a, Var b);
template <typename S> Var add_scalar(TapeT<S>& t, Var a, double c);
template <typename S> Var mul_scalar(TapeT<S>& t, Var a, double c);
template <typename S> Var pow_scalar(TapeT<S>& t, Var a, double p);
template <typename S> Var clamp_min(TapeT<S>& t, Var a, double lo);
template <typename S> Var sqrt(TapeT<S>& t, Var a);
template <typename S> Var log(TapeT<S>& t, Var a);
template <typename S> Var exp(TapeT<S>& t, Var a);
template <typename S> Var tanh(TapeT<S>& t, Var a);
template <typename S> Var relu(TapeT<S>& t, Var a);
template <typename S> Var abs(TapeT<S>& t, Var a);
template <typename S> Var gt_zero_mask(TapeT<S>& t, Var a);
template <typename S> Var sign_mask(TapeT<S>& t, Var a);
template <typename S> Var matmul(TapeT<S>& t, Var a, Var b);
template <typename S> Var transpose(TapeT<S>& t, Var a);
template <typename S> Var conv2d(TapeT<S>& t, Var x, Var w, int pad);
template <typename S> Var conv2d_input_vjp(TapeT<S>& t, Var gy, Var w, int pad);
template <typename S> Var conv2d_weight_vjp(TapeT<S>& t, Var x, Var gy, int pad, int ksize);
template <typename S> Var upsample_nn2x(TapeT<S>& t, Var a);
template <typename S> Var avgpool2x(TapeT<S>& t, Var a);
template <typename S> Var maxpool2x2(TapeT<S>& t, Var a);
template <typename S> Var maxpool_scatter(TapeT<S>& t, Var x, Var u);
template <typename S> Var maxpool_gather(TapeT<S>& t, Var x, Var full);
template <typename S> Var softmax(TapeT<S>& t, Var a);
template <typename S> Var sum_all(TapeT<S>& t, Var a);
template <typename S> Var bcast_all(TapeT<S>& t, Var a, const Shape& shape);
template <typename S> Var mean_all(TapeT<S>& t, Var a);
template <typename S> Var sum_per_sample(TapeT<S>& t, Var a);
template <typename S> Var bcast_per_sample(TapeT<S>& t, Var a, const Shape& shape);
template <typename S> Var sum_cols(TapeT<S>& t, Var a);
template <typename S> Var bcast_rows(TapeT<S>& t, Var a, int n_rows);
template <typename S> Var sum_channel(TapeT<S>& t, Var a);
template <typename S> Var bcast_channel(TapeT<S>& t, Var a, int n, int h, int w);
template <typename S> Var sum_spatial(TapeT<S>& t, Var a);
template <typename S> Var bcast_spatial(TapeT<S>& t, Var a, int h, int w);
template <typename S> Var reshape(TapeT<S>& t, Var a, const Shape& shape);
template <typename S> Var concat_cols(TapeT<S>& t, const std::vector<Var>& xs);
template <typename S> Var slice_cols(TapeT<S>& t, Var a, int lo, int hi);
template <typename S> Var embed_cols(TapeT<S>& t, Var a, int lo, int total);

// ---- backward ----------------------------------------------------------

template <typename S>
using GradVars = std::unordered_map<int32_t, Var>;
template <typename S>
using GradMap = std::unordered_map<int32_t, TensorT<S>>;

// Reverse-mode sweep from a scalar loss. Gradient nodes are appended to the
// tape and returned per requires_grad node reached. The tape is left as-is;
// callers in non-differentiable mode use backward() below.
template <typename S>
GradVars<S> backward_graph(TapeT<S>& t, Var loss);

// Same sweep, returning raw tensors. Honors tape.differentiable(): when
// false, the tape is truncated back to its pre-call size.
template <typename S>
GradMap<S> backward(TapeT<S>& t, Var loss);

// Per-sample p-norm of d(sum(output))/d(wrt); differentiable. `output` holds
// one scalar per sample of `wrt` and must depend on wrt sample-separably
// (true for any per-sample network). Guarded as sqrt(sum g^2 + 1e-12) at p=2.
template <typename S>
Var grad_norm(TapeT<S>& t, Var output, Var wrt, double p);

}  // namespace cellgan::ad
