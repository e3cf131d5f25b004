#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "cellgan/common.hpp"

namespace cellgan::ad {

// Row-major dense shapes. Rank 0 with one element is a scalar.
using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

template <typename S>
struct TensorT {
  Shape shape;
  std::vector<S> v;

  TensorT() = default;
  TensorT(Shape sh, std::vector<S> data);

  static TensorT zeros(const Shape& sh);
  static TensorT full(const Shape& sh, S value);
  static TensorT scalar(S value);

  int64_t size() const { return (int64_t)v.size(); }
  int rank() const { return (int)shape.size(); }
  int dim(int i) const { return shape[(size_t)i]; }
  S* data() { return v.data(); }
  const S* data() const { return v.data(); }
  S item() const;

  bool all_finite() const;

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.v.assign(v.begin(), v.end());
    return out;
  }
};

using Tensor32 = TensorT<float>;
using Tensor64 = TensorT<double>;

}  // namespace cellgan::ad

namespace cellgan {
#ifdef CELLGAN_REAL64
using Real = double;
#else
using Real = float;
#endif
using Tensor = ad::TensorT<Real>;
}  // namespace cellgan
