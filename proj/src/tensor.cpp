#include "cellgan/tensor.hpp"

#include <cmath>

namespace cellgan::ad {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

template <typename S>
TensorT<S>::TensorT(Shape sh, std::vector<S> data) : shape(std::move(sh)), v(std::move(data)) {
  for (int d : shape)
    if (d <= 0) throw ShapeError("tensor: non-positive dimension in " + shape_str(shape));
  if (shape_numel(shape) != (int64_t)v.size())
    throw ShapeError(strfmt("tensor: %zu values do not fill shape %s", v.size(),
                            shape_str(shape).c_str()));
}

template <typename S>
TensorT<S> TensorT<S>::zeros(const Shape& sh) {
  return TensorT(sh, std::vector<S>((size_t)shape_numel(sh), S(0)));
}

template <typename S>
TensorT<S> TensorT<S>::full(const Shape& sh, S value) {
  return TensorT(sh, std::vector<S>((size_t)shape_numel(sh), value));
}

template <typename S>
TensorT<S> TensorT<S>::scalar(S value) {
  return TensorT(Shape{}, std::vector<S>{value});
}

template <typename S>
S TensorT<S>::item() const {
  if (v.size() != 1) throw ShapeError("item(): tensor is not a scalar, shape " + shape_str(shape));
  return v[0];
}

template <typename S>
bool TensorT<S>::all_finite() const {
  for (S x : v)
    if (!std::isfinite((double)x)) return false;
  return true;
}

template struct TensorT<float>;
template struct TensorT<double>;

}  // namespace cellgan::ad
