#pragma once

#include <cstddef>
#include <vector>

#include "ciscnet/errors.hpp"

namespace ciscnet {

// Rank-4 array, N x C x H x W, row-major contiguous.
template <typename T>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

  size_t size() const { return data.size(); }

  T& at(int i, int j, int y, int x) {
    return data[((static_cast<size_t>(i) * c + j) * h + y) * w + x];
  }
  const T& at(int i, int j, int y, int x) const {
    return data[((static_cast<size_t>(i) * c + j) * h + y) * w + x];
  }

  T* plane(int i, int j) { return data.data() + (static_cast<size_t>(i) * c + j) * h * w; }
  const T* plane(int i, int j) const {
    return data.data() + (static_cast<size_t>(i) * c + j) * h * w;
  }

  bool same_shape(const Tensor4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  void require_shape(int n_, int c_, int h_, int w_, const char* who) const {
    if (n != n_ || c != c_ || h != h_ || w != w_) throw ShapeMismatch(who);
  }
};

using Tensor4f = Tensor4<float>;
using Tensor4d = Tensor4<double>;

template <typename To, typename From>
Tensor4<To> tensor_cast(const Tensor4<From>& t) {
  Tensor4<To> out(t.n, t.c, t.h, t.w);
  for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<To>(t.data[i]);
  return out;
}

}  // namespace ciscnet
