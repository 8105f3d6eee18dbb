#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sing/error.hpp"

namespace sing::nn {

// Channels-by-length buffer of doubles, one contiguous row per channel.
// A 1x1 tensor doubles as a scalar. Batch handling lives outside.
struct Tensor {
  int ch = 0;
  int len = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int channels, int length)
      : ch(channels), len(length),
        v(static_cast<std::size_t>(channels) * length, 0.0) {}

  static Tensor scalar(double x) {
    Tensor t(1, 1);
    t.v[0] = x;
    return t;
  }

  double& at(int c, int t) { return v[static_cast<std::size_t>(c) * len + t]; }
  double at(int c, int t) const {
    return v[static_cast<std::size_t>(c) * len + t];
  }

  std::span<double> row(int c) {
    return {v.data() + static_cast<std::size_t>(c) * len,
            static_cast<std::size_t>(len)};
  }
  std::span<const double> row(int c) const {
    return {v.data() + static_cast<std::size_t>(c) * len,
            static_cast<std::size_t>(len)};
  }

  std::size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const { return ch == o.ch && len == o.len; }

  double scalar_value() const {
    if (ch != 1 || len != 1) throw ShapeError("tensor is not a scalar");
    return v[0];
  }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

inline bool all_finite(const Tensor& t) {
  for (double x : t.v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline double dot(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("dot: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) s += a.v[i] * b.v[i];
  return s;
}

}  // namespace sing::nn
