#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "forge/errors.hpp"

namespace forge::nn {

/// Dense NCHW batch used inside the network. T is float for training and
/// inference, double for gradient verification.
template <typename T>
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<T> values;

  Tensor() = default;
  Tensor(int batch, int channels, int height, int width, T fill = T(0))
      : n(batch), c(channels), h(height), w(width),
        values(static_cast<std::size_t>(batch) * channels * height * width, fill) {}

  std::size_t size() const { return values.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }

  T* sample(int i) { return values.data() + i * sample_size(); }
  const T* sample(int i) const { return values.data() + i * sample_size(); }
  T* channel(int i, int ch) { return sample(i) + ch * plane(); }
  const T* channel(int i, int ch) const { return sample(i) + ch * plane(); }

  T& at(int i, int ch, int y, int x) { return values[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x]; }
  T at(int i, int ch, int y, int x) const {
    return values[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  void resize(int batch, int channels, int height, int width) {
    n = batch;
    c = channels;
    h = height;
    w = width;
    values.assign(static_cast<std::size_t>(batch) * channels * height * width, T(0));
  }
  void zero() { std::fill(values.begin(), values.end(), T(0)); }
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string("tensor shape mismatch: ") + what);
}

}  // namespace forge::nn
