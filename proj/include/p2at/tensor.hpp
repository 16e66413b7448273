#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "p2at/common.hpp"

namespace p2at {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense row-major tensor. Data is shared; tensors are treated as immutable
// once they have been recorded on a graph. `node` is the handle into the
// recording graph (-1 when untracked).
template <typename T>
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  int node = -1;
  bool requires_grad = false;

  Tensor() = default;

  explicit Tensor(Shape s) : shape(std::move(s)) {
    check_shape();
    data = std::make_shared<std::vector<T>>(static_cast<size_t>(numel()), T(0));
  }

  static Tensor full(Shape s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data->begin(), t.data->end(), v);
    return t;
  }

  static Tensor from(Shape s, std::vector<T> values) {
    Tensor t;
    t.shape = std::move(s);
    t.check_shape();
    if (shape_numel(t.shape) != static_cast<int64_t>(values.size()))
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(t.shape));
    t.data = std::make_shared<std::vector<T>>(std::move(values));
    return t;
  }

  bool defined() const { return static_cast<bool>(data); }
  int64_t numel() const { return shape_numel(shape); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  T* ptr() { return data->data(); }
  const T* ptr() const { return data->data(); }
  std::vector<T>& vec() { return *data; }
  const std::vector<T>& vec() const { return *data; }

  T& at(int64_t i) { return (*data)[static_cast<size_t>(i)]; }
  T at(int64_t i) const { return (*data)[static_cast<size_t>(i)]; }

  // Deep copy; drops graph linkage.
  Tensor clone() const {
    Tensor t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<T>>(*data);
    return t;
  }

  // Same storage under a new shape (numel preserved). Untracked; recorded
  // reshapes go through ops::reshape.
  Tensor viewed(Shape s) const {
    if (shape_numel(s) != numel())
      throw ShapeError("view " + shape_str(s) + " incompatible with " + shape_str(shape));
    Tensor t;
    t.shape = std::move(s);
    t.data = data;
    return t;
  }

  void check_shape() const {
    for (int64_t d : shape)
      if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
  }
};

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.vec())
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

// Convolution / pooling geometry.
struct KernelSpec {
  int kh = 1, kw = 1;
  int sh = 1, sw = 1;
  int ph = 0, pw = 0;
  int groups = 1;

  static KernelSpec square(int k, int stride, int pad, int groups = 1) {
    return KernelSpec{k, k, stride, stride, pad, pad, groups};
  }

  // floor((in + 2*pad - k) / stride) + 1; throws when any output dim < 1.
  std::pair<int64_t, int64_t> out_size(int64_t h, int64_t w) const {
    int64_t oh = (h + 2 * ph - kh) / sh + 1;
    int64_t ow = (w + 2 * pw - kw) / sw + 1;
    if (h + 2 * ph < kh || w + 2 * pw < kw || oh < 1 || ow < 1)
      throw ShapeError("kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                       " does not fit padded input " + std::to_string(h) + "x" + std::to_string(w));
    return {oh, ow};
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace p2at
