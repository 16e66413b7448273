#pragma once

#include <vector>

#include "p2at/common.hpp"
#include "p2at/param.hpp"
#include "p2at/tensor.hpp"

namespace p2at::testing {

template <typename T>
Tensor<T> random_tensor(const Shape& shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(shape);
  Rng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Re-randomizes every trainable parameter, including the zero-initialized
// terminal projections, so gradient checks exercise all paths.
template <typename T>
void randomize_params(ParamRegistry<T>& reg, uint64_t seed, double scale = 0.2) {
  Rng rng(seed);
  for (auto& p : reg.all()) {
    if (!p.trainable) continue;
    for (int64_t i = 0; i < p.value.numel(); ++i)
      p.value.at(i) = static_cast<T>(rng.uniform(-scale, scale));
  }
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::fabs(static_cast<double>(a.at(i)) - static_cast<double>(b.at(i))));
  return m;
}

template <typename T>
double max_abs_diff(const T* a, const T* b, int64_t n) {
  double m = 0.0;
  for (int64_t i = 0; i < n; ++i)
    m = std::max(m, std::fabs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace p2at::testing
