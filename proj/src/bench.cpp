#include "p2at/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace p2at {

namespace {

double nearest_rank(const std::vector<double>& sorted, double pct) {
  const size_t n = sorted.size();
  const size_t rank = static_cast<size_t>(
      std::ceil(pct / 100.0 * static_cast<double>(n)));
  return sorted[std::min(n - 1, std::max<size_t>(1, rank) - 1)];
}

}  // namespace

BenchResult bench_forward(ModelF& model, int64_t h, int64_t w, int64_t warmup, int64_t iters,
                          uint64_t seed) {
  if (iters < 1) throw ConfigError("bench needs at least one timed iteration");
  TensorF input(Shape{1, model.config().in_channels, h, w});
  Rng rng(seed);
  for (int64_t i = 0; i < input.numel(); ++i)
    input.at(i) = static_cast<float>(rng.uniform());

  Ctx<float> ctx;
  volatile float sink = 0.0f;
  for (int64_t i = 0; i < warmup; ++i) {
    const TensorF out = model.forward(ctx, input);
    sink = sink + out.at(0);
  }

  BenchResult res;
  res.samples_ms.reserve(static_cast<size_t>(iters));
  for (int64_t i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const TensorF out = model.forward(ctx, input);
    const auto t1 = std::chrono::steady_clock::now();
    sink = sink + out.at(0);
    res.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }

  double total = 0.0;
  for (double s : res.samples_ms) total += s;
  res.mean_ms = total / static_cast<double>(iters);
  std::vector<double> sorted = res.samples_ms;
  std::sort(sorted.begin(), sorted.end());
  res.p50_ms = nearest_rank(sorted, 50.0);
  res.p95_ms = nearest_rank(sorted, 95.0);
  res.fps = 1000.0 / res.mean_ms;
  res.params = model.count_params();
  res.flops = model.count_flops(1, h, w).total();
  return res;
}

}  // namespace p2at
