#pragma once

#include <cstdint>
#include <vector>

#include "p2at/model.hpp"

namespace p2at {

struct BenchResult {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;  // nearest-rank percentile
  double fps = 0.0;     // 1000 / mean_ms
  int64_t params = 0;
  int64_t flops = 0;
  std::vector<double> samples_ms;  // timed iterations, warmup excluded
};

// Repeated single-image inference on a deterministic random input.
BenchResult bench_forward(ModelF& model, int64_t h, int64_t w, int64_t warmup, int64_t iters,
                          uint64_t seed);

}  // namespace p2at
