#pragma once

#include <cstdint>

#include "p2at/tensor.hpp"

// Naive single-threaded reference kernels. Slow on purpose: each one is a
// direct transcription of the operation's definition, used as the oracle for
// the OpenMP kernels and as the baseline in the kernel benchmark.
namespace p2at::ref {

template <typename T>
void conv2d(const T* in, int64_t n, int64_t cin, int64_t h, int64_t w,
            const T* weight, int64_t cout, const T* bias, const KernelSpec& ks,
            T* out, int64_t oh, int64_t ow);

template <typename T>
void avg_pool2d(const T* in, int64_t n, int64_t c, int64_t h, int64_t w,
                const KernelSpec& ks, T* out, int64_t oh, int64_t ow);

template <typename T>
void bilinear(const T* in, int64_t n, int64_t c, int64_t h, int64_t w,
              T* out, int64_t oh, int64_t ow);

template <typename T>
void softmax(const T* in, int64_t outer, int64_t axis, int64_t inner, T* out);

template <typename T>
void matmul(const T* a, const T* b, int64_t batch, int64_t m, int64_t k, int64_t n,
            bool trans_a, bool trans_b, T* c);

template <typename T>
void batch_norm(const T* in, int64_t n, int64_t c, int64_t hw, const T* mean, const T* var,
                const T* gamma, const T* beta, T eps, T* out);

// Multi-head self-attention over a [len, c] sequence with residual output:
//   out = x + Wo @ concat_heads(softmax(q k^T / sqrt(dh) + rel_bias) v) + bo
// Projections are [c, c] matrices applied as y = W x + b; channel c belongs
// to head c / (c/heads). rel_bias[i][j] = table[head][clamp(i-j) + span - 1].
template <typename T>
void mha_seq(const T* x, int64_t len, int64_t c, int64_t heads,
             const T* wq, const T* bq, const T* wk, const T* bk,
             const T* wv, const T* bv, const T* wo, const T* bo,
             const T* pos_table, int64_t span, T* out);

}  // namespace p2at::ref
