#pragma once

#include <cstdint>

#include "p2at/tensor.hpp"

// Raw OpenMP compute kernels. Every parallel loop writes disjoint output
// elements and accumulates in a fixed serial order inside each element, so
// results are bitwise identical for any thread count. Backward kernels
// accumulate (+=) into caller-provided buffers.
namespace p2at::kernels {

enum class Act { Sigmoid, Hardswish, Relu };

template <typename T>
void conv2d_fwd(const T* in, int64_t n, int64_t cin, int64_t h, int64_t w,
                const T* weight, int64_t cout, const T* bias, const KernelSpec& ks,
                T* out, int64_t oh, int64_t ow);

template <typename T>
void conv2d_bwd_input(const T* gout, const T* weight, int64_t n, int64_t cin, int64_t h, int64_t w,
                      int64_t cout, const KernelSpec& ks, int64_t oh, int64_t ow, T* gin);

template <typename T>
void conv2d_bwd_weight(const T* gout, const T* in, int64_t n, int64_t cin, int64_t h, int64_t w,
                       int64_t cout, const KernelSpec& ks, int64_t oh, int64_t ow, T* gweight);

template <typename T>
void conv2d_bwd_bias(const T* gout, int64_t n, int64_t cout, int64_t oh, int64_t ow, T* gbias);

// Mean over the valid (non-padding) window elements only.
template <typename T>
void avgpool_fwd(const T* in, int64_t n, int64_t c, int64_t h, int64_t w,
                 const KernelSpec& ks, T* out, int64_t oh, int64_t ow);

template <typename T>
void avgpool_bwd(const T* gout, int64_t n, int64_t c, int64_t h, int64_t w,
                 const KernelSpec& ks, int64_t oh, int64_t ow, T* gin);

// Half-pixel-center sampling: src = (dst + 0.5) * scale - 0.5, clamped.
template <typename T>
void bilinear_fwd(const T* in, int64_t n, int64_t c, int64_t h, int64_t w,
                  T* out, int64_t oh, int64_t ow);

template <typename T>
void bilinear_bwd(const T* gout, int64_t n, int64_t c, int64_t h, int64_t w,
                  int64_t oh, int64_t ow, T* gin);

// Softmax over the middle extent of an [outer, axis, inner] view, with
// max-subtraction.
template <typename T>
void softmax_fwd(const T* in, int64_t outer, int64_t axis, int64_t inner, T* out);

template <typename T>
void softmax_bwd(const T* y, const T* gout, int64_t outer, int64_t axis, int64_t inner, T* gin);

template <typename T>
void act_fwd(Act f, const T* in, int64_t numel, T* out);

template <typename T>
void act_bwd(Act f, const T* in, const T* out, const T* gout, int64_t numel, T* gin);

// Per-channel mean and biased variance over N*H*W elements.
template <typename T>
void bn_stats(const T* in, int64_t n, int64_t c, int64_t hw, T* mean, T* var);

template <typename T>
void bn_fwd(const T* in, int64_t n, int64_t c, int64_t hw, const T* mean, const T* var,
            const T* gamma, const T* beta, T eps, T* out);

template <typename T>
void bn_bwd_train(const T* in, const T* gout, int64_t n, int64_t c, int64_t hw,
                  const T* mean, const T* var, const T* gamma, T eps,
                  T* gin, T* ggamma, T* gbeta);

template <typename T>
void bn_bwd_eval(const T* in, const T* gout, int64_t n, int64_t c, int64_t hw,
                 const T* mean, const T* var, const T* gamma, T eps,
                 T* gin, T* ggamma, T* gbeta);

// C[b] (+)= op(A[b]) * op(B[b]) for b in [0, batch), with optional transposes
// of the last two dims. A is [m,k] (or [k,m] transposed), B is [k,n] likewise.
template <typename T>
void matmul(const T* a, const T* b, int64_t batch, int64_t m, int64_t k, int64_t n,
            bool trans_a, bool trans_b, T* c, bool accumulate);

// out[o] = in[inverse-permuted index]; shapes/axes given for the input.
template <typename T>
void permute_copy(const T* in, const Shape& in_shape, const std::vector<int>& axes, T* out);

template <typename T>
void permute_acc(const T* gout, const Shape& in_shape, const std::vector<int>& axes, T* gin);

// scores[b, i, j] += table[b % heads, clamp(i - j, ±(span-1)) + span - 1]
template <typename T>
void relbias_fwd(T* scores, int64_t batch, int64_t len, const T* table, int64_t heads, int64_t span);

template <typename T>
void relbias_bwd(const T* gscores, int64_t batch, int64_t len, int64_t heads, int64_t span, T* gtable);

// Deterministic full-tensor sum: fixed-size chunks reduced in index order.
template <typename T>
T reduce_sum(const T* x, int64_t numel);

}  // namespace p2at::kernels
