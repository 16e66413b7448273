#pragma once

#include <vector>

#include "p2at/graph.hpp"
#include "p2at/kernels.hpp"
#include "p2at/tensor.hpp"

// Differentiable tensor ops. Each op validates shapes, runs the forward
// kernel, and (when ctx carries a graph) records a backward closure on the
// tape. Inputs are NCHW unless stated otherwise.
namespace p2at::ops {

// in [N,Cin,H,W], weight [Cout,Cin/groups,kh,kw], bias [Cout] or undefined.
template <typename T>
Tensor<T> conv2d(Ctx<T>& ctx, const Tensor<T>& in, const Tensor<T>& weight,
                 const Tensor<T>& bias, const KernelSpec& ks);

template <typename T>
Tensor<T> avg_pool2d(Ctx<T>& ctx, const Tensor<T>& in, const KernelSpec& ks);

// Full-window average pool to [N,C,1,1].
template <typename T>
Tensor<T> global_avg_pool(Ctx<T>& ctx, const Tensor<T>& in);

template <typename T>
Tensor<T> bilinear_upsample(Ctx<T>& ctx, const Tensor<T>& in, int64_t oh, int64_t ow);

template <typename T>
Tensor<T> softmax(Ctx<T>& ctx, const Tensor<T>& in, int axis);

template <typename T>
Tensor<T> sigmoid(Ctx<T>& ctx, const Tensor<T>& in);

template <typename T>
Tensor<T> hardswish(Ctx<T>& ctx, const Tensor<T>& in);

template <typename T>
Tensor<T> relu(Ctx<T>& ctx, const Tensor<T>& in);

// Training mode normalizes with batch statistics (biased variance) and
// updates the running buffers in place: r = (1 - momentum)*r + momentum*batch.
// Eval mode normalizes with the running buffers.
template <typename T>
Tensor<T> batch_norm(Ctx<T>& ctx, const Tensor<T>& in, const Tensor<T>& gamma,
                     const Tensor<T>& beta, Tensor<T>& running_mean, Tensor<T>& running_var,
                     T eps, T momentum);

// a [B,M,K] (or [B,K,M] when trans_a), b [B,K,N] (or [B,N,K] when trans_b),
// result [B,M,N].
template <typename T>
Tensor<T> matmul(Ctx<T>& ctx, const Tensor<T>& a, const Tensor<T>& b,
                 bool trans_a = false, bool trans_b = false);

template <typename T>
Tensor<T> add(Ctx<T>& ctx, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(Ctx<T>& ctx, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Ctx<T>& ctx, const Tensor<T>& a, T s);

template <typename T>
Tensor<T> sum(Ctx<T>& ctx, const Tensor<T>& a);

// x [N,C,H,W] times s [N,C,1,1] broadcast over H,W.
template <typename T>
Tensor<T> mul_channel(Ctx<T>& ctx, const Tensor<T>& x, const Tensor<T>& s);

// x [N,C,H,W] plus b [N,C,1,1] broadcast over H,W.
template <typename T>
Tensor<T> add_channel(Ctx<T>& ctx, const Tensor<T>& x, const Tensor<T>& b);

template <typename T>
Tensor<T> concat_channels(Ctx<T>& ctx, const std::vector<Tensor<T>>& xs);

template <typename T>
Tensor<T> permute(Ctx<T>& ctx, const Tensor<T>& x, const std::vector<int>& axes);

// Shares storage and tape node; no copy, no tape entry.
template <typename T>
Tensor<T> reshape(Ctx<T>& ctx, const Tensor<T>& x, const Shape& shape);

// scores [B,L,L] plus per-head relative position bias (head = b % heads),
// table [heads, 2*span-1] with offsets clamped to the span.
template <typename T>
Tensor<T> rel_pos_bias(Ctx<T>& ctx, const Tensor<T>& scores, const Tensor<T>& table,
                       int64_t heads, int64_t span);

}  // namespace p2at::ops
