#include "p2at/ops.hpp"

#include <algorithm>
#include <cstring>
#include <string>

namespace p2at::ops {

namespace {

template <typename T>
void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

template <typename T>
void check_nchw(const Tensor<T>& t, const char* what) {
  if (t.rank() != 4)
    throw ShapeError(std::string(what) + " must be rank 4, got " + shape_str(t.shape));
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Ctx<T>& ctx, const Tensor<T>& in, const Tensor<T>& weight,
                 const Tensor<T>& bias, const KernelSpec& ks) {
  check_nchw(in, "conv2d input");
  check_nchw(weight, "conv2d weight");
  const int64_t n = in.dim(0), cin = in.dim(1), h = in.dim(2), w = in.dim(3);
  const int64_t cout = weight.dim(0);
  if (ks.groups < 1 || cin % ks.groups || cout % ks.groups)
    throw ShapeError("conv2d groups=" + std::to_string(ks.groups) + " does not divide cin=" +
                     std::to_string(cin) + ", cout=" + std::to_string(cout));
  if (weight.dim(1) != cin / ks.groups || weight.dim(2) != ks.kh || weight.dim(3) != ks.kw)
    throw ShapeError("conv2d weight " + shape_str(weight.shape) + " does not match input " +
                     shape_str(in.shape) + " with k=" + std::to_string(ks.kh) + "x" +
                     std::to_string(ks.kw) + " groups=" + std::to_string(ks.groups));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout))
    throw ShapeError("conv2d bias " + shape_str(bias.shape) + " must be [" +
                     std::to_string(cout) + "]");
  const auto [oh, ow] = ks.out_size(h, w);
  Tensor<T> out(Shape{n, cout, oh, ow});
  kernels::conv2d_fwd(in.ptr(), n, cin, h, w, weight.ptr(), cout,
                      bias.defined() ? bias.ptr() : nullptr, ks, out.ptr(), oh, ow);
  if (ctx.recording()) {
    auto& g = *ctx.graph;
    Tensor<T> tin = g.track(in);
    Tensor<T> tw = g.track(weight);
    Tensor<T> tb = bias.defined() ? g.track(bias) : bias;
    out.node = g.new_node(out.numel());
    const int onode = out.node;
    g.record([=](Graph<T>& gr) {
      if (!gr.has_grad(onode)) return;
      const T* go = gr.grad_buf(onode).data();
      kernels::conv2d_bwd_input(go, tw.ptr(), n, cin, h, w, cout, ks, oh, ow,
                                gr.grad_buf(tin.node).data());
      kernels::conv2d_bwd_weight(go, tin.ptr(), n, cin, h, w, cout, ks, oh, ow,
                                 gr.grad_buf(tw.node).data());
      if (tb.defined())
        kernels::conv2d_bwd_bias(go, n, cout, oh, ow, gr.grad_buf(tb.node).data());
    });
  }
  return out;
}

template <typename T>
Tensor<T> avg_pool2d(Ctx<T>& ctx, const Tensor<T>& in, const KernelSpec& ks) {
  check_nchw(in, "avg_pool2d input");
  const int64_t n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  const auto [oh, ow] = ks.out_size(h, w);
  Tensor<T> out(Shape{n, c, oh, ow});
  kernels::avgpool_fwd(in.ptr(), n, c, h, w, ks, out.ptr(), oh, ow);
  if (ctx.recording()) {
    auto& g = *ctx.graph;
    Tensor<T> tin = g.track(in);
    out.node = g.new_node(out.numel());
    const int onode = out.node;
    g.record([=](Graph<T>& gr) {
      if (!gr.has_grad(onode)) return;
      kernels::avgpool_bwd(gr.grad_buf(onode).data(), n, c, h, w, ks, oh, ow,
                           gr.grad_buf(tin.node).data());
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(Ctx<T>& ctx, const Tensor<T>& in) {
  check_nchw(in, "global_avg_pool input");
  KernelSpec ks;
  ks.kh = static_cast<int>(in.dim(2));
  ks.kw = static_cast<int>(in.dim(3));
  return avg_pool2d(ctx, in, ks);
}

template <typename T>
Tensor<T> bilinear_upsample(Ctx<T>& ctx, const Tensor<T>& in, int64_t oh, int64_t ow) {
  check_nchw(in, "bilinear_upsample input");
  if (oh < 1 || ow < 1) throw ShapeError("bilinear_upsample target must be positive");
  const int64_t n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  Tensor<T> out(Shape{n, c, oh, ow});
  kernels::bilinear_fwd(in.ptr(), n, c, h, w, out.ptr(), oh, ow);
  if (ctx.recording()) {
    auto& g = *ctx.graph;
    Tensor<T> tin = g.track(in);
    out.node = g.new_node(out.numel());
    const int onode = out.node;
    g.record([=](Graph<T>& gr) {
      if (!gr.has_grad(onode)) return;
      kernels::bilinear_bwd(gr.grad_buf(onode).data(), n, c, h, w, oh, ow,
                            gr.grad_buf(tin.node).data());
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax(Ctx<T>& ctx, const Tensor<T>& in, int axis) {
  if (axis < 0 || axis >= in.rank())
    throw ShapeError("softmax axis " + std::to_string(axis) + " out of range for " +
                     shape_str(in.shape));
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= in.dim(i);
  for (int i = axis + 1; i < in.rank(); ++i) inner *= in.dim(i);
  const int64_t ax = in.dim(axis);
  Tensor<T> out(in.shape);
  kernels::softmax_fwd(in.ptr(), outer, ax, inner, out.ptr());
  if (ctx.recording()) {
    auto& g = *ctx.graph;
    Tensor<T> tin = g.track(in);
    out.node = g.new_node(out.numel());
    const int onode = out.node;
    Tensor<T> y = out;
    g.record([=](Graph<T>& gr) {
      if (!gr.has_grad(onode)) return;
      kernels::softmax_bwd(y.ptr(), gr.grad_buf(onode).data(), outer, ax, inner,
                           gr.grad_buf(tin.node).data());
    });
  }
  return out;
}

namespace {

template <typename T>
Tensor<T> activation(Ctx<T>& ctx, const Tensor<T>& in, kernels::Act f) {
  Tensor<T> out(in.shape);
  kernels::act_fwd(f, in.ptr(), in.numel(), out.ptr());
  if (ctx.recording()) {
    auto& g = *ctx.graph;
    Tensor<T> tin = g.track(in);
    out.node = g.new_node(out.numel());
    const int onode = out.node;
    Tensor<T> y = out;
    const int64_t numel = in.numel();
    g.record([=](Graph<T>& gr) {
      if (!gr.has_grad(onode)) return;
      kernels::act_bwd(f, tin.ptr(), y.ptr(), gr.grad_buf(onode).data(), numel,
                       gr.grad_buf(tin.node).data());
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> sigmoid(Ctx<T>& ctx, const Tensor<T>& in) {
  return activation(ctx, in, kernels::Act::Sigmoid);
}

template <typename T>
Tensor<T> hardswish(Ctx<T>& ctx, const Tensor<T>& in) {
  return activation(ctx, in, kernels::Act::Hardswish);
}

template <typename T>
Tensor<T> relu(Ctx<T>& ctx, const Tensor<T>& in) {
  return activation(ctx, in, kernels::Act::Relu);
}

template <typename T>
Tensor<T> batch_norm(Ctx<T>& ctx, const Tensor<T>& in, const Tensor<T>& gamma,
                     const Tensor<T>& beta, Tensor<T>& running_mean, Tensor<T>& running_var,
                     T eps, T momentum) {
  check_nchw(in, "batch_norm input");
  const int64_t n = in.dim(0), c = in.dim(1), hw = in.dim(2) * in.dim(3);
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
      running_var.numel() != c)
    throw ShapeError("batch_norm parameter length does not match channels=" + std::to_string(c));

  Tensor<T> mean, var;
  if (ctx.training) {
    mean = Tensor<T>(Shape{c});
    var = Tensor<T>(Shape{c});
    kernels::bn_stats(in.ptr(), n, c, hw, mean.ptr(), var.ptr());
    for (int64_t i = 0; i < c; ++i) {
      running_mean.at(i) = (T(1) - momentum) * running_mean.at(i) + momentum * mean.at(i);
      running_var.at(i) = (T(1) - momentum) * running_var.at(i) + momentum * var.at(i);
    }
  } else {
    mean = running_mean.clone();
    var = running_var.clone();
  }

  Tensor<T> out(in.shape);
  kernels::bn_fwd(in.ptr(), n, c, hw, mean.ptr(), var.ptr(), gamma.ptr(), beta.ptr(), eps,
                  out.ptr());
  if (ctx.recording()) {
    auto& g = *ctx.graph;
    Tensor<T> tin = g.track(in);
    Tensor<T> tg = g.track(gamma);
    Tensor<T> tb = g.track(beta);
    out.node = g.new_node(out.numel());
    const int onode = out.node;
    const bool train = ctx.training;
    g.record([=](Graph<T>& gr) {
      if (!gr.has_grad(onode)) return;
      const T* go = gr.grad_buf(onode).data();
      T* gin = gr.grad_buf(tin.node).data();
      T* gg = gr.grad_buf(tg.node).data();
      T* gb = gr.grad_buf(tb.node).data();
      if (train)
        kernels::bn_bwd_train(tin.ptr(), go, n, c, hw, mean.ptr(), var.ptr(), tg.ptr(), eps,
                              gin, gg, gb);
      else
        kernels::bn_bwd_eval(tin.ptr(), go, n, c, hw, mean.ptr(), var.ptr(), tg.ptr(), eps,
                             gin, gg, gb);
    });
  }
  return out;
}

template <typename T>
Tensor<T> matmul(Ctx<T>& ctx, const Tensor<T>& a, const Tensor<T>& b,
                 bool trans_a, bool trans_b) {
  if (a.rank() != 3 || b.rank() != 3)
    throw ShapeError("matmul expects rank-3 operands, got " + shape_str(a.shape) + " and " +
                     shape_str(b.shape));
  const int64_t batch = a.dim(0);
  const int64_t m = trans_a ? a.dim(2) : a.dim(1);
  const int64_t k = trans_a ? a.dim(1) : a.dim(2);
  const int64_t kb = trans_b ? b.dim(2) : b.dim(1);
  const int64_t nn = trans_b ? b.dim(1) : b.dim(2);
  if (b.dim(0) != batch || kb != k)
    throw ShapeError("matmul operands " + shape_str(a.shape) + " and " + shape_str(b.shape) +
                     " are incompatible (trans_a=" + std::to_string(trans_a) +
                     ", trans_b=" + std::to_string(trans_b) + ")");
  Tensor<T> out(Shape{batch, m, nn});
  kernels::matmul(a.ptr(), b.ptr(), batch, m, k, nn, trans_a, trans_b, out.ptr(), false);
  if (ctx.recording()) {
    auto& g = *ctx.graph;
    Tensor<T> ta = g.track(a);
    Tensor<T> tb2 = g.track(b);
    out.node = g.new_node(out.numel());
    const int onode = out.node;
    g.record([=](Graph<T>& gr) {
      if (!gr.has_grad(onode)) return;
      const T* go = gr.grad_buf(onode).data();
      T* ga = gr.grad_buf(ta.node).data();
      T* gb = gr.grad_buf(tb2.node).data();
      if (!trans_a)
        kernels::matmul(go, tb2.ptr(), batch, m, nn, k, false, !trans_b, ga, true);
      else
        kernels::matmul(tb2.ptr(), go, batch, k, nn, m, trans_b, true, ga, true);
      if (!trans_b)
        kernels::matmul(ta.ptr(), go, batch, k, m, nn, !trans_a, false, gb, true);
      else
        kernels::matmul(go, ta.ptr(), batch, nn, m, k, true, trans_a, gb, true);
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(Ctx<T>& ctx, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape)
    throw ShapeError("add shapes differ: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Tensor<T> out(a.shape);
  const int64_t numel = a.numel();
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < numel; ++i) po[i] = pa[i] + pb[i];
  if (ctx.recording()) {
    auto& g = *ctx.graph;
    Tensor<T> ta = g.track(a);
    Tensor<T> tb = g.track(b);
    out.node = g.new_node(numel);
    const int onode = out.node;
    g.record([=](Graph<T>& gr) {
      if (!gr.has_grad(onode)) return;
      const T* go = gr.grad_buf(onode).data();
      T* ga = gr.grad_buf(ta.node).data();
      T* gb = gr.grad_buf(tb.node).data();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < numel; ++i) {
        ga[i] += go[i];
        gb[i] += go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Ctx<T>& ctx, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape)
    throw ShapeError("mul shapes differ: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Tensor<T> out(a.shape);
  const int64_t numel = a.numel();
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < numel; ++i) po[i] = pa[i] * pb[i];
  if (ctx.recording()) {
    auto& g = *ctx.graph;
    Tensor<T> ta = g.track(a);
    Tensor<T> tb = g.track(b);
    out.node = g.new_node(numel);
    const int onode = out.node;
    g.record([=](Graph<T>& gr) {
      if (!gr.has_grad(onode)) return;
      const T* go = gr.grad_buf(onode).data();
      T* ga = gr.grad_buf(ta.node).data();
      T* gb = gr.grad_buf(tb.node).data();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < numel; ++i) {
        ga[i] += go[i] * tb.ptr()[i];
        gb[i] += go[i] * ta.ptr()[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Ctx<T>& ctx, const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape);
  const int64_t numel = a.numel();
  const T* pa = a.ptr();
  T* po = out.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < numel; ++i) po[i] = pa[i] * s;
  if (ctx.recording()) {
    auto& g = *ctx.graph;
    Tensor<T> ta = g.track(a);
    out.node = g.new_node(numel);
    const int onode = out.node;
    g.record([=](Graph<T>& gr) {
      if (!gr.has_grad(onode)) return;
      const T* go = gr.grad_buf(onode).data();
      T* ga = gr.grad_buf(ta.node).data();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < numel; ++i) ga[i] += go[i] * s;
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Ctx<T>& ctx, const Tensor<T>& a) {
  Tensor<T> out(Shape{1});
  out.at(0) = kernels::reduce_sum(a.ptr(), a.numel());
  if (ctx.recording()) {
    auto& g = *ctx.graph;
    Tensor<T> ta = g.track(a);
    out.node = g.new_node(1);
    const int onode = out.node;
    const int64_t numel = a.numel();
    g.record([=](Graph<T>& gr) {
      if (!gr.has_grad(onode)) return;
      const T go = gr.grad_buf(onode)[0];
      T* ga = gr.grad_buf(ta.node).data();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < numel; ++i) ga[i] += go;
    });
  }
  return out;
}

namespace {

template <typename T>
void check_channel_operand(const Tensor<T>& x, const Tensor<T>& s, const char* what) {
  check_nchw(x, what);
  if (s.rank() != 4 || s.dim(0) != x.dim(0) || s.dim(1) != x.dim(1) || s.dim(2) != 1 ||
      s.dim(3) != 1)
    throw ShapeError(std::string(what) + " per-channel operand must be [" +
                     std::to_string(x.dim(0)) + "x" + std::to_string(x.dim(1)) +
                     "x1x1], got " + shape_str(s.shape));
}

}  // namespace

template <typename T>
Tensor<T> mul_channel(Ctx<T>& ctx, const Tensor<T>& x, const Tensor<T>& s) {
  check_channel_operand(x, s, "mul_channel");
  const int64_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out(x.shape);
  const T* px = x.ptr();
  const T* ps = s.ptr();
  T* po = out.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < nc; ++p) {
    const T sv = ps[p];
    for (int64_t i = 0; i < hw; ++i) po[p * hw + i] = px[p * hw + i] * sv;
  }
  if (ctx.recording()) {
    auto& g = *ctx.graph;
    Tensor<T> tx = g.track(x);
    Tensor<T> ts = g.track(s);
    out.node = g.new_node(out.numel());
    const int onode = out.node;
    g.record([=](Graph<T>& gr) {
      if (!gr.has_grad(onode)) return;
      const T* go = gr.grad_buf(onode).data();
      T* gx = gr.grad_buf(tx.node).data();
      T* gs = gr.grad_buf(ts.node).data();
#pragma omp parallel for schedule(static)
      for (int64_t p = 0; p < nc; ++p) {
        const T sv = ts.ptr()[p];
        T acc = T(0);
        for (int64_t i = 0; i < hw; ++i) {
          gx[p * hw + i] += go[p * hw + i] * sv;
          acc += go[p * hw + i] * tx.ptr()[p * hw + i];
        }
        gs[p] += acc;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_channel(Ctx<T>& ctx, const Tensor<T>& x, const Tensor<T>& b) {
  check_channel_operand(x, b, "add_channel");
  const int64_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out(x.shape);
  const T* px = x.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < nc; ++p) {
    const T bv = pb[p];
    for (int64_t i = 0; i < hw; ++i) po[p * hw + i] = px[p * hw + i] + bv;
  }
  if (ctx.recording()) {
    auto& g = *ctx.graph;
    Tensor<T> tx = g.track(x);
    Tensor<T> tb = g.track(b);
    out.node = g.new_node(out.numel());
    const int onode = out.node;
    g.record([=](Graph<T>& gr) {
      if (!gr.has_grad(onode)) return;
      const T* go = gr.grad_buf(onode).data();
      T* gx = gr.grad_buf(tx.node).data();
      T* gb = gr.grad_buf(tb.node).data();
#pragma omp parallel for schedule(static)
      for (int64_t p = 0; p < nc; ++p) {
        T acc = T(0);
        for (int64_t i = 0; i < hw; ++i) {
          gx[p * hw + i] += go[p * hw + i];
          acc += go[p * hw + i];
        }
        gb[p] += acc;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(Ctx<T>& ctx, const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels needs at least one input");
  const int64_t n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
  int64_t ctot = 0;
  for (const auto& x : xs) {
    check_nchw(x, "concat_channels input");
    if (x.dim(0) != n || x.dim(2) != h || x.dim(3) != w)
      throw ShapeError("concat_channels input " + shape_str(x.shape) +
                       " does not match leading input " + shape_str(xs[0].shape));
    ctot += x.dim(1);
  }
  Tensor<T> out(Shape{n, ctot, h, w});
  const int64_t hw = h * w;
  int64_t coff = 0;
  for (const auto& x : xs) {
    const int64_t cx = x.dim(1);
#pragma omp parallel for schedule(static)
    for (int64_t b = 0; b < n; ++b)
      std::memcpy(out.ptr() + (b * ctot + coff) * hw, x.ptr() + b * cx * hw,
                  static_cast<size_t>(cx * hw) * sizeof(T));
    coff += cx;
  }
  if (ctx.recording()) {
    auto& g = *ctx.graph;
    std::vector<Tensor<T>> txs;
    txs.reserve(xs.size());
    for (const auto& x : xs) txs.push_back(g.track(x));
    out.node = g.new_node(out.numel());
    const int onode = out.node;
    g.record([=](Graph<T>& gr) {
      if (!gr.has_grad(onode)) return;
      const T* go = gr.grad_buf(onode).data();
      int64_t off = 0;
      for (const auto& tx : txs) {
        const int64_t cx = tx.dim(1);
        T* gx = gr.grad_buf(tx.node).data();
#pragma omp parallel for schedule(static)
        for (int64_t b = 0; b < n; ++b) {
          const T* src = go + (b * ctot + off) * hw;
          T* dst = gx + b * cx * hw;
          for (int64_t i = 0; i < cx * hw; ++i) dst[i] += src[i];
        }
        off += cx;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> permute(Ctx<T>& ctx, const Tensor<T>& x, const std::vector<int>& axes) {
  const int r = x.rank();
  if (static_cast<int>(axes.size()) != r)
    throw ShapeError("permute axes count " + std::to_string(axes.size()) +
                     " does not match rank " + std::to_string(r));
  std::vector<bool> seen(static_cast<size_t>(r), false);
  for (int a : axes) {
    if (a < 0 || a >= r || seen[static_cast<size_t>(a)])
      throw ShapeError("permute axes are not a permutation of 0.." + std::to_string(r - 1));
    seen[static_cast<size_t>(a)] = true;
  }
  Shape oshape(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i)
    oshape[static_cast<size_t>(i)] = x.dim(axes[static_cast<size_t>(i)]);
  Tensor<T> out(oshape);
  kernels::permute_copy(x.ptr(), x.shape, axes, out.ptr());
  if (ctx.recording()) {
    auto& g = *ctx.graph;
    Tensor<T> tx = g.track(x);
    out.node = g.new_node(out.numel());
    const int onode = out.node;
    const Shape ishape = x.shape;
    g.record([=](Graph<T>& gr) {
      if (!gr.has_grad(onode)) return;
      kernels::permute_acc(gr.grad_buf(onode).data(), ishape, axes,
                           gr.grad_buf(tx.node).data());
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(Ctx<T>& ctx, const Tensor<T>& x, const Shape& shape) {
  Tensor<T> src = ctx.recording() ? ctx.graph->track(x) : x;
  Tensor<T> out = src.viewed(shape);
  out.node = src.node;
  return out;
}

template <typename T>
Tensor<T> rel_pos_bias(Ctx<T>& ctx, const Tensor<T>& scores, const Tensor<T>& table,
                       int64_t heads, int64_t span) {
  if (scores.rank() != 3 || scores.dim(1) != scores.dim(2))
    throw ShapeError("rel_pos_bias scores must be [B,L,L], got " + shape_str(scores.shape));
  if (table.rank() != 2 || table.dim(0) != heads || table.dim(1) != 2 * span - 1)
    throw ShapeError("rel_pos_bias table must be [" + std::to_string(heads) + "x" +
                     std::to_string(2 * span - 1) + "], got " + shape_str(table.shape));
  const int64_t batch = scores.dim(0), len = scores.dim(1);
  if (batch % heads)
    throw ShapeError("rel_pos_bias batch " + std::to_string(batch) +
                     " is not a multiple of heads " + std::to_string(heads));
  Tensor<T> out = scores.clone();
  kernels::relbias_fwd(out.ptr(), batch, len, table.ptr(), heads, span);
  if (ctx.recording()) {
    auto& g = *ctx.graph;
    Tensor<T> ts = g.track(scores);
    Tensor<T> tt = g.track(table);
    out.node = g.new_node(out.numel());
    const int onode = out.node;
    const int64_t numel = out.numel();
    g.record([=](Graph<T>& gr) {
      if (!gr.has_grad(onode)) return;
      const T* go = gr.grad_buf(onode).data();
      T* gs = gr.grad_buf(ts.node).data();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < numel; ++i) gs[i] += go[i];
      kernels::relbias_bwd(go, batch, len, heads, span, gr.grad_buf(tt.node).data());
    });
  }
  return out;
}

#define P2AT_OPS_INSTANTIATE(T)                                                                   \
  template Tensor<T> conv2d<T>(Ctx<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                               const KernelSpec&);                                                \
  template Tensor<T> avg_pool2d<T>(Ctx<T>&, const Tensor<T>&, const KernelSpec&);                \
  template Tensor<T> global_avg_pool<T>(Ctx<T>&, const Tensor<T>&);                              \
  template Tensor<T> bilinear_upsample<T>(Ctx<T>&, const Tensor<T>&, int64_t, int64_t);          \
  template Tensor<T> softmax<T>(Ctx<T>&, const Tensor<T>&, int);                                 \
  template Tensor<T> sigmoid<T>(Ctx<T>&, const Tensor<T>&);                                      \
  template Tensor<T> hardswish<T>(Ctx<T>&, const Tensor<T>&);                                    \
  template Tensor<T> relu<T>(Ctx<T>&, const Tensor<T>&);                                         \
  template Tensor<T> batch_norm<T>(Ctx<T>&, const Tensor<T>&, const Tensor<T>&,                  \
                                   const Tensor<T>&, Tensor<T>&, Tensor<T>&, T, T);              \
  template Tensor<T> matmul<T>(Ctx<T>&, const Tensor<T>&, const Tensor<T>&, bool, bool);         \
  template Tensor<T> add<T>(Ctx<T>&, const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> mul<T>(Ctx<T>&, const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> scale<T>(Ctx<T>&, const Tensor<T>&, T);                                     \
  template Tensor<T> sum<T>(Ctx<T>&, const Tensor<T>&);                                          \
  template Tensor<T> mul_channel<T>(Ctx<T>&, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> add_channel<T>(Ctx<T>&, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> concat_channels<T>(Ctx<T>&, const std::vector<Tensor<T>>&);                 \
  template Tensor<T> permute<T>(Ctx<T>&, const Tensor<T>&, const std::vector<int>&);             \
  template Tensor<T> reshape<T>(Ctx<T>&, const Tensor<T>&, const Shape&);                        \
  template Tensor<T> rel_pos_bias<T>(Ctx<T>&, const Tensor<T>&, const Tensor<T>&, int64_t,       \
                                     int64_t);

P2AT_OPS_INSTANTIATE(float)
P2AT_OPS_INSTANTIATE(double)

#undef P2AT_OPS_INSTANTIATE

}  // namespace p2at::ops
