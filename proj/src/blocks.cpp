#include "p2at/blocks.hpp"

#include <cmath>

namespace p2at {

namespace {

int64_t div_up4(int64_t c) { return c / 4 < 1 ? 1 : c / 4; }

}  // namespace

template <typename T>
Conv2dLayer<T>::Conv2dLayer(ParamRegistry<T>& reg, const std::string& name, int64_t cin,
                            int64_t cout, int k, int stride, int pad, int groups,
                            bool with_bias, WeightInit init) {
  if (groups < 1 || cin % groups || cout % groups)
    throw ConfigError("conv " + name + ": groups=" + std::to_string(groups) +
                      " must divide cin=" + std::to_string(cin) + " and cout=" +
                      std::to_string(cout));
  ks = KernelSpec::square(k, stride, pad, groups);
  const Shape wshape{cout, cin / groups, k, k};
  weight = init == WeightInit::Zero ? &reg.zeros(name + ".weight", wshape)
                                    : &reg.kaiming(name + ".weight", wshape);
  if (with_bias) bias = &reg.zeros(name + ".bias", Shape{cout});
}

template <typename T>
Tensor<T> Conv2dLayer<T>::forward(Ctx<T>& ctx, const Tensor<T>& x) const {
  return ops::conv2d(ctx, x, weight->value, bias ? bias->value : Tensor<T>(), ks);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(ParamRegistry<T>& reg, const std::string& name, int64_t c) {
  gamma = &reg.ones(name + ".gamma", Shape{c});
  beta = &reg.zeros(name + ".beta", Shape{c});
  running_mean = &reg.zeros(name + ".running_mean", Shape{c}, false);
  running_var = &reg.ones(name + ".running_var", Shape{c}, false);
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(Ctx<T>& ctx, const Tensor<T>& x) const {
  return ops::batch_norm(ctx, x, gamma->value, beta->value, running_mean->value,
                         running_var->value, eps, momentum);
}

template <typename T>
ConvBN<T>::ConvBN(ParamRegistry<T>& reg, const std::string& name, int64_t cin, int64_t cout,
                  int k, int stride, int pad, int groups, PostAct act)
    : conv(reg, name + ".conv", cin, cout, k, stride, pad, groups, false),
      bn(reg, name + ".bn", cout),
      act(act) {}

template <typename T>
Tensor<T> ConvBN<T>::forward(Ctx<T>& ctx, const Tensor<T>& x) const {
  Tensor<T> y = bn.forward(ctx, conv.forward(ctx, x));
  switch (act) {
    case PostAct::Relu: return ops::relu(ctx, y);
    case PostAct::Hardswish: return ops::hardswish(ctx, y);
    case PostAct::None: return y;
  }
  return y;
}

template <typename T>
BasicBlock<T>::BasicBlock(ParamRegistry<T>& reg, const std::string& name, int64_t cin,
                          int64_t cout, int stride)
    : conv1(reg, name + ".conv1", cin, cout, 3, stride, 1, 1, PostAct::Relu),
      conv2(reg, name + ".conv2", cout, cout, 3, 1, 1, 1, PostAct::None) {
  has_down = stride != 1 || cin != cout;
  if (has_down) down = ConvBN<T>(reg, name + ".down", cin, cout, 1, stride, 0, 1, PostAct::None);
}

template <typename T>
Tensor<T> BasicBlock<T>::forward(Ctx<T>& ctx, const Tensor<T>& x) const {
  Tensor<T> y = conv2.forward(ctx, conv1.forward(ctx, x));
  Tensor<T> skip = has_down ? down.forward(ctx, x) : x;
  return ops::relu(ctx, ops::add(ctx, y, skip));
}

template <typename T>
Bottleneck<T>::Bottleneck(ParamRegistry<T>& reg, const std::string& name, int64_t cin,
                          int64_t cout, int stride)
    : conv1(reg, name + ".conv1", cin, div_up4(cout), 1, 1, 0, 1, PostAct::Relu),
      conv2(reg, name + ".conv2", div_up4(cout), div_up4(cout), 3, stride, 1, 1, PostAct::Relu),
      conv3(reg, name + ".conv3", div_up4(cout), cout, 1, 1, 0, 1, PostAct::None) {
  has_down = stride != 1 || cin != cout;
  if (has_down) down = ConvBN<T>(reg, name + ".down", cin, cout, 1, stride, 0, 1, PostAct::None);
}

template <typename T>
Tensor<T> Bottleneck<T>::forward(Ctx<T>& ctx, const Tensor<T>& x) const {
  Tensor<T> y = conv3.forward(ctx, conv2.forward(ctx, conv1.forward(ctx, x)));
  Tensor<T> skip = has_down ? down.forward(ctx, x) : x;
  return ops::relu(ctx, ops::add(ctx, y, skip));
}

template <typename T>
PyramidPool<T>::PyramidPool(ParamRegistry<T>& reg, const std::string& name, int64_t c)
    : theta(reg, name + ".theta", c, c, 1, 1, 0, 1, true),
      dw(reg, name + ".dw", c, c, 3, 1, 1, static_cast<int>(c), false, WeightInit::Zero) {}

template <typename T>
Tensor<T> PyramidPool<T>::forward(Ctx<T>& ctx, const Tensor<T>& x) const {
  Tensor<T> xp = theta.forward(ctx, x);
  Tensor<T> p1 = ops::avg_pool2d(ctx, xp, KernelSpec::square(3, 1, 1));
  Tensor<T> p2 = ops::avg_pool2d(ctx, p1, KernelSpec::square(5, 1, 2));
  Tensor<T> p3 = ops::avg_pool2d(ctx, p2, KernelSpec::square(7, 1, 3));
  Tensor<T> s = ops::add(ctx, ops::add(ctx, xp, p1), ops::add(ctx, p2, p3));
  return dw.forward(ctx, s);
}

template <typename T>
AxialAttention<T>::AxialAttention(ParamRegistry<T>& reg, const std::string& name, int64_t c,
                                  int64_t heads_, int64_t span_) {
  channels = c;
  heads = heads_;
  span = span_;
  if (heads < 1 || c % heads)
    throw ConfigError("attention " + name + ": heads=" + std::to_string(heads) +
                      " must divide channels=" + std::to_string(c));
  if (span < 1) throw ConfigError("attention " + name + ": span must be >= 1");
  auto make_pass = [&](const std::string& axis) {
    AxisPass p;
    p.q = Conv2dLayer<T>(reg, name + "." + axis + ".q_proj", c, c, 1, 1, 0, 1, true);
    p.k = Conv2dLayer<T>(reg, name + "." + axis + ".k_proj", c, c, 1, 1, 0, 1, true);
    p.v = Conv2dLayer<T>(reg, name + "." + axis + ".v_proj", c, c, 1, 1, 0, 1, true);
    p.out = Conv2dLayer<T>(reg, name + "." + axis + ".out_proj", c, c, 1, 1, 0, 1, true,
                           WeightInit::Zero);
    p.pos_bias = &reg.zeros(name + "." + axis + ".pos_bias", Shape{heads, 2 * span - 1});
    return p;
  };
  height = make_pass("height");
  width = make_pass("width");
}

template <typename T>
Tensor<T> AxialAttention<T>::axis_pass(Ctx<T>& ctx, const Tensor<T>& x, bool along_width) const {
  const AxisPass& p = along_width ? width : height;
  const int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int64_t dh = channels / heads;
  const int64_t len = along_width ? w : h;
  const int64_t other = along_width ? h : w;

  Tensor<T> q = p.q.forward(ctx, x);
  Tensor<T> k = p.k.forward(ctx, x);
  Tensor<T> v = p.v.forward(ctx, x);

  // [N,C,H,W] -> [N, other, heads, len, dh] -> [N*other*heads, len, dh]
  const std::vector<int> to_seq = along_width ? std::vector<int>{0, 3, 1, 4, 2}
                                              : std::vector<int>{0, 4, 1, 3, 2};
  const std::vector<int> from_seq = along_width ? std::vector<int>{0, 2, 4, 1, 3}
                                                : std::vector<int>{0, 2, 4, 3, 1};
  auto to_tokens = [&](const Tensor<T>& t) {
    Tensor<T> split = ops::reshape(ctx, t, Shape{n, heads, dh, h, w});
    Tensor<T> perm = ops::permute(ctx, split, to_seq);
    return ops::reshape(ctx, perm, Shape{n * other * heads, len, dh});
  };

  Tensor<T> qs = ops::scale(ctx, to_tokens(q), T(1) / static_cast<T>(std::sqrt(double(dh))));
  Tensor<T> scores = ops::matmul(ctx, qs, to_tokens(k), false, true);
  scores = ops::rel_pos_bias(ctx, scores, p.pos_bias->value, heads, span);
  Tensor<T> attn = ops::softmax(ctx, scores, 2);
  Tensor<T> mixed = ops::matmul(ctx, attn, to_tokens(v));

  Tensor<T> grid = ops::reshape(ctx, mixed, Shape{n, other, heads, len, dh});
  grid = ops::permute(ctx, grid, from_seq);
  grid = ops::reshape(ctx, grid, Shape{n, channels, h, w});
  return ops::add(ctx, x, p.out.forward(ctx, grid));
}

template <typename T>
Tensor<T> AxialAttention<T>::forward(Ctx<T>& ctx, const Tensor<T>& x) const {
  return axis_pass(ctx, axis_pass(ctx, x, false), true);
}

template <typename T>
P2A2Layer<T>::P2A2Layer(ParamRegistry<T>& reg, const std::string& name, int64_t c,
                        int64_t heads, int64_t ffn_ratio, int64_t span)
    : pool(reg, name + ".pool", c),
      attn(reg, name + ".attn", c, heads, span),
      ffn_expand(reg, name + ".ffn.expand", c, c * ffn_ratio, 1, 1, 0, 1, true),
      ffn_project(reg, name + ".ffn.project", c * ffn_ratio, c, 1, 1, 0, 1, true,
                  WeightInit::Zero) {}

template <typename T>
Tensor<T> P2A2Layer<T>::forward(Ctx<T>& ctx, const Tensor<T>& x) const {
  Tensor<T> zp = ops::add(ctx, attn.forward(ctx, pool.forward(ctx, x)), x);
  Tensor<T> f = ffn_project.forward(ctx, ops::hardswish(ctx, ffn_expand.forward(ctx, zp)));
  return ops::add(ctx, f, zp);
}

template <typename T>
Aggregator<T>::Aggregator(ParamRegistry<T>& reg, const std::string& name, int64_t c,
                          int64_t depth, int64_t heads, int64_t ffn_ratio, int64_t span) {
  layers.reserve(static_cast<size_t>(depth));
  for (int64_t i = 0; i < depth; ++i)
    layers.emplace_back(reg, name + ".layer" + std::to_string(i), c, heads, ffn_ratio, span);
}

template <typename T>
Tensor<T> Aggregator<T>::forward(Ctx<T>& ctx, const Tensor<T>& x) const {
  Tensor<T> y = x;
  for (const auto& l : layers) y = l.forward(ctx, y);
  return y;
}

template <typename T>
Sfu<T>::Sfu(ParamRegistry<T>& reg, const std::string& name, int64_t c)
    : alpha(reg, name + ".alpha", c, c, 1, 1, 0, 1, true),
      beta(reg, name + ".beta", c, c, 1, 1, 0, 1, true) {}

template <typename T>
Tensor<T> Sfu<T>::forward(Ctx<T>& ctx, const Tensor<T>& d) const {
  return ops::mul(ctx, alpha.forward(ctx, d), ops::softmax(ctx, beta.forward(ctx, d), 1));
}

template <typename T>
Lfr<T>::Lfr(ParamRegistry<T>& reg, const std::string& name, int64_t c)
    : spatial(reg, name + ".spatial", c, c, 1, 1, 0, 1, true),
      global_desc(reg, name + ".global", c, c, 1, 1, 0, 1, true),
      project(reg, name + ".project", c, c, 1, 1, 0, 1, true) {}

template <typename T>
Tensor<T> Lfr<T>::forward(Ctx<T>& ctx, const Tensor<T>& f) const {
  Tensor<T> fg = ops::sigmoid(ctx, spatial.forward(ctx, f));
  Tensor<T> g = global_desc.forward(ctx, ops::global_avg_pool(ctx, f));
  Tensor<T> l = project.forward(ctx, ops::add_channel(ctx, fg, g));
  return ops::mul(ctx, l, f);
}

template <typename T>
BifFuse<T>::BifFuse(ParamRegistry<T>& reg, const std::string& name, int64_t deep_c,
                    int64_t low_c, int64_t stage_c, int64_t out_c)
    : sfu(reg, name + ".sfu", deep_c),
      lfr(reg, name + ".lfr", low_c),
      stage_proj(reg, name + ".proj", stage_c, out_c, 1, 1, 0, 1, false),
      fuse_conv(reg, name + ".fuse.conv", low_c + deep_c + out_c, out_c, 3, 1, 1, 1, false),
      fuse_bn(reg, name + ".fuse.bn", out_c) {}

template <typename T>
Tensor<T> BifFuse<T>::forward(Ctx<T>& ctx, const Tensor<T>& d, const Tensor<T>& f_low,
                              const Tensor<T>& f_s) const {
  if (f_low.dim(2) != f_s.dim(2) || f_low.dim(3) != f_s.dim(3))
    throw ShapeError("fusion operands disagree spatially: " + shape_str(f_low.shape) + " vs " +
                     shape_str(f_s.shape));
  Tensor<T> s = sfu.forward(ctx, d);
  Tensor<T> s_up = ops::bilinear_upsample(ctx, s, f_s.dim(2), f_s.dim(3));
  std::vector<Tensor<T>> parts{lfr.forward(ctx, f_low), s_up, stage_proj.forward(ctx, f_s)};
  Tensor<T> fused = fuse_conv.forward(ctx, ops::concat_channels(ctx, parts));
  return ops::hardswish(ctx, fuse_bn.forward(ctx, fused));
}

template <typename T>
Gce<T>::Gce(ParamRegistry<T>& reg, const std::string& name, int64_t c)
    : squeeze(reg, name + ".squeeze", c, div_up4(c), 1, 1, 0, 1, true),
      excite(reg, name + ".excite", div_up4(c), c, 1, 1, 0, 1, true, WeightInit::Zero) {}

template <typename T>
Tensor<T> Gce<T>::forward(Ctx<T>& ctx, const Tensor<T>& b) const {
  Tensor<T> g = ops::global_avg_pool(ctx, b);
  g = ops::sigmoid(ctx, excite.forward(ctx, ops::relu(ctx, squeeze.forward(ctx, g))));
  return ops::add(ctx, b, ops::mul_channel(ctx, b, g));
}

template <typename T>
DecoderBlock<T>::DecoderBlock(ParamRegistry<T>& reg, const std::string& name, int64_t c, int k)
    : dw(reg, name + ".dw", c, c, k, 1, k / 2, static_cast<int>(c), false),
      bn(reg, name + ".bn", c),
      pw1(reg, name + ".pw1", c, 2 * c, 1, 1, 0, 1, true),
      pw2(reg, name + ".pw2", 2 * c, c, 1, 1, 0, 1, true, WeightInit::Zero) {}

template <typename T>
Tensor<T> DecoderBlock<T>::forward(Ctx<T>& ctx, const Tensor<T>& x) const {
  Tensor<T> y = bn.forward(ctx, dw.forward(ctx, x));
  y = pw2.forward(ctx, ops::hardswish(ctx, pw1.forward(ctx, y)));
  return ops::add(ctx, x, y);
}

template <typename T>
RefineBlock<T>::RefineBlock(ParamRegistry<T>& reg, const std::string& name, int64_t c)
    : conv(reg, name + ".conv", c, c, 3, 1, 1, 1, false),
      bn(reg, name + ".bn", c),
      gate(reg, name + ".gate", c, c, 1, 1, 0, 1, true) {}

template <typename T>
Tensor<T> RefineBlock<T>::forward(Ctx<T>& ctx, const Tensor<T>& x) const {
  Tensor<T> y = ops::add(ctx, x, ops::hardswish(ctx, bn.forward(ctx, conv.forward(ctx, x))));
  return ops::mul(ctx, y, ops::sigmoid(ctx, gate.forward(ctx, y)));
}

template <typename T>
Encoder<T>::Encoder(ParamRegistry<T>& reg, const std::string& name, int64_t in_channels,
                    const std::vector<int64_t>& widths, const std::vector<int64_t>& blocks,
                    bool bottleneck)
    : stem1(reg, name + ".stem1", in_channels, widths[0], 3, 2, 1, 1, PostAct::Relu),
      stem2(reg, name + ".stem2", widths[0], widths[0], 3, 2, 1, 1, PostAct::Relu) {
  int64_t cin = widths[0];
  for (size_t s = 0; s < 4; ++s) {
    std::vector<Block> stage;
    const int64_t cout = widths[s];
    for (int64_t b = 0; b < blocks[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      const std::string bname =
          name + ".stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
      if (bottleneck)
        stage.emplace_back(Bottleneck<T>(reg, bname, cin, cout, stride));
      else
        stage.emplace_back(BasicBlock<T>(reg, bname, cin, cout, stride));
      cin = cout;
    }
    stages.push_back(std::move(stage));
  }
}

template <typename T>
EncoderFeatures<T> Encoder<T>::forward(Ctx<T>& ctx, const Tensor<T>& x) const {
  Tensor<T> y = stem2.forward(ctx, stem1.forward(ctx, x));
  EncoderFeatures<T> f;
  for (size_t s = 0; s < stages.size(); ++s) {
    for (const auto& b : stages[s])
      y = std::visit([&](const auto& blk) { return blk.forward(ctx, y); }, b);
    if (s == 0) f.f2 = y;
    if (s == 1) f.f3 = y;
    if (s == 2) f.f4 = y;
    if (s == 3) f.f5 = y;
  }
  return f;
}

#define P2AT_BLOCKS_INSTANTIATE(T)   \
  template struct Conv2dLayer<T>;    \
  template struct BatchNorm2d<T>;    \
  template struct ConvBN<T>;         \
  template struct BasicBlock<T>;     \
  template struct Bottleneck<T>;     \
  template struct PyramidPool<T>;    \
  template struct AxialAttention<T>; \
  template struct P2A2Layer<T>;      \
  template struct Aggregator<T>;     \
  template struct Sfu<T>;            \
  template struct Lfr<T>;            \
  template struct BifFuse<T>;        \
  template struct Gce<T>;            \
  template struct DecoderBlock<T>;   \
  template struct RefineBlock<T>;    \
  template struct Encoder<T>;

P2AT_BLOCKS_INSTANTIATE(float)
P2AT_BLOCKS_INSTANTIATE(double)

#undef P2AT_BLOCKS_INSTANTIATE

}  // namespace p2at
