#pragma once

#include <string>
#include <variant>
#include <vector>

#include "p2at/ops.hpp"
#include "p2at/param.hpp"

namespace p2at {

enum class PostAct { None, Relu, Hardswish };

enum class WeightInit { Kaiming, Zero };

template <typename T>
struct Conv2dLayer {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;
  KernelSpec ks;

  Conv2dLayer() = default;
  Conv2dLayer(ParamRegistry<T>& reg, const std::string& name, int64_t cin, int64_t cout,
              int k, int stride, int pad, int groups, bool with_bias,
              WeightInit init = WeightInit::Kaiming);

  Tensor<T> forward(Ctx<T>& ctx, const Tensor<T>& x) const;
  int64_t out_channels() const { return weight->value.dim(0); }
};

template <typename T>
struct BatchNorm2d {
  Parameter<T>* gamma = nullptr;
  Parameter<T>* beta = nullptr;
  Parameter<T>* running_mean = nullptr;
  Parameter<T>* running_var = nullptr;
  T eps = T(1e-5);
  T momentum = T(0.1);

  BatchNorm2d() = default;
  BatchNorm2d(ParamRegistry<T>& reg, const std::string& name, int64_t c);

  Tensor<T> forward(Ctx<T>& ctx, const Tensor<T>& x) const;
};

template <typename T>
struct ConvBN {
  Conv2dLayer<T> conv;
  BatchNorm2d<T> bn;
  PostAct act = PostAct::None;

  ConvBN() = default;
  ConvBN(ParamRegistry<T>& reg, const std::string& name, int64_t cin, int64_t cout,
         int k, int stride, int pad, int groups, PostAct act);

  Tensor<T> forward(Ctx<T>& ctx, const Tensor<T>& x) const;
};

template <typename T>
struct BasicBlock {
  ConvBN<T> conv1;
  ConvBN<T> conv2;
  bool has_down = false;
  ConvBN<T> down;

  BasicBlock(ParamRegistry<T>& reg, const std::string& name, int64_t cin, int64_t cout,
             int stride);

  Tensor<T> forward(Ctx<T>& ctx, const Tensor<T>& x) const;
};

template <typename T>
struct Bottleneck {
  ConvBN<T> conv1;
  ConvBN<T> conv2;
  ConvBN<T> conv3;
  bool has_down = false;
  ConvBN<T> down;

  Bottleneck(ParamRegistry<T>& reg, const std::string& name, int64_t cin, int64_t cout,
             int stride);

  Tensor<T> forward(Ctx<T>& ctx, const Tensor<T>& x) const;
};

// Projection, then cascaded stride-1 average pools (3, 5, 7; same padding),
// then a depthwise 3x3 over the sum of the projection and all pool outputs.
// The depthwise kernel starts at zero so the block's residual parent is an
// identity at init.
template <typename T>
struct PyramidPool {
  Conv2dLayer<T> theta;
  Conv2dLayer<T> dw;

  PyramidPool(ParamRegistry<T>& reg, const std::string& name, int64_t c);

  Tensor<T> forward(Ctx<T>& ctx, const Tensor<T>& x) const;
};

// Two sequential multi-head self-attention passes, along height then width,
// each with its own q/k/v/out 1x1 projections, per-head relative position
// bias on the logits, and a residual add.
template <typename T>
struct AxialAttention {
  struct AxisPass {
    Conv2dLayer<T> q, k, v, out;
    Parameter<T>* pos_bias = nullptr;
  };

  int64_t channels = 0;
  int64_t heads = 0;
  int64_t span = 0;
  AxisPass height, width;

  AxialAttention(ParamRegistry<T>& reg, const std::string& name, int64_t c, int64_t heads,
                 int64_t span);

  // One residual attention pass along a single axis; exposed so the width
  // pass can be compared against full self-attention on H=1 inputs.
  Tensor<T> axis_pass(Ctx<T>& ctx, const Tensor<T>& x, bool along_width) const;

  Tensor<T> forward(Ctx<T>& ctx, const Tensor<T>& x) const;
};

// z' = axial_attention(pyramid_pool(z)) + z; out = ffn(z') + z' with the FFN
// a 1x1 expand (x ffn_ratio), hardswish, 1x1 project (zero-init).
template <typename T>
struct P2A2Layer {
  PyramidPool<T> pool;
  AxialAttention<T> attn;
  Conv2dLayer<T> ffn_expand;
  Conv2dLayer<T> ffn_project;

  P2A2Layer(ParamRegistry<T>& reg, const std::string& name, int64_t c, int64_t heads,
            int64_t ffn_ratio, int64_t span);

  Tensor<T> forward(Ctx<T>& ctx, const Tensor<T>& x) const;
};

template <typename T>
struct Aggregator {
  std::vector<P2A2Layer<T>> layers;

  Aggregator(ParamRegistry<T>& reg, const std::string& name, int64_t c, int64_t depth,
             int64_t heads, int64_t ffn_ratio, int64_t span);

  Tensor<T> forward(Ctx<T>& ctx, const Tensor<T>& x) const;
};

// S = alpha(D) ⊙ channel-softmax(beta(D)); upsampling happens in the caller.
template <typename T>
struct Sfu {
  Conv2dLayer<T> alpha;
  Conv2dLayer<T> beta;

  Sfu(ParamRegistry<T>& reg, const std::string& name, int64_t c);

  Tensor<T> forward(Ctx<T>& ctx, const Tensor<T>& d) const;
};

// F_g = sigmoid(spatial(F)); L = project(F_g ⊕ global(GAP(F))); out = L ⊙ F.
template <typename T>
struct Lfr {
  Conv2dLayer<T> spatial;
  Conv2dLayer<T> global_desc;
  Conv2dLayer<T> project;

  Lfr(ParamRegistry<T>& reg, const std::string& name, int64_t c);

  Tensor<T> forward(Ctx<T>& ctx, const Tensor<T>& f) const;
};

// concat[lfr(F_low), upx2(sfu(D)), proj(F_s)] -> 3x3 conv + BN + hardswish.
template <typename T>
struct BifFuse {
  Sfu<T> sfu;
  Lfr<T> lfr;
  Conv2dLayer<T> stage_proj;
  Conv2dLayer<T> fuse_conv;
  BatchNorm2d<T> fuse_bn;

  BifFuse(ParamRegistry<T>& reg, const std::string& name, int64_t deep_c, int64_t low_c,
          int64_t stage_c, int64_t out_c);

  Tensor<T> forward(Ctx<T>& ctx, const Tensor<T>& d, const Tensor<T>& f_low,
                    const Tensor<T>& f_s) const;
};

// g = sigmoid(excite(relu(squeeze(GAP(B))))), squeeze ratio 4 (floor 1);
// out = B + B ⊙ g.
template <typename T>
struct Gce {
  Conv2dLayer<T> squeeze;
  Conv2dLayer<T> excite;

  Gce(ParamRegistry<T>& reg, const std::string& name, int64_t c);

  Tensor<T> forward(Ctx<T>& ctx, const Tensor<T>& b) const;
};

// x + pw2(hardswish(pw1(bn(dw_k(x))))), pw1 expanding x2, pw2 zero-init.
template <typename T>
struct DecoderBlock {
  Conv2dLayer<T> dw;
  BatchNorm2d<T> bn;
  Conv2dLayer<T> pw1;
  Conv2dLayer<T> pw2;

  DecoderBlock(ParamRegistry<T>& reg, const std::string& name, int64_t c, int k);

  Tensor<T> forward(Ctx<T>& ctx, const Tensor<T>& x) const;
};

// y = x + hardswish(bn(conv3x3(x))); out = y ⊙ sigmoid(gate1x1(y)).
template <typename T>
struct RefineBlock {
  Conv2dLayer<T> conv;
  BatchNorm2d<T> bn;
  Conv2dLayer<T> gate;

  RefineBlock(ParamRegistry<T>& reg, const std::string& name, int64_t c);

  Tensor<T> forward(Ctx<T>& ctx, const Tensor<T>& x) const;
};

template <typename T>
struct EncoderFeatures {
  Tensor<T> f2, f3, f4, f5;  // strides 4, 8, 16, 32
};

template <typename T>
struct Encoder {
  using Block = std::variant<BasicBlock<T>, Bottleneck<T>>;

  ConvBN<T> stem1;
  ConvBN<T> stem2;
  std::vector<std::vector<Block>> stages;

  Encoder(ParamRegistry<T>& reg, const std::string& name, int64_t in_channels,
          const std::vector<int64_t>& widths, const std::vector<int64_t>& blocks,
          bool bottleneck);

  EncoderFeatures<T> forward(Ctx<T>& ctx, const Tensor<T>& x) const;
};

}  // namespace p2at
