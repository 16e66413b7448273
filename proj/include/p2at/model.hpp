#pragma once

#include <array>
#include <string>

#include "p2at/blocks.hpp"

namespace p2at {

enum class BlockKind { Basic, Bottleneck };

struct ModelConfig {
  int64_t in_channels = 3;
  int64_t num_classes = 4;
  std::array<int64_t, 4> widths{16, 32, 64, 128};   // stage widths at strides 4/8/16/32
  std::array<int64_t, 4> blocks{2, 2, 2, 2};        // residual blocks per stage
  BlockKind block_kind = BlockKind::Basic;
  int64_t aggregator_depth = 2;
  int64_t heads = 4;
  int64_t ffn_ratio = 2;
  int64_t decoder_width = 64;
  int64_t attn_span = 16;
  std::string preset = "tiny";

  static ModelConfig from_preset(const std::string& name, int64_t num_classes);
  void validate() const;

  // key=value form used for the checkpoint config echo.
  std::string serialize() const;
  static ModelConfig deserialize(const std::string& text);
  // Returns the first differing key, or empty when equal.
  std::string diff(const ModelConfig& other) const;
};

struct FlopBreakdown {
  int64_t conv = 0;
  int64_t attention = 0;
  int64_t pool = 0;
  int64_t upsample = 0;
  int64_t elementwise = 0;

  int64_t total() const { return conv + attention + pool + upsample + elementwise; }
};

// Convolution cost at 2 ops per multiply-add; bias adds are free.
inline int64_t conv_flops(int64_t n, int64_t cout, int64_t oh, int64_t ow, int64_t cpg,
                          int64_t kh, int64_t kw) {
  return 2 * n * cout * oh * ow * cpg * kh * kw;
}

// Full network: encoder -> aggregator -> neck -> decoder stage 5 -> fuse/GCE
// at stage 4 -> decoder stage 4 -> fuse/GCE at stage 3 -> decoder stage 3 ->
// x2 upsample to stride 4 -> refine -> 1x1 head -> x4 upsample.
template <typename T>
class P2ATModel {
 public:
  P2ATModel(const ModelConfig& cfg, uint64_t seed);

  Tensor<T> forward(Ctx<T>& ctx, const Tensor<T>& x) const;

  int64_t count_params() const { return reg_.count_trainable(); }

  // Analytic op count for one forward at the given input size. Convolution
  // and attention products count 2 ops per multiply-add (bias adds free);
  // pooling, upsampling, and every elementwise op count 1 op per output
  // element; data movement (reshape/permute/concat) counts 0.
  FlopBreakdown count_flops(int64_t n, int64_t h, int64_t w) const;

  ParamRegistry<T>& params() { return reg_; }
  const ParamRegistry<T>& params() const { return reg_; }
  const ModelConfig& config() const { return cfg_; }
  uint64_t seed() const { return reg_.seed(); }

 private:
  ModelConfig cfg_;
  ParamRegistry<T> reg_;
  Encoder<T> encoder_;
  Aggregator<T> aggregator_;
  ConvBN<T> neck_;
  DecoderBlock<T> dec5_;
  BifFuse<T> fuse4_;
  Gce<T> gce4_;
  DecoderBlock<T> dec4_;
  BifFuse<T> fuse3_;
  Gce<T> gce3_;
  DecoderBlock<T> dec3_;
  RefineBlock<T> refine_;
  Conv2dLayer<T> head_;
};

using ModelF = P2ATModel<float>;
using ModelD = P2ATModel<double>;

}  // namespace p2at
