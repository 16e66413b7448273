#include "p2at/model.hpp"

#include <map>
#include <sstream>

namespace p2at {

namespace {

std::string join_list(const std::array<int64_t, 4>& a) {
  std::string s;
  for (size_t i = 0; i < a.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(a[i]);
  }
  return s;
}

std::array<int64_t, 4> parse_list(const std::string& s, const std::string& key) {
  std::array<int64_t, 4> out{};
  std::stringstream ss(s);
  std::string item;
  size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= 4) throw ConfigError("config key " + key + " expects 4 values, got more");
    try {
      out[i++] = std::stoll(item);
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " has non-integer entry '" + item + "'");
    }
  }
  if (i != 4) throw ConfigError("config key " + key + " expects 4 values, got " +
                                std::to_string(i));
  return out;
}

}  // namespace

ModelConfig ModelConfig::from_preset(const std::string& name, int64_t num_classes) {
  ModelConfig cfg;
  cfg.preset = name;
  cfg.num_classes = num_classes;
  if (name == "tiny") {
    cfg.widths = {16, 32, 64, 128};
    cfg.blocks = {2, 2, 2, 2};
    cfg.block_kind = BlockKind::Basic;
    cfg.decoder_width = 64;
  } else if (name == "s") {
    cfg.widths = {32, 64, 128, 256};
    cfg.blocks = {2, 2, 2, 2};
    cfg.block_kind = BlockKind::Basic;
    cfg.decoder_width = 128;
  } else if (name == "m") {
    cfg.widths = {32, 64, 128, 256};
    cfg.blocks = {3, 4, 6, 3};
    cfg.block_kind = BlockKind::Basic;
    cfg.decoder_width = 128;
  } else if (name == "l") {
    cfg.widths = {32, 64, 128, 256};
    cfg.blocks = {3, 4, 6, 3};
    cfg.block_kind = BlockKind::Bottleneck;
    cfg.decoder_width = 128;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected tiny, s, m, or l)");
  }
  cfg.validate();
  return cfg;
}

void ModelConfig::validate() const {
  if (in_channels < 1) throw ConfigError("in_channels must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  for (int64_t w : widths)
    if (w < 1) throw ConfigError("stage widths must be positive");
  for (int64_t b : blocks)
    if (b < 1) throw ConfigError("per-stage block counts must be positive");
  if (aggregator_depth < 0) throw ConfigError("aggregator_depth must be non-negative");
  if (heads < 1 || widths[3] % heads)
    throw ConfigError("heads=" + std::to_string(heads) + " must divide the deepest width " +
                      std::to_string(widths[3]));
  if (ffn_ratio < 1) throw ConfigError("ffn_ratio must be at least 1");
  if (decoder_width < 1) throw ConfigError("decoder_width must be positive");
  if (attn_span < 1) throw ConfigError("attn_span must be positive");
}

std::string ModelConfig::serialize() const {
  std::string s;
  s += "preset=" + preset + "\n";
  s += "in_channels=" + std::to_string(in_channels) + "\n";
  s += "num_classes=" + std::to_string(num_classes) + "\n";
  s += "widths=" + join_list(widths) + "\n";
  s += "blocks=" + join_list(blocks) + "\n";
  s += std::string("block_kind=") + (block_kind == BlockKind::Basic ? "basic" : "bottleneck") +
       "\n";
  s += "aggregator_depth=" + std::to_string(aggregator_depth) + "\n";
  s += "heads=" + std::to_string(heads) + "\n";
  s += "ffn_ratio=" + std::to_string(ffn_ratio) + "\n";
  s += "decoder_width=" + std::to_string(decoder_width) + "\n";
  s += "attn_span=" + std::to_string(attn_span) + "\n";
  return s;
}

ModelConfig ModelConfig::deserialize(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("malformed model-config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto want = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("model config missing key '" + key + "'");
    return it->second;
  };
  auto want_int = [&](const std::string& key) {
    try {
      return static_cast<int64_t>(std::stoll(want(key)));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("model config key '" + key + "' is not an integer");
    }
  };
  ModelConfig cfg;
  cfg.preset = want("preset");
  cfg.in_channels = want_int("in_channels");
  cfg.num_classes = want_int("num_classes");
  cfg.widths = parse_list(want("widths"), "widths");
  cfg.blocks = parse_list(want("blocks"), "blocks");
  const std::string kind = want("block_kind");
  if (kind == "basic")
    cfg.block_kind = BlockKind::Basic;
  else if (kind == "bottleneck")
    cfg.block_kind = BlockKind::Bottleneck;
  else
    throw ConfigError("model config block_kind '" + kind + "' is not basic or bottleneck");
  cfg.aggregator_depth = want_int("aggregator_depth");
  cfg.heads = want_int("heads");
  cfg.ffn_ratio = want_int("ffn_ratio");
  cfg.decoder_width = want_int("decoder_width");
  cfg.attn_span = want_int("attn_span");
  cfg.validate();
  return cfg;
}

std::string ModelConfig::diff(const ModelConfig& other) const {
  if (preset != other.preset) return "preset";
  if (in_channels != other.in_channels) return "in_channels";
  if (num_classes != other.num_classes) return "num_classes";
  if (widths != other.widths) return "widths";
  if (blocks != other.blocks) return "blocks";
  if (block_kind != other.block_kind) return "block_kind";
  if (aggregator_depth != other.aggregator_depth) return "aggregator_depth";
  if (heads != other.heads) return "heads";
  if (ffn_ratio != other.ffn_ratio) return "ffn_ratio";
  if (decoder_width != other.decoder_width) return "decoder_width";
  if (attn_span != other.attn_span) return "attn_span";
  return "";
}

namespace {

std::vector<int64_t> to_vec(const std::array<int64_t, 4>& a) {
  return std::vector<int64_t>(a.begin(), a.end());
}

const ModelConfig& validated(const ModelConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

template <typename T>
P2ATModel<T>::P2ATModel(const ModelConfig& cfg, uint64_t seed)
    : cfg_(validated(cfg)),
      reg_(seed),
      encoder_(reg_, "encoder", cfg.in_channels, to_vec(cfg.widths), to_vec(cfg.blocks),
               cfg.block_kind == BlockKind::Bottleneck),
      aggregator_(reg_, "aggregator", cfg.widths[3], cfg.aggregator_depth, cfg.heads,
                  cfg.ffn_ratio, cfg.attn_span),
      neck_(reg_, "neck", cfg.widths[3], cfg.decoder_width, 1, 1, 0, 1, PostAct::None),
      dec5_(reg_, "decoder.stage5", cfg.decoder_width, 3),
      fuse4_(reg_, "fuse4", cfg.decoder_width, cfg.widths[2], cfg.widths[2], cfg.decoder_width),
      gce4_(reg_, "gce4", cfg.decoder_width),
      dec4_(reg_, "decoder.stage4", cfg.decoder_width, 5),
      fuse3_(reg_, "fuse3", cfg.decoder_width, cfg.widths[1], cfg.widths[1], cfg.decoder_width),
      gce3_(reg_, "gce3", cfg.decoder_width),
      dec3_(reg_, "decoder.stage3", cfg.decoder_width, 7),
      refine_(reg_, "refine", cfg.decoder_width),
      head_(reg_, "head", cfg.decoder_width, cfg.num_classes, 1, 1, 0, 1, true) {}

template <typename T>
Tensor<T> P2ATModel<T>::forward(Ctx<T>& ctx, const Tensor<T>& x) const {
  if (x.rank() != 4 || x.dim(1) != cfg_.in_channels)
    throw ShapeError("model input must be [N," + std::to_string(cfg_.in_channels) +
                     ",H,W], got " + shape_str(x.shape));
  const int64_t h = x.dim(2), w = x.dim(3);
  if (h % 32 || w % 32)
    throw ShapeError("input spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                     " must be a multiple of 32");
  EncoderFeatures<T> f = encoder_.forward(ctx, x);
  Tensor<T> d5 = dec5_.forward(ctx, neck_.forward(ctx, aggregator_.forward(ctx, f.f5)));
  Tensor<T> b4 = gce4_.forward(ctx, fuse4_.forward(ctx, d5, f.f4, f.f4));
  Tensor<T> d4 = dec4_.forward(ctx, b4);
  Tensor<T> b3 = gce3_.forward(ctx, fuse3_.forward(ctx, d4, f.f3, f.f3));
  Tensor<T> d3 = dec3_.forward(ctx, b3);
  Tensor<T> u = ops::bilinear_upsample(ctx, d3, h / 4, w / 4);
  Tensor<T> r = refine_.forward(ctx, u);
  Tensor<T> logits = head_.forward(ctx, r);
  return ops::bilinear_upsample(ctx, logits, h, w);
}

namespace {

// Mirrors forward op for op; any change to a block's forward must be
// reflected here (the acceptance suite cross-checks with an oracle).
struct FlopWalk {
  FlopBreakdown fb;

  void conv(int64_t n, int64_t cout, int64_t oh, int64_t ow, int64_t cpg, int64_t kh,
            int64_t kw) {
    fb.conv += conv_flops(n, cout, oh, ow, cpg, kh, kw);
  }
  void ew(int64_t numel) { fb.elementwise += numel; }
  void pool(int64_t out_numel) { fb.pool += out_numel; }
  void up(int64_t out_numel) { fb.upsample += out_numel; }
  void attn_mm(int64_t b, int64_t m, int64_t k, int64_t n) { fb.attention += 2 * b * m * k * n; }

  void conv_bn(int64_t n, int64_t cin, int64_t cout, int64_t h, int64_t w, int64_t k,
               int64_t stride, bool act, int64_t& oh, int64_t& ow) {
    oh = (h + 2 * (k / 2) - k) / stride + 1;
    ow = (w + 2 * (k / 2) - k) / stride + 1;
    conv(n, cout, oh, ow, cin, k, k);
    ew(n * cout * oh * ow);
    if (act) ew(n * cout * oh * ow);
  }

  void basic_block(int64_t n, int64_t cin, int64_t cout, int64_t& h, int64_t& w,
                   int64_t stride) {
    int64_t oh, ow;
    conv_bn(n, cin, cout, h, w, 3, stride, true, oh, ow);
    int64_t oh2, ow2;
    conv_bn(n, cout, cout, oh, ow, 3, 1, false, oh2, ow2);
    if (stride != 1 || cin != cout) conv_bn(n, cin, cout, h, w, 1, stride, false, oh, ow);
    ew(n * cout * oh2 * ow2);  // residual add
    ew(n * cout * oh2 * ow2);  // relu
    h = oh2;
    w = ow2;
  }

  void bottleneck(int64_t n, int64_t cin, int64_t cout, int64_t& h, int64_t& w,
                  int64_t stride) {
    const int64_t mid = cout / 4 < 1 ? 1 : cout / 4;
    int64_t oh, ow;
    conv_bn(n, cin, mid, h, w, 1, 1, true, oh, ow);
    conv_bn(n, mid, mid, oh, ow, 3, stride, true, oh, ow);
    int64_t oh3, ow3;
    conv_bn(n, mid, cout, oh, ow, 1, 1, false, oh3, ow3);
    if (stride != 1 || cin != cout) conv_bn(n, cin, cout, h, w, 1, stride, false, oh, ow);
    ew(n * cout * oh3 * ow3);
    ew(n * cout * oh3 * ow3);
    h = oh3;
    w = ow3;
  }

  void pyramid_pool(int64_t n, int64_t c, int64_t h, int64_t w) {
    conv(n, c, h, w, c, 1, 1);           // theta
    pool(n * c * h * w);                 // avg3
    pool(n * c * h * w);                 // avg5
    pool(n * c * h * w);                 // avg7
    ew(3 * n * c * h * w);               // three adds
    conv(n, c, h, w, 1, 3, 3);           // depthwise
  }

  void axial_pass(int64_t n, int64_t c, int64_t heads, int64_t h, int64_t w,
                  bool along_width) {
    const int64_t dh = c / heads;
    const int64_t len = along_width ? w : h;
    const int64_t other = along_width ? h : w;
    const int64_t map = n * c * h * w;
    const int64_t b = n * other * heads;
    conv(n, c, h, w, c, 1, 1);  // q
    conv(n, c, h, w, c, 1, 1);  // k
    conv(n, c, h, w, c, 1, 1);  // v
    ew(map);                    // q scaling
    attn_mm(b, len, dh, len);   // scores
    ew(b * len * len);          // position bias
    ew(b * len * len);          // softmax
    attn_mm(b, len, len, dh);   // value mix
    conv(n, c, h, w, c, 1, 1);  // out projection
    ew(map);                    // residual add
  }

  void p2a2(int64_t n, int64_t c, int64_t heads, int64_t ffn_ratio, int64_t h, int64_t w) {
    pyramid_pool(n, c, h, w);
    axial_pass(n, c, heads, h, w, false);
    axial_pass(n, c, heads, h, w, true);
    ew(n * c * h * w);                       // attn + x
    conv(n, c * ffn_ratio, h, w, c, 1, 1);   // expand
    ew(n * c * ffn_ratio * h * w);           // hardswish
    conv(n, c, h, w, c * ffn_ratio, 1, 1);   // project
    ew(n * c * h * w);                       // ffn + z'
  }

  void sfu(int64_t n, int64_t c, int64_t h, int64_t w) {
    conv(n, c, h, w, c, 1, 1);  // alpha
    conv(n, c, h, w, c, 1, 1);  // beta
    ew(n * c * h * w);          // channel softmax
    ew(n * c * h * w);          // gate product
  }

  void lfr(int64_t n, int64_t c, int64_t h, int64_t w) {
    conv(n, c, h, w, c, 1, 1);  // spatial
    ew(n * c * h * w);          // sigmoid
    pool(n * c);                // GAP
    conv(n, c, 1, 1, c, 1, 1);  // global
    ew(n * c * h * w);          // broadcast add
    conv(n, c, h, w, c, 1, 1);  // project
    ew(n * c * h * w);          // gate product
  }

  void bif(int64_t n, int64_t deep_c, int64_t low_c, int64_t out_c, int64_t hd, int64_t wd,
           int64_t hf, int64_t wf) {
    sfu(n, deep_c, hd, wd);
    up(n * deep_c * hf * wf);
    lfr(n, low_c, hf, wf);
    conv(n, out_c, hf, wf, low_c, 1, 1);                    // stage projection
    conv(n, out_c, hf, wf, low_c + deep_c + out_c, 3, 3);   // fuse conv
    ew(n * out_c * hf * wf);                                // fuse BN
    ew(n * out_c * hf * wf);                                // hardswish
  }

  void gce(int64_t n, int64_t c, int64_t h, int64_t w) {
    const int64_t mid = c / 4 < 1 ? 1 : c / 4;
    pool(n * c);                  // GAP
    conv(n, mid, 1, 1, c, 1, 1);  // squeeze
    ew(n * mid);                  // relu
    conv(n, c, 1, 1, mid, 1, 1);  // excite
    ew(n * c);                    // sigmoid
    ew(n * c * h * w);            // B ⊙ g
    ew(n * c * h * w);            // B + gated
  }

  void decoder_block(int64_t n, int64_t c, int64_t h, int64_t w, int64_t k) {
    conv(n, c, h, w, 1, k, k);          // depthwise
    ew(n * c * h * w);                  // BN
    conv(n, 2 * c, h, w, c, 1, 1);      // pw1
    ew(n * 2 * c * h * w);              // hardswish
    conv(n, c, h, w, 2 * c, 1, 1);      // pw2
    ew(n * c * h * w);                  // residual add
  }

  void refine(int64_t n, int64_t c, int64_t h, int64_t w) {
    conv(n, c, h, w, c, 3, 3);
    ew(n * c * h * w);          // BN
    ew(n * c * h * w);          // hardswish
    ew(n * c * h * w);          // residual add
    conv(n, c, h, w, c, 1, 1);  // gate
    ew(n * c * h * w);          // sigmoid
    ew(n * c * h * w);          // gate product
  }
};

}  // namespace

template <typename T>
FlopBreakdown P2ATModel<T>::count_flops(int64_t n, int64_t h, int64_t w) const {
  if (h % 32 || w % 32)
    throw ShapeError("input spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                     " must be a multiple of 32");
  FlopWalk fw;
  const auto& ws = cfg_.widths;
  int64_t ch = h, cw = w;
  int64_t oh, ow;
  fw.conv_bn(n, cfg_.in_channels, ws[0], ch, cw, 3, 2, true, oh, ow);
  fw.conv_bn(n, ws[0], ws[0], oh, ow, 3, 2, true, ch, cw);
  int64_t cin = ws[0];
  for (size_t s = 0; s < 4; ++s) {
    for (int64_t b = 0; b < cfg_.blocks[s]; ++b) {
      const int64_t stride = (s > 0 && b == 0) ? 2 : 1;
      if (cfg_.block_kind == BlockKind::Bottleneck)
        fw.bottleneck(n, cin, ws[s], ch, cw, stride);
      else
        fw.basic_block(n, cin, ws[s], ch, cw, stride);
      cin = ws[s];
    }
  }
  // here ch,cw are the stride-32 size
  const int64_t h5 = ch, w5 = cw;
  const int64_t h4 = h / 16, w4 = w / 16;
  const int64_t h3 = h / 8, w3 = w / 8;
  const int64_t dc = cfg_.decoder_width;
  for (int64_t l = 0; l < cfg_.aggregator_depth; ++l)
    fw.p2a2(n, ws[3], cfg_.heads, cfg_.ffn_ratio, h5, w5);
  fw.conv_bn(n, ws[3], dc, h5, w5, 1, 1, false, oh, ow);  // neck
  fw.decoder_block(n, dc, h5, w5, 3);
  fw.bif(n, dc, ws[2], dc, h5, w5, h4, w4);
  fw.gce(n, dc, h4, w4);
  fw.decoder_block(n, dc, h4, w4, 5);
  fw.bif(n, dc, ws[1], dc, h4, w4, h3, w3);
  fw.gce(n, dc, h3, w3);
  fw.decoder_block(n, dc, h3, w3, 7);
  fw.up(n * dc * (h / 4) * (w / 4));
  fw.refine(n, dc, h / 4, w / 4);
  fw.conv(n, cfg_.num_classes, h / 4, w / 4, dc, 1, 1);  // head
  fw.up(n * cfg_.num_classes * h * w);
  return fw.fb;
}

template class P2ATModel<float>;
template class P2ATModel<double>;

}  // namespace p2at
