// Acceptance gate: prints one PASS/FAIL line per criterion and exits with
// the number of failed criteria. An optional list of criterion ids restricts
// the run, e.g. `acceptance 7` while tuning the overfit recipe.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "analytic.hpp"
#include "gradcheck.hpp"
#include "helpers.hpp"
#include "p2at/bench.hpp"
#include "p2at/checkpoint.hpp"
#include "p2at/train.hpp"
#include "ref/serial.hpp"

using namespace p2at;
using namespace p2at::testing;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

template <typename T>
Tensor<T> weighted(Ctx<T>& ctx, const Tensor<T>& y, uint64_t seed) {
  return ops::sum(ctx, ops::mul(ctx, y, random_tensor<T>(y.shape, seed)));
}

// ---- criterion 1: finite-difference gradients for every block and the
// tiny model, 64-bit shadow forward, h = 1e-3, under 5 minutes on one core.

struct GradSuite {
  double max_err = 0.0;
  int64_t min_probes = 1 << 30;
  int64_t units = 0;
  std::string worst;

  template <typename Fwd>
  void unit(ParamRegistry<double>& reg, std::vector<Tensor<double>*> inputs, Fwd fwd,
            bool training, uint64_t seed) {
    auto res = gradcheck(reg, std::move(inputs), fwd, training, 24, seed);
    ++units;
    min_probes = std::min(min_probes, res.probes_run);
    if (res.max_rel_err > max_err) {
      max_err = res.max_rel_err;
      worst = res.worst_coord;
    }
  }
};

void criterion_gradients() {
  omp_set_num_threads(1);
  const auto t0 = std::chrono::steady_clock::now();
  GradSuite gs;

  {
    ParamRegistry<double> reg(101);
    ConvBN<double> blk(reg, "cbn", 4, 6, 3, 2, 1, 1, PostAct::Relu);
    randomize_params(reg, 1);
    Tensor<double> x = random_tensor<double>({2, 4, 9, 8}, 2);
    gs.unit(reg, {&x}, [&](Ctx<double>& c) { return weighted(c, blk.forward(c, x), 3); },
            true, 11);
  }
  {
    ParamRegistry<double> reg(102);
    BasicBlock<double> blk(reg, "bb", 4, 8, 2);
    randomize_params(reg, 2);
    Tensor<double> x = random_tensor<double>({2, 4, 8, 8}, 3);
    gs.unit(reg, {&x}, [&](Ctx<double>& c) { return weighted(c, blk.forward(c, x), 4); },
            true, 12);
  }
  {
    ParamRegistry<double> reg(103);
    Bottleneck<double> blk(reg, "bn", 6, 8, 2);
    randomize_params(reg, 3);
    Tensor<double> x = random_tensor<double>({1, 6, 8, 8}, 4);
    gs.unit(reg, {&x}, [&](Ctx<double>& c) { return weighted(c, blk.forward(c, x), 5); },
            true, 13);
  }
  {
    ParamRegistry<double> reg(104);
    PyramidPool<double> blk(reg, "pp", 5);
    randomize_params(reg, 4);
    Tensor<double> x = random_tensor<double>({1, 5, 7, 6}, 5);
    gs.unit(reg, {&x}, [&](Ctx<double>& c) { return weighted(c, blk.forward(c, x), 6); },
            false, 14);
  }
  {
    ParamRegistry<double> reg(105);
    AxialAttention<double> blk(reg, "attn", 8, 2, 4);
    randomize_params(reg, 5);
    Tensor<double> x = random_tensor<double>({1, 8, 5, 6}, 6);
    gs.unit(reg, {&x}, [&](Ctx<double>& c) { return weighted(c, blk.forward(c, x), 7); },
            false, 15);
  }
  {
    ParamRegistry<double> reg(106);
    P2A2Layer<double> blk(reg, "p2a2", 8, 2, 2, 4);
    randomize_params(reg, 6);
    Tensor<double> x = random_tensor<double>({1, 8, 4, 5}, 7);
    gs.unit(reg, {&x}, [&](Ctx<double>& c) { return weighted(c, blk.forward(c, x), 8); },
            false, 16);
  }
  {
    ParamRegistry<double> reg(107);
    Sfu<double> blk(reg, "sfu", 6);
    randomize_params(reg, 7);
    Tensor<double> x = random_tensor<double>({2, 6, 4, 4}, 8);
    gs.unit(reg, {&x}, [&](Ctx<double>& c) { return weighted(c, blk.forward(c, x), 9); },
            false, 17);
  }
  {
    ParamRegistry<double> reg(108);
    Lfr<double> blk(reg, "lfr", 6);
    randomize_params(reg, 8);
    Tensor<double> x = random_tensor<double>({2, 6, 4, 4}, 9);
    gs.unit(reg, {&x}, [&](Ctx<double>& c) { return weighted(c, blk.forward(c, x), 10); },
            false, 18);
  }
  {
    ParamRegistry<double> reg(109);
    BifFuse<double> blk(reg, "bif", 8, 4, 4, 8);
    randomize_params(reg, 9);
    Tensor<double> d = random_tensor<double>({1, 8, 2, 2}, 10);
    Tensor<double> fl = random_tensor<double>({1, 4, 4, 4}, 11);
    Tensor<double> fs = random_tensor<double>({1, 4, 4, 4}, 12);
    gs.unit(reg, {&d, &fl, &fs},
            [&](Ctx<double>& c) { return weighted(c, blk.forward(c, d, fl, fs), 13); }, true,
            19);
  }
  {
    ParamRegistry<double> reg(110);
    Gce<double> blk(reg, "gce", 8);
    randomize_params(reg, 10);
    Tensor<double> x = random_tensor<double>({2, 8, 3, 3}, 14);
    gs.unit(reg, {&x}, [&](Ctx<double>& c) { return weighted(c, blk.forward(c, x), 15); },
            false, 20);
  }
  {
    ParamRegistry<double> reg(111);
    DecoderBlock<double> blk(reg, "dec", 6, 5);
    randomize_params(reg, 11);
    Tensor<double> x = random_tensor<double>({1, 6, 6, 6}, 16);
    gs.unit(reg, {&x}, [&](Ctx<double>& c) { return weighted(c, blk.forward(c, x), 17); },
            true, 21);
  }
  {
    ParamRegistry<double> reg(112);
    RefineBlock<double> blk(reg, "ref", 6);
    randomize_params(reg, 12);
    Tensor<double> x = random_tensor<double>({1, 6, 5, 5}, 18);
    gs.unit(reg, {&x}, [&](Ctx<double>& c) { return weighted(c, blk.forward(c, x), 19); },
            true, 22);
  }
  {
    ParamRegistry<double> reg(113);
    Encoder<double> blk(reg, "enc", 3, {4, 6, 8, 8}, {1, 1, 1, 1}, false);
    randomize_params(reg, 13);
    Tensor<double> x = random_tensor<double>({1, 3, 32, 32}, 20);
    auto fwd = [&](Ctx<double>& c) {
      EncoderFeatures<double> f = blk.forward(c, x);
      Tensor<double> l = ops::add(c, weighted(c, f.f2, 21), weighted(c, f.f3, 22));
      return ops::add(c, l, ops::add(c, weighted(c, f.f4, 23), weighted(c, f.f5, 24)));
    };
    gs.unit(reg, {&x}, fwd, true, 23);
  }
  {
    ModelD model(ModelConfig::from_preset("tiny", 4), 201);
    randomize_params(model.params(), 14, 0.25);
    Tensor<double> x = random_tensor<double>({1, 3, 64, 64}, 25, -0.8, 0.8);
    gs.unit(model.params(), {&x},
            [&](Ctx<double>& c) { return weighted(c, model.forward(c, x), 26); }, true, 24);
  }

  const double secs = seconds_since(t0);
  const bool ok = gs.max_err < 1e-3 && gs.min_probes >= 20 && secs < 300.0;
  std::string detail =
      fmt("gradient suite: %lld units, max rel err %.2e, min probes %lld, %.1f s on 1 core",
          static_cast<long long>(gs.units), gs.max_err,
          static_cast<long long>(gs.min_probes), secs);
  if (!ok) detail += " (worst: " + gs.worst + ")";
  report(1, ok, detail);
}

// ---- criterion 2: axial attention on single-row/column grids against
// brute-force multi-head self-attention with zero positional bias.

void criterion_attention_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2026);
  double max_diff = 0.0;
  int cases = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const int64_t heads = int64_t{1} << rng.below(3);  // 1, 2, or 4
    const int64_t dh = int64_t{1} << rng.below(3);
    const int64_t c = std::min<int64_t>(16, heads * dh);
    const int64_t len = 2 + rng.below(15);  // up to 16 tokens
    const bool along_width = rep % 2 == 0;
    const int64_t span = len;

    ParamRegistry<float> reg(300 + static_cast<uint64_t>(rep));
    AxialAttention<float> attn(reg, "attn", c, heads, span);
    const std::string active = along_width ? "attn.width." : "attn.height.";
    Rng wrng(500 + static_cast<uint64_t>(rep));
    for (auto& p : reg.all()) {
      if (p.name.rfind(active, 0) != 0) continue;  // other axis stays identity
      if (p.name.size() >= 8 && p.name.compare(p.name.size() - 8, 8, "pos_bias") == 0)
        continue;  // zero positional bias
      for (int64_t i = 0; i < p.value.numel(); ++i)
        p.value.at(i) = static_cast<float>(wrng.uniform(-0.5, 0.5));
    }

    const Shape xshape = along_width ? Shape{1, c, 1, len} : Shape{1, c, len, 1};
    Tensor<float> x = random_tensor<float>(xshape, 700 + static_cast<uint64_t>(rep));
    Ctx<float> ctx{nullptr, false};
    Tensor<float> y = attn.forward(ctx, x);

    std::vector<float> seq(static_cast<size_t>(len * c));
    for (int64_t i = 0; i < len; ++i)
      for (int64_t ch = 0; ch < c; ++ch)
        seq[static_cast<size_t>(i * c + ch)] = x.at(ch * len + i);
    std::vector<float> zeros(static_cast<size_t>(heads * (2 * span - 1)), 0.0f);
    std::vector<float> out(static_cast<size_t>(len * c));
    auto w = [&](const char* leaf) {
      return reg.find(active + leaf)->value.ptr();
    };
    ref::mha_seq<float>(seq.data(), len, c, heads, w("q_proj.weight"), w("q_proj.bias"),
                        w("k_proj.weight"), w("k_proj.bias"), w("v_proj.weight"),
                        w("v_proj.bias"), w("out_proj.weight"), w("out_proj.bias"),
                        zeros.data(), span, out.data());
    for (int64_t i = 0; i < len; ++i)
      for (int64_t ch = 0; ch < c; ++ch)
        max_diff = std::max(max_diff,
                            std::fabs(static_cast<double>(y.at(ch * len + i)) -
                                      static_cast<double>(out[static_cast<size_t>(i * c + ch)])));
    ++cases;
  }
  const double secs = seconds_since(t0);
  const bool ok = max_diff <= 1e-5 && cases == 50 && secs < 30.0;
  report(2, ok,
         fmt("attention vs brute force: %d single-axis cases, max abs diff %.2e, %.2f s",
             cases, max_diff, secs));
}

// ---- criterion 3: zero-initialized terminal projections make p2a2 and the
// decoder block exact identities.

void criterion_residual_identity() {
  int64_t exact = 0, total = 0;
  for (int rep = 0; rep < 20; ++rep) {
    ParamRegistry<float> reg(400 + static_cast<uint64_t>(rep));
    P2A2Layer<float> layer(reg, "p2a2", 8, 2, 2, 4);
    Tensor<float> x = random_tensor<float>({2, 8, 5, 6}, 900 + static_cast<uint64_t>(rep));
    Ctx<float> ctx{nullptr, false};
    Tensor<float> y = layer.forward(ctx, x);
    bool same = true;
    for (int64_t i = 0; i < x.numel(); ++i) same &= y.at(i) == x.at(i);
    exact += same;
    ++total;
  }
  for (int rep = 0; rep < 20; ++rep) {
    ParamRegistry<float> reg(450 + static_cast<uint64_t>(rep));
    DecoderBlock<float> blk(reg, "dec", 6, 7);
    Tensor<float> x = random_tensor<float>({1, 6, 8, 9}, 950 + static_cast<uint64_t>(rep));
    Ctx<float> ctx{nullptr, false};
    Tensor<float> y = blk.forward(ctx, x);
    bool same = true;
    for (int64_t i = 0; i < x.numel(); ++i) same &= y.at(i) == x.at(i);
    exact += same;
    ++total;
  }
  report(3, exact == total,
         fmt("residual identity at init: %lld/%lld inputs bitwise equal",
             static_cast<long long>(exact), static_cast<long long>(total)));
}

// ---- criterion 4: softmax slice sums, SFU partition of unity, uniform
// cross-entropy = ln K.

void criterion_normalization() {
  double worst_softmax = 0.0, worst_sfu = 0.0, worst_ce = 0.0;
  Ctx<float> ctx{nullptr, false};

  Tensor<float> t = random_tensor<float>({3, 7, 5, 4}, 41, -4.0, 4.0);
  for (int axis = 0; axis < 4; ++axis) {
    Tensor<float> s = ops::softmax(ctx, t, axis);
    const int64_t n = s.dim(axis);
    const int64_t outer = s.numel() / (n * [&] {
                            int64_t inner = 1;
                            for (int d = axis + 1; d < 4; ++d) inner *= s.dim(d);
                            return inner;
                          }());
    int64_t inner = 1;
    for (int d = axis + 1; d < 4; ++d) inner *= s.dim(d);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t i = 0; i < inner; ++i) {
        double sum = 0.0;
        for (int64_t k = 0; k < n; ++k) sum += s.at((o * n + k) * inner + i);
        worst_softmax = std::max(worst_softmax, std::fabs(sum - 1.0));
      }
  }

  // With the scale branch pinned to one the output is exactly the channel
  // gate tensor, so per-pixel sums expose the softmax normalization.
  ParamRegistry<float> reg(42);
  Sfu<float> sfu(reg, "sfu", 8);
  randomize_params(reg, 43, 0.5);
  Tensor<float>& aw = reg.find("sfu.alpha.weight")->value;
  for (int64_t i = 0; i < aw.numel(); ++i) aw.at(i) = 0.0f;
  Tensor<float>& ab = reg.find("sfu.alpha.bias")->value;
  for (int64_t i = 0; i < ab.numel(); ++i) ab.at(i) = 1.0f;
  Tensor<float> d = random_tensor<float>({2, 8, 4, 5}, 44, -3.0, 3.0);
  Tensor<float> gates = sfu.forward(ctx, d);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t p = 0; p < 4 * 5; ++p) {
      double sum = 0.0;
      for (int64_t c = 0; c < 8; ++c) sum += gates.at((n * 8 + c) * 20 + p);
      worst_sfu = std::max(worst_sfu, std::fabs(sum - 1.0));
    }

  for (int64_t k : {2, 5, 19}) {
    Tensor<float> logits = Tensor<float>::full(Shape{1, k, 3, 3}, 0.3f);
    LabelMap m(3, 3, static_cast<uint8_t>(k - 1));
    std::vector<const LabelMap*> labels{&m};
    Tensor<float> loss = cross_entropy(ctx, logits, labels);
    worst_ce = std::max(worst_ce,
                        std::fabs(static_cast<double>(loss.at(0)) -
                                  std::log(static_cast<double>(k))));
  }

  const bool ok = worst_softmax <= 1e-6 && worst_sfu <= 1e-6 && worst_ce <= 1e-6;
  report(4, ok,
         fmt("normalization: softmax sum dev %.2e, gate partition dev %.2e, uniform CE dev "
             "%.2e",
             worst_softmax, worst_sfu, worst_ce));
}

// ---- criterion 5: average pooling preserves constants exactly; poly
// schedule endpoints exact, midpoint against a high-precision constant.

void criterion_pool_schedule() {
  Ctx<float> ctx{nullptr, false};
  Tensor<float> x = Tensor<float>::full(Shape{2, 3, 9, 11}, 0.37f);
  bool pool_exact = true;
  for (int k : {3, 5, 7}) {
    Tensor<float> y = ops::avg_pool2d(ctx, x, KernelSpec::square(k, (k - 1) / 2, k / 2));
    for (int64_t i = 0; i < y.numel(); ++i) pool_exact &= y.at(i) == 0.37f;
  }

  const bool endpoints = poly_lr(0.01, 0, 1000, 0.9) == 0.01 &&
                         poly_lr(0.01, 1000, 1000, 0.9) == 0.0;
  // 0.01 * 0.5^0.9 evaluated at 30 significant digits
  const double mid = poly_lr(0.01, 500, 1000, 0.9);
  const double mid_err = std::fabs(mid - 0.00535886731268146582106503162512);
  const bool ok = pool_exact && endpoints && mid_err < 1e-9;
  report(5, ok,
         fmt("pooling constant exact: %s; schedule endpoints exact: %s; midpoint err %.1e",
             pool_exact ? "yes" : "no", endpoints ? "yes" : "no", mid_err));
}

// ---- criterion 6: mIoU against brute-force per-pixel counting.

void criterion_metric_oracle() {
  ConfusionMatrix pinned(2);
  pinned.at(0, 0) = 2;
  pinned.at(0, 1) = 1;
  pinned.at(1, 0) = 1;
  pinned.at(1, 1) = 2;
  const bool pinned_ok = miou(pinned).miou == 0.5;

  Rng rng(61);
  int64_t agree = 0, compared = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const int64_t k = 2 + rng.below(5);
    LabelMap truth(5, 7), pred(5, 7);
    for (auto& v : truth.ids)
      v = rng.below(6) == 0 ? kIgnore : static_cast<uint8_t>(rng.below(k));
    for (auto& v : pred.ids) v = static_cast<uint8_t>(rng.below(k));
    ConfusionMatrix cm(k);
    confusion_update(cm, truth, pred);

    double sum = 0.0;
    int64_t nvalid = 0;
    for (int64_t c = 0; c < k; ++c) {
      int64_t inter = 0, uni = 0;
      for (size_t p = 0; p < truth.ids.size(); ++p) {
        if (truth.ids[p] == kIgnore) continue;
        inter += truth.ids[p] == c && pred.ids[p] == c;
        uni += truth.ids[p] == c || pred.ids[p] == c;
      }
      if (uni) {
        sum += static_cast<double>(inter) / uni;
        ++nvalid;
      }
    }
    if (!nvalid) continue;
    ++compared;
    agree += miou(cm).miou == sum / static_cast<double>(nvalid);
  }
  const bool ok = pinned_ok && compared > 0 && agree == compared;
  report(6, ok,
         fmt("mIoU oracle: pinned 2x2 %s, %lld/%lld random matrices exact",
             pinned_ok ? "exact" : "wrong", static_cast<long long>(agree),
             static_cast<long long>(compared)));
}

// ---- criterion 7: overfit the tiny preset on 32 synthetic images.

void criterion_overfit() {
  omp_set_num_threads(4);
  const auto t0 = std::chrono::steady_clock::now();
  auto samples = synth_generate(7, 32, 64, 64, 4);

  TrainConfig tc;
  tc.epochs = 60;
  tc.base_lr = 0.05;
  tc.weight_decay = 1e-4;
  tc.momentum = 0.9;
  tc.batch_size = 4;
  tc.poly_power = 0.9;
  tc.seed = 7;
  tc.aug = AugmentPolicy{0.5, 1.0, 1.0, 64, 64};
  tc.eval_every = 1;
  tc.stop_miou = 0.95;

  ModelF m1(ModelConfig::from_preset("tiny", 4), 7);
  TrainResult r1 = train(m1, samples, samples, tc);
  ModelF m2(ModelConfig::from_preset("tiny", 4), 7);
  TrainResult r2 = train(m2, samples, samples, tc);

  bool losses_equal = r1.history.size() == r2.history.size();
  if (losses_equal)
    for (size_t i = 0; i < r1.history.size(); ++i)
      losses_equal &= r1.history[i].loss == r2.history[i].loss;

  const double secs = seconds_since(t0);
  const int64_t epochs_run = r1.history.empty() ? 0 : r1.history.back().epoch;
  const bool ok = r1.best_miou >= 0.95 && r2.best_miou >= 0.95 && losses_equal &&
                  epochs_run <= 60 && secs < 1800.0;
  report(7, ok,
         fmt("overfit: train mIoU %.4f after %lld epochs (%lld steps), runs bitwise equal: "
             "%s, %.0f s on 4 cores",
             r1.best_miou, static_cast<long long>(epochs_run),
             static_cast<long long>(r1.steps), losses_equal ? "yes" : "no", secs));
}

// ---- criterion 8: checkpoint save/load is a bitwise identity.

void criterion_persistence() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "p2at_tests" / "acceptance_ckpt";
  fs::create_directories(dir);
  const std::string path = (dir / "tiny.ckpt").string();

  ModelF model(ModelConfig::from_preset("tiny", 4), 81);
  randomize_params(model.params(), 82, 0.3);
  Ctx<float> ctx{nullptr, false};
  Tensor<float> probe = random_tensor<float>({1, 3, 64, 64}, 83);
  Tensor<float> before = model.forward(ctx, probe);

  save_checkpoint(model, path);
  ModelF loaded = build_from_checkpoint(read_checkpoint(path));

  bool params_equal = true;
  for (const auto& p : model.params().all()) {
    const Parameter<float>* q = loaded.params().find(p.name);
    params_equal &= q && max_abs_diff(p.value, q->value) == 0.0;
  }
  Tensor<float> after = loaded.forward(ctx, probe);
  const bool logits_equal = max_abs_diff(before, after) == 0.0;
  report(8, params_equal && logits_equal,
         fmt("checkpoint round trip: parameters bitwise equal: %s, logits bitwise equal: %s",
             params_equal ? "yes" : "no", logits_equal ? "yes" : "no"));
}

// ---- criterion 9: parameter and op accounting versus the analytic oracles.

void criterion_accounting() {
  ModelConfig cfg = ModelConfig::from_preset("tiny", 4);
  ModelF model(cfg, 1);
  const int64_t params = model.count_params();
  const FlopBreakdown got = model.count_flops(1, 64, 64);
  const FlopBreakdown want = expected_flops(cfg, 1, 64, 64);
  const bool params_ok = params == expected_params(cfg);
  const bool flops_ok = got.conv == want.conv && got.attention == want.attention &&
                        got.pool == want.pool && got.upsample == want.upsample &&
                        got.elementwise == want.elementwise;
  const bool example_ok = conv_flops(1, 4, 8, 8, 2, 3, 3) == 9216;
  report(9, params_ok && flops_ok && example_ok,
         fmt("accounting: params %lld (oracle %lld), flops %lld (oracle %lld), conv example "
             "%lld",
             static_cast<long long>(params), static_cast<long long>(expected_params(cfg)),
             static_cast<long long>(got.total()), static_cast<long long>(want.total()),
             static_cast<long long>(conv_flops(1, 4, 8, 8, 2, 3, 3))));
}

// ---- criterion 10: FLOPs ratio between 64x64 and 128x128 inputs and
// latency monotonicity. The exact-4x expectation does not hold for this
// architecture: attention scores scale with the square of the axis length
// (x8 when both sides double) while the global-pool branches are constant
// per image, so the true ratio is slightly above 4. Reported as measured.

void criterion_benchmark() {
  ModelF model(ModelConfig::from_preset("tiny", 4), 5);
  const int64_t f64 = model.count_flops(1, 64, 64).total();
  const int64_t f128 = model.count_flops(1, 128, 128).total();
  const double ratio = static_cast<double>(f128) / static_cast<double>(f64);
  const bool exact4 = f128 == 4 * f64;

  BenchResult b64 = bench_forward(model, 64, 64, 1, 5, 11);
  BenchResult b128 = bench_forward(model, 128, 128, 1, 3, 11);
  const bool increasing = b128.mean_ms > b64.mean_ms;

  report(10, exact4 && increasing,
         fmt("benchmark: flops %lld -> %lld, ratio %.6f (exactly 4x: %s); mean latency "
             "%.2f ms -> %.2f ms (increasing: %s)",
             static_cast<long long>(f64), static_cast<long long>(f128), ratio,
             exact4 ? "yes" : "no", b64.mean_ms, b128.mean_ms, increasing ? "yes" : "no"));
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int id) { return only.empty() || only.count(id); };

  struct Entry {
    int id;
    void (*fn)();
  };
  const Entry entries[] = {
      {1, criterion_gradients},    {2, criterion_attention_oracle},
      {3, criterion_residual_identity}, {4, criterion_normalization},
      {5, criterion_pool_schedule},     {6, criterion_metric_oracle},
      {7, criterion_overfit},           {8, criterion_persistence},
      {9, criterion_accounting},        {10, criterion_benchmark},
  };
  for (const Entry& e : entries) {
    if (!wanted(e.id)) continue;
    try {
      e.fn();
    } catch (const std::exception& ex) {
      report(e.id, false, std::string("exception: ") + ex.what());
    }
  }
  return failures;
}
