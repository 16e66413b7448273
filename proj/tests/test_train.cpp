#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "helpers.hpp"
#include "p2at/checkpoint.hpp"
#include "p2at/runconfig.hpp"
#include "p2at/train.hpp"

using namespace p2at;
using namespace p2at::testing;
namespace fs = std::filesystem;

namespace {

ModelConfig micro_config(int64_t num_classes) {
  ModelConfig cfg;
  cfg.preset = "custom";
  cfg.num_classes = num_classes;
  cfg.widths = {4, 4, 8, 8};
  cfg.blocks = {1, 1, 1, 1};
  cfg.block_kind = BlockKind::Basic;
  cfg.aggregator_depth = 1;
  cfg.heads = 2;
  cfg.ffn_ratio = 2;
  cfg.decoder_width = 8;
  cfg.attn_span = 4;
  cfg.validate();
  return cfg;
}

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "p2at_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double oracle_ce(const TensorF& logits, const std::vector<const LabelMap*>& labels) {
  const int64_t n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  double total = 0.0;
  int64_t count = 0;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        const uint8_t v = labels[static_cast<size_t>(i)]->at(y, x);
        if (v == kIgnore) continue;
        double mx = -1e300;
        for (int64_t c = 0; c < k; ++c)
          mx = std::max(mx, static_cast<double>(logits.at(((i * k + c) * h + y) * w + x)));
        double sum = 0.0;
        for (int64_t c = 0; c < k; ++c)
          sum += std::exp(static_cast<double>(logits.at(((i * k + c) * h + y) * w + x)) - mx);
        total += mx + std::log(sum) -
                 static_cast<double>(logits.at(((i * k + v) * h + y) * w + x));
        ++count;
      }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace

TEST_CASE("poly schedule endpoints and midpoint") {
  CHECK(poly_lr(0.01, 0, 1000, 0.9) == 0.01);
  CHECK(poly_lr(0.01, 1000, 1000, 0.9) == 0.0);
  CHECK(poly_lr(0.01, 1500, 1000, 0.9) == 0.0);
  CHECK(poly_lr(0.01, -3, 1000, 0.9) == 0.01);
  CHECK(poly_lr(0.01, 500, 1000, 0.9) ==
        doctest::Approx(0.01 * std::pow(0.5, 0.9)).epsilon(1e-12));
  CHECK(poly_lr(2.0, 1, 4, 1.0) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK_THROWS_AS(poly_lr(0.01, 0, 0, 0.9), ConfigError);
}

TEST_CASE("cross entropy of uniform logits is log K") {
  TensorF logits = Tensor<float>::full(Shape{2, 5, 4, 4}, 0.7f);
  LabelMap m(4, 4, 3);
  std::vector<const LabelMap*> labels{&m, &m};
  Ctx<float> ctx{nullptr, false};
  Tensor<float> loss = cross_entropy(ctx, logits, labels);
  CHECK(std::fabs(static_cast<double>(loss.at(0)) - std::log(5.0)) < 1e-6);
}

TEST_CASE("cross entropy matches a per-pixel oracle") {
  TensorF logits = random_tensor<float>({2, 3, 4, 5}, 8, -2.0, 2.0);
  LabelMap m0(4, 5), m1(4, 5);
  Rng rng(9);
  for (auto& v : m0.ids) v = static_cast<uint8_t>(rng.below(3));
  for (auto& v : m1.ids) v = rng.below(4) == 0 ? kIgnore : static_cast<uint8_t>(rng.below(3));
  std::vector<const LabelMap*> labels{&m0, &m1};
  Ctx<float> ctx{nullptr, false};
  Tensor<float> loss = cross_entropy(ctx, logits, labels);
  CHECK(std::fabs(static_cast<double>(loss.at(0)) - oracle_ce(logits, labels)) < 1e-5);
}

TEST_CASE("cross entropy handles ignore labels and rejects bad ones") {
  TensorF logits = random_tensor<float>({1, 3, 2, 2}, 10);
  LabelMap all_ignored(2, 2, kIgnore);
  std::vector<const LabelMap*> labels{&all_ignored};
  Ctx<float> ctx{nullptr, false};
  CHECK(cross_entropy(ctx, logits, labels).at(0) == 0.0f);

  LabelMap bad(2, 2, 3);  // label 3 with K=3
  std::vector<const LabelMap*> badl{&bad};
  CHECK_THROWS_WITH_AS(cross_entropy(ctx, logits, badl), doctest::Contains("label 3"),
                       DataError);

  LabelMap wrong_size(3, 3, 0);
  std::vector<const LabelMap*> wsl{&wrong_size};
  CHECK_THROWS_AS(cross_entropy(ctx, logits, wsl), ShapeError);
  std::vector<const LabelMap*> too_many{&all_ignored, &all_ignored};
  CHECK_THROWS_AS(cross_entropy(ctx, logits, too_many), ShapeError);
}

TEST_CASE("cross entropy gradient agrees with finite differences") {
  Tensor<double> logits = random_tensor<double>({1, 3, 4, 4}, 11, -1.5, 1.5);
  LabelMap m(4, 4);
  Rng rng(12);
  for (auto& v : m.ids) v = rng.below(5) == 0 ? kIgnore : static_cast<uint8_t>(rng.below(3));
  std::vector<const LabelMap*> labels{&m};
  ParamRegistry<double> reg(1);
  auto fwd = [&](Ctx<double>& ctx) { return cross_entropy(ctx, logits, labels); };
  auto res = gradcheck(reg, {&logits}, fwd, false, 30, 13);
  INFO(res.worst_coord);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("sgd momentum steps match a hand-computed trace") {
  ParamRegistry<float> reg(1);
  Parameter<float>& p = reg.zeros("w", Shape{2});
  p.value.at(0) = 1.0f;
  p.value.at(1) = 2.0f;
  auto set_grad = [&]() {
    p.grad = TensorF(Shape{2});
    p.grad.at(0) = 0.5f;
    p.grad.at(1) = -1.0f;
  };

  set_grad();
  sgd_step(reg, 0.25, 0.5, 0.0);  // dyadic values keep float math exact
  CHECK(p.value.at(0) == 0.875f);
  CHECK(p.value.at(1) == 2.25f);
  CHECK_FALSE(p.grad.defined());

  set_grad();
  sgd_step(reg, 0.25, 0.5, 0.0);
  CHECK(p.value.at(0) == 0.6875f);
  CHECK(p.value.at(1) == 2.625f);

  ParamRegistry<float> reg2(1);
  Parameter<float>& q = reg2.ones("w", Shape{1});
  sgd_step(reg2, 0.5, 0.0, 0.25);  // no grad set: pure weight decay
  CHECK(q.value.at(0) == 0.875f);

  const float frozen = q.value.at(0);
  q.grad = Tensor<float>::full(Shape{1}, 4.0f);
  sgd_step(reg2, 0.0, 0.0, 0.0);
  CHECK(q.value.at(0) == frozen);
}

TEST_CASE("argmax breaks ties toward the lowest class") {
  TensorF logits(Shape{1, 3, 1, 2});
  // pixel 0: classes (0.5, 0.5, 0.2); pixel 1: (0.1, 0.3, 0.3)
  logits.at(0) = 0.5f;
  logits.at(1) = 0.1f;
  logits.at(2) = 0.5f;
  logits.at(3) = 0.3f;
  logits.at(4) = 0.2f;
  logits.at(5) = 0.3f;
  std::vector<LabelMap> pred = argmax_channel(logits);
  REQUIRE(pred.size() == 1);
  CHECK(pred[0].at(0, 0) == 0);
  CHECK(pred[0].at(0, 1) == 1);

  CHECK_THROWS_AS(argmax_channel(TensorF(Shape{1, 256, 1, 1})), ConfigError);
  CHECK_THROWS_AS(argmax_channel(TensorF(Shape{3, 1, 2})), ShapeError);
}

TEST_CASE("confusion matrix accumulates and validates labels") {
  ConfusionMatrix cm(3);
  LabelMap truth(2, 2), pred(2, 2);
  truth.at(0, 0) = 0; pred.at(0, 0) = 0;
  truth.at(0, 1) = 1; pred.at(0, 1) = 2;
  truth.at(1, 0) = kIgnore; pred.at(1, 0) = 1;
  truth.at(1, 1) = 2; pred.at(1, 1) = 2;
  confusion_update(cm, truth, pred);
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(1, 2) == 1);
  CHECK(cm.at(2, 2) == 1);
  int64_t total = 0;
  for (int64_t v : cm.counts) total += v;
  CHECK(total == 3);  // the ignored pixel is skipped

  LabelMap bad(2, 2, 7);
  CHECK_THROWS_AS(confusion_update(cm, bad, pred), DataError);
  CHECK_THROWS_AS(confusion_update(cm, truth, bad), DataError);
}

TEST_CASE("miou on a pinned matrix") {
  ConfusionMatrix cm(2);
  cm.at(0, 0) = 2;
  cm.at(0, 1) = 1;
  cm.at(1, 0) = 1;
  cm.at(1, 1) = 2;
  IouReport rep = miou(cm);
  CHECK(rep.per_class[0] == 0.5);
  CHECK(rep.per_class[1] == 0.5);
  CHECK(rep.miou == 0.5);
}

TEST_CASE("miou matches brute-force pixel counting") {
  Rng rng(31);
  for (int rep = 0; rep < 100; ++rep) {
    const int64_t k = 2 + rng.below(5);
    LabelMap truth(6, 6), pred(6, 6);
    for (auto& v : truth.ids)
      v = rng.below(5) == 0 ? kIgnore : static_cast<uint8_t>(rng.below(k));
    for (auto& v : pred.ids) v = static_cast<uint8_t>(rng.below(k));

    ConfusionMatrix cm(k);
    confusion_update(cm, truth, pred);

    double sum = 0.0;
    int64_t nvalid = 0;
    bool any = false;
    std::vector<double> per(static_cast<size_t>(k));
    for (int64_t c = 0; c < k; ++c) {
      int64_t inter = 0, uni = 0;
      for (int64_t p = 0; p < 36; ++p) {
        if (truth.ids[static_cast<size_t>(p)] == kIgnore) continue;
        const bool t = truth.ids[static_cast<size_t>(p)] == c;
        const bool q = pred.ids[static_cast<size_t>(p)] == c;
        inter += t && q;
        uni += t || q;
      }
      per[static_cast<size_t>(c)] = uni ? static_cast<double>(inter) / uni : -1.0;
      if (uni) {
        sum += per[static_cast<size_t>(c)];
        ++nvalid;
        any = true;
      }
    }
    if (!any) continue;
    IouReport got = miou(cm);
    CHECK(got.miou == sum / static_cast<double>(nvalid));
    for (int64_t c = 0; c < k; ++c) {
      CHECK(got.valid[static_cast<size_t>(c)] == (per[static_cast<size_t>(c)] >= 0.0));
      if (per[static_cast<size_t>(c)] >= 0.0)
        CHECK(got.per_class[static_cast<size_t>(c)] == per[static_cast<size_t>(c)]);
    }
  }
}

TEST_CASE("miou excludes absent classes and rejects empty matrices") {
  ConfusionMatrix cm(3);
  cm.at(0, 0) = 4;
  cm.at(1, 1) = 2;
  cm.at(0, 1) = 2;
  IouReport rep = miou(cm);
  CHECK_FALSE(rep.valid[2]);
  CHECK(std::isnan(rep.per_class[2]));
  CHECK(rep.miou == doctest::Approx((4.0 / 6.0 + 2.0 / 4.0) / 2.0).epsilon(1e-15));

  ConfusionMatrix empty(2);
  CHECK_THROWS_AS(miou(empty), DataError);
}

TEST_CASE("history serializes to fixed-format csv") {
  std::vector<HistoryRow> rows{{1, 1, 0.05, 1.25, -1.0}, {2, 2, 0.0375, 0.5, 0.8125}};
  CHECK(history_csv(rows) ==
        "epoch,iter,lr,loss,miou\n"
        "1,1,0.050000,1.250000,-1.000000\n"
        "2,2,0.037500,0.500000,0.812500\n");
}

TEST_CASE("training is bitwise reproducible and validates settings") {
  auto samples = synth_generate(5, 6, 32, 32, 3, 0.02);
  TrainConfig tc;
  tc.epochs = 2;
  tc.base_lr = 0.02;
  tc.batch_size = 4;  // 6 samples: one full batch plus a remainder of 2
  tc.seed = 3;
  tc.aug = AugmentPolicy{0.5, 0.75, 1.25, 32, 32};

  ModelF m1(micro_config(3), 7);
  TrainResult r1 = train(m1, samples, samples, tc);
  ModelF m2(micro_config(3), 7);
  TrainResult r2 = train(m2, samples, samples, tc);

  CHECK(r1.steps == 4);
  REQUIRE(r1.history.size() == 4);
  REQUIRE(r2.history.size() == 4);
  for (size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].loss == r2.history[i].loss);
    CHECK(std::isfinite(r1.history[i].loss));
    CHECK(r1.history[i].iter == static_cast<int64_t>(i) + 1);
  }
  CHECK(r1.best_miou == r2.best_miou);
  CHECK(r1.best_miou >= 0.0);
  CHECK(r1.history[0].miou == -1.0);          // before the first validation
  CHECK(r1.history[3].miou == r1.history[2].miou);
  for (const auto& p : m1.params().all())
    CHECK(max_abs_diff(p.value, m2.params().find(p.name)->value) == 0.0);

  TrainConfig bad = tc;
  bad.epochs = 0;
  CHECK_THROWS_AS(train(m1, samples, samples, bad), ConfigError);
  bad = tc;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(m1, samples, samples, bad), ConfigError);
  bad = tc;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(train(m1, samples, samples, bad), ConfigError);
  bad = tc;
  bad.aug.crop_h = 48;
  CHECK_THROWS_AS(train(m1, samples, samples, bad), ConfigError);
  bad = tc;
  bad.base_lr = 0.0;
  CHECK_THROWS_AS(train(m1, samples, samples, bad), ConfigError);
  CHECK_THROWS_AS(train(m1, {}, samples, tc), ConfigError);
}

TEST_CASE("checkpoint round trip preserves weights and logits bitwise") {
  const fs::path dir = scratch_dir("ckpt");
  ModelConfig cfg = micro_config(3);
  ModelF model(cfg, 21);
  randomize_params(model.params(), 22, 0.3);
  const std::string path = (dir / "model.ckpt").string();
  save_checkpoint(model, path);

  Checkpoint ckpt = read_checkpoint(path);
  CHECK(ckpt.config == cfg.serialize());
  CHECK(ckpt.entries.size() == model.params().all().size());

  ModelF other(cfg, 99);  // different seed, then overwritten by the load
  load_into(other, ckpt);
  for (const auto& p : model.params().all())
    CHECK(max_abs_diff(p.value, other.params().find(p.name)->value) == 0.0);

  Ctx<float> ctx{nullptr, false};
  Tensor<float> x = random_tensor<float>({1, 3, 32, 32}, 23);
  CHECK(max_abs_diff(model.forward(ctx, x), other.forward(ctx, x)) == 0.0);

  ModelF rebuilt = build_from_checkpoint(ckpt);
  CHECK(rebuilt.config().diff(cfg).empty());
  CHECK(max_abs_diff(model.forward(ctx, x), rebuilt.forward(ctx, x)) == 0.0);
}

TEST_CASE("checkpoint parsing reports corruption") {
  ModelF model(micro_config(3), 21);
  std::vector<uint8_t> bytes = checkpoint_bytes(model);

  std::vector<uint8_t> bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(parse_checkpoint(bad), doctest::Contains("bad checkpoint magic"),
                       DataError);

  bad = bytes;
  bad[4] = 9;  // version field
  CHECK_THROWS_WITH_AS(parse_checkpoint(bad), doctest::Contains("version"), DataError);

  bad = bytes;
  bad.resize(bad.size() - 10);
  CHECK_THROWS_WITH_AS(parse_checkpoint(bad), doctest::Contains("truncated checkpoint"),
                       DataError);

  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(parse_checkpoint(bad), DataError);
}

TEST_CASE("checkpoint loading names the first offending parameter") {
  ModelConfig cfg = micro_config(3);
  ModelF model(cfg, 21);
  Checkpoint ckpt = parse_checkpoint(checkpoint_bytes(model));
  ModelF target(cfg, 5);

  Checkpoint mutated = ckpt;
  mutated.entries[0].name = "nonexistent.weight";
  CHECK_THROWS_WITH_AS(load_into(target, mutated), doctest::Contains("nonexistent.weight"),
                       DataError);

  mutated = ckpt;
  mutated.entries[1].shape = Shape{1};
  mutated.entries[1].data.assign(1, 0.0f);
  CHECK_THROWS_WITH_AS(load_into(target, mutated),
                       doctest::Contains(ckpt.entries[1].name.c_str()), DataError);

  mutated = ckpt;
  const std::string dropped = mutated.entries.back().name;
  mutated.entries.pop_back();
  CHECK_THROWS_WITH_AS(load_into(target, mutated), doctest::Contains(dropped.c_str()),
                       DataError);

  ModelF wider(micro_config(4), 5);
  CHECK_THROWS_WITH_AS(load_into(wider, ckpt), doctest::Contains("num_classes"), ConfigError);
}

TEST_CASE("run config parses keys, comments, and presets in any order") {
  RunConfig def = RunConfig::parse("");
  CHECK(def.out_dir == ".");
  CHECK(def.model.preset == "tiny");
  CHECK(def.train.epochs == 60);

  const std::string text =
      "# experiment\n"
      "num_classes = 7     # applied after the preset\n"
      "preset = s\n"
      "epochs = 12\n"
      "base_lr = 0.004\n"
      "batch_size = 2\n"
      "crop_h = 96\n"
      "crop_w = 64\n"
      "hflip_prob = 0.25\n"
      "scale_min = 0.8\n"
      "scale_max = 1.6\n"
      "seed = 42\n"
      "stop_miou = 0.9\n"
      "train_manifest = data/train.tsv\n"
      "out_dir = runs/a\n";
  RunConfig rc = RunConfig::parse(text);
  CHECK(rc.model.preset == "s");
  CHECK(rc.model.num_classes == 7);
  CHECK(rc.model.widths[0] == 32);
  CHECK(rc.train.epochs == 12);
  CHECK(rc.train.base_lr == 0.004);
  CHECK(rc.train.batch_size == 2);
  CHECK(rc.train.aug.crop_h == 96);
  CHECK(rc.train.aug.crop_w == 64);
  CHECK(rc.train.aug.hflip_prob == 0.25);
  CHECK(rc.train.aug.scale_min == 0.8);
  CHECK(rc.train.aug.scale_max == 1.6);
  CHECK(rc.train.seed == 42);
  CHECK(rc.train.stop_miou == 0.9);
  CHECK(rc.train_manifest == "data/train.tsv");
  CHECK(rc.out_dir == "runs/a");

  CHECK_THROWS_WITH_AS(RunConfig::parse("epochs = 3\nepochs = 4\n"),
                       doctest::Contains("duplicate"), ConfigError);
  CHECK_THROWS_WITH_AS(RunConfig::parse("velocity = 9\n"), doctest::Contains("velocity"),
                       ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("epochs =\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("= 4\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("epochs 4\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("epochs = twelve\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("heads = 5\n"), ConfigError);  // fails model validation
  CHECK_THROWS_AS(RunConfig::parse("preset = giant\n"), ConfigError);
}
