#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "p2at/bench.hpp"
#include "p2at/checkpoint.hpp"
#include "p2at/data.hpp"
#include "p2at/model.hpp"
#include "p2at/runconfig.hpp"
#include "p2at/train.hpp"

namespace {

namespace fs = std::filesystem;

void print_iou(const p2at::IouReport& rep) {
  for (size_t c = 0; c < rep.per_class.size(); ++c) {
    if (rep.valid[c])
      std::printf("class %3zu  iou %.6f\n", c, rep.per_class[c]);
    else
      std::printf("class %3zu  iou excluded\n", c);
  }
  std::printf("mIoU: %.6f\n", rep.miou);
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_path, int64_t seed_override, bool has_seed) {
  p2at::RunConfig rc;
  if (!config_path.empty()) rc = p2at::RunConfig::load(config_path);
  if (!data_path.empty()) rc.train_manifest = data_path;
  if (!out_path.empty()) rc.out_dir = out_path;
  if (has_seed) rc.train.seed = static_cast<uint64_t>(seed_override);
  if (rc.train_manifest.empty())
    throw p2at::UsageError("train needs a manifest via --data or train_manifest in the config");

  auto train_set = p2at::load_samples(p2at::Manifest::load(rc.train_manifest));
  auto val_set = rc.val_manifest.empty()
                     ? train_set
                     : p2at::load_samples(p2at::Manifest::load(rc.val_manifest));

  p2at::ModelF model(rc.model, rc.train.seed);
  std::printf("preset %s  params %lld  train %zu  val %zu\n", rc.model.preset.c_str(),
              static_cast<long long>(model.count_params()), train_set.size(), val_set.size());
  const p2at::TrainResult res = p2at::train(model, train_set, val_set, rc.train);

  fs::create_directories(rc.out_dir);
  const std::string hist_path = (fs::path(rc.out_dir) / "history.csv").string();
  const std::string csv = p2at::history_csv(res.history);
  p2at::write_file(hist_path, std::vector<uint8_t>(csv.begin(), csv.end()));
  const std::string ckpt_path = (fs::path(rc.out_dir) / "model.ckpt").string();
  p2at::save_checkpoint(model, ckpt_path);
  std::printf("steps %lld  best mIoU %.6f\n", static_cast<long long>(res.steps), res.best_miou);
  std::printf("wrote %s and %s\n", hist_path.c_str(), ckpt_path.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path) {
  p2at::ModelF model = p2at::build_from_checkpoint(p2at::read_checkpoint(ckpt_path));
  auto samples = p2at::load_samples(p2at::Manifest::load(data_path));
  print_iou(p2at::evaluate(model, samples));
  return 0;
}

int cmd_bench(const std::string& ckpt_path, const std::string& preset, int64_t classes, int64_t h,
              int64_t w, int64_t warmup, int64_t iters, int64_t threads) {
  omp_set_num_threads(static_cast<int>(threads));
  p2at::ModelF model = !ckpt_path.empty()
                           ? p2at::build_from_checkpoint(p2at::read_checkpoint(ckpt_path))
                           : p2at::ModelF(p2at::ModelConfig::from_preset(preset, classes), 1);
  const p2at::BenchResult res = p2at::bench_forward(model, h, w, warmup, iters, 42);
  std::printf("input 1x%lldx%lldx%lld  threads %lld\n",
              static_cast<long long>(model.config().in_channels), static_cast<long long>(h),
              static_cast<long long>(w), static_cast<long long>(threads));
  std::printf("params %lld  flops %lld\n", static_cast<long long>(res.params),
              static_cast<long long>(res.flops));
  const p2at::FlopBreakdown fb = model.count_flops(1, h, w);
  std::printf("  conv %lld  attention %lld  pool %lld  upsample %lld  elementwise %lld\n",
              static_cast<long long>(fb.conv), static_cast<long long>(fb.attention),
              static_cast<long long>(fb.pool), static_cast<long long>(fb.upsample),
              static_cast<long long>(fb.elementwise));
  std::printf("mean %.3f ms  p50 %.3f ms  p95 %.3f ms  fps %.2f\n", res.mean_ms, res.p50_ms,
              res.p95_ms, res.fps);
  return 0;
}

int cmd_synth(const std::string& out_dir, int64_t n, int64_t seed, int64_t classes, int64_t h,
              int64_t w) {
  fs::create_directories(out_dir);
  auto samples = p2at::synth_generate(static_cast<uint64_t>(seed), n, h, w, classes);
  std::string manifest;
  char name[64];
  for (int64_t i = 0; i < n; ++i) {
    std::snprintf(name, sizeof(name), "img_%04lld.ppm", static_cast<long long>(i));
    const std::string img = name;
    std::snprintf(name, sizeof(name), "msk_%04lld.pgm", static_cast<long long>(i));
    const std::string msk = name;
    p2at::write_file((fs::path(out_dir) / img).string(),
                     p2at::encode_ppm(samples[static_cast<size_t>(i)].image));
    p2at::write_file((fs::path(out_dir) / msk).string(),
                     p2at::encode_pgm(samples[static_cast<size_t>(i)].mask));
    manifest += img + "\t" + msk + "\n";
  }
  p2at::write_file((fs::path(out_dir) / "manifest.tsv").string(),
                   std::vector<uint8_t>(manifest.begin(), manifest.end()));
  std::printf("wrote %lld samples to %s\n", static_cast<long long>(n), out_dir.c_str());
  return 0;
}

int cmd_inspect(const std::string& ckpt_path) {
  const p2at::Checkpoint ck = p2at::read_checkpoint(ckpt_path);
  p2at::ModelF model = p2at::build_from_checkpoint(ck);
  for (const auto& p : model.params().all())
    std::printf("%-44s %-16s %10lld%s\n", p.name.c_str(), p2at::shape_str(p.value.shape).c_str(),
                static_cast<long long>(p.value.numel()), p.trainable ? "" : "  (buffer)");
  std::printf("total trainable parameters: %lld\n",
              static_cast<long long>(model.count_params()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"P2AT semantic segmentation toolkit"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print this help message and exit");

  std::string config_path, data_path, out_path, ckpt_path, preset = "tiny";
  int64_t seed = 1, n = 16, classes = 4, h = 256, w = 256, iters = 10, warmup = 2, threads = 1;
  int64_t synth_h = 64, synth_w = 64;

  CLI::App* train = app.add_subcommand("train", "Train a model on a manifest dataset");
  train->add_option("--config", config_path, "run config file");
  train->add_option("--data", data_path, "training manifest (overrides the config)");
  train->add_option("--out", out_path, "output directory (overrides the config)");
  CLI::Option* seed_opt = train->add_option("--seed", seed, "RNG seed (overrides the config)");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest dataset");
  eval->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
  eval->add_option("--data", data_path, "evaluation manifest")->required();

  CLI::App* bench = app.add_subcommand("bench", "Time single-image inference");
  bench->set_help_flag("--help", "print this help message and exit");
  CLI::Option* bench_ckpt = bench->add_option("--checkpoint", ckpt_path, "checkpoint path");
  bench->add_option("--preset", preset, "model preset when no checkpoint is given")
      ->excludes(bench_ckpt);
  bench->add_option("--classes", classes, "class count for --preset");
  bench->add_option("--h", h, "input height");
  bench->add_option("--w", w, "input width");
  bench->add_option("--iters", iters, "timed iterations");
  bench->add_option("--warmup", warmup, "untimed warmup iterations");
  bench->add_option("--threads", threads, "OpenMP thread count");

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic labelled dataset");
  synth->set_help_flag("--help", "print this help message and exit");
  synth->add_option("--out", out_path, "output directory")->required();
  synth->add_option("--n", n, "sample count");
  synth->add_option("--seed", seed, "RNG seed");
  synth->add_option("--classes", classes, "class count");
  synth->add_option("--h", synth_h, "image height");
  synth->add_option("--w", synth_w, "image width");

  CLI::App* inspect = app.add_subcommand("inspect", "List checkpoint parameters");
  inspect->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();

  try {
    app.parse(argc, argv);
    if (train->parsed()) return cmd_train(config_path, data_path, out_path, seed, seed_opt->count() > 0);
    if (eval->parsed()) return cmd_eval(ckpt_path, data_path);
    if (bench->parsed()) return cmd_bench(ckpt_path, bench_ckpt->count() > 0 ? "" : preset,
                                          classes, h, w, warmup, iters, threads);
    if (synth->parsed()) return cmd_synth(out_path, n, seed, classes, synth_h, synth_w);
    if (inspect->parsed()) return cmd_inspect(ckpt_path);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const p2at::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const p2at::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
