#include "p2at/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>

#include "p2at/kernels.hpp"

namespace p2at {

double poly_lr(double base, int64_t iter, int64_t max_iter, double power) {
  if (max_iter <= 0) throw ConfigError("poly schedule needs max_iter > 0");
  if (iter >= max_iter) return 0.0;
  if (iter < 0) iter = 0;
  return base * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), power);
}

template <typename T>
Tensor<T> cross_entropy(Ctx<T>& ctx, const Tensor<T>& logits,
                        const std::vector<const LabelMap*>& labels) {
  if (logits.rank() != 4)
    throw ShapeError("cross_entropy expects [N,K,H,W] logits, got " + shape_str(logits.shape));
  const int64_t n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (static_cast<int64_t>(labels.size()) != n)
    throw ShapeError("cross_entropy got " + std::to_string(labels.size()) + " label maps for batch " +
                     std::to_string(n));
  const int64_t pixels = n * h * w;

  auto idx = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(pixels));
  int64_t count = 0;
  for (int64_t i = 0; i < n; ++i) {
    const LabelMap& m = *labels[static_cast<size_t>(i)];
    if (m.h != h || m.w != w)
      throw ShapeError("label map " + std::to_string(i) + " is " + std::to_string(m.h) + "x" +
                       std::to_string(m.w) + " but logits are " + std::to_string(h) + "x" +
                       std::to_string(w));
    for (int64_t p = 0; p < h * w; ++p) {
      const uint8_t v = m.ids[static_cast<size_t>(p)];
      if (v == kIgnore) {
        (*idx)[static_cast<size_t>(i * h * w + p)] = -1;
      } else if (v >= k) {
        throw DataError("label " + std::to_string(v) + " at sample " + std::to_string(i) +
                        " pixel " + std::to_string(p) + " exceeds class count " + std::to_string(k));
      } else {
        (*idx)[static_cast<size_t>(i * h * w + p)] = v;
        ++count;
      }
    }
  }

  const bool rec = ctx.recording();
  auto probs = std::make_shared<std::vector<T>>();
  if (rec) probs->assign(static_cast<size_t>(logits.numel()), T(0));
  std::vector<T> pixel_loss(static_cast<size_t>(pixels), T(0));
  const T* lp = logits.ptr();
  const int64_t plane = h * w;

#pragma omp parallel for
  for (int64_t p = 0; p < pixels; ++p) {
    const int64_t i = p / plane, rem = p % plane;
    const T* base = lp + i * k * plane + rem;
    T mx = base[0];
    for (int64_t c = 1; c < k; ++c) mx = std::max(mx, base[c * plane]);
    T sum = T(0);
    for (int64_t c = 0; c < k; ++c) sum += std::exp(base[c * plane] - mx);
    if (rec) {
      for (int64_t c = 0; c < k; ++c)
        (*probs)[static_cast<size_t>(i * k * plane + c * plane + rem)] =
            std::exp(base[c * plane] - mx) / sum;
    }
    const int32_t v = (*idx)[static_cast<size_t>(p)];
    if (v >= 0) pixel_loss[static_cast<size_t>(p)] = std::log(sum) + mx - base[v * plane];
  }

  Tensor<T> out(Shape{1});
  out.at(0) = count > 0 ? kernels::reduce_sum(pixel_loss.data(), pixels) / static_cast<T>(count)
                        : T(0);
  if (!rec) return out;

  Tensor<T> lg = ctx.graph->track(logits);
  out.node = ctx.graph->new_node(1);
  const int onode = out.node, lnode = lg.node;
  ctx.graph->record([onode, lnode, idx, probs, n, k, h, w, count](Graph<T>& gr) {
    if (!gr.has_grad(onode)) return;
    if (count == 0) return;
    const T gout = gr.grad_buf(onode)[0];
    const T invc = gout / static_cast<T>(count);
    auto& gin = gr.grad_buf(lnode);
    const int64_t plane = h * w;
#pragma omp parallel for
    for (int64_t p = 0; p < n * plane; ++p) {
      const int32_t v = (*idx)[static_cast<size_t>(p)];
      if (v < 0) continue;
      const int64_t i = p / plane, rem = p % plane;
      for (int64_t c = 0; c < k; ++c) {
        const size_t at = static_cast<size_t>(i * k * plane + c * plane + rem);
        gin[at] += invc * ((*probs)[at] - (c == v ? T(1) : T(0)));
      }
    }
  });
  return out;
}

template <typename T>
void collect_grads(Graph<T>& graph, ParamRegistry<T>& registry) {
  for (auto& p : registry.all()) {
    if (!p.trainable) continue;
    p.grad = graph.grad_of(graph.track(p.value));
  }
}

template <typename T>
void sgd_step(ParamRegistry<T>& registry, double lr, double momentum, double weight_decay) {
  for (auto& p : registry.all()) {
    if (!p.trainable) continue;
    if (!p.velocity.defined()) p.velocity = Tensor<T>(p.value.shape);
    const T* g = p.grad.defined() ? p.grad.ptr() : nullptr;
    T* v = p.velocity.ptr();
    T* x = p.value.ptr();
    const T mu = static_cast<T>(momentum), wd = static_cast<T>(weight_decay);
    const T step = static_cast<T>(lr);
    for (int64_t i = 0; i < p.value.numel(); ++i) {
      const T gi = (g ? g[i] : T(0)) + wd * x[i];
      v[i] = mu * v[i] + gi;
      x[i] -= step * v[i];
    }
    p.grad = Tensor<T>();
  }
}

std::vector<LabelMap> argmax_channel(const TensorF& logits) {
  if (logits.rank() != 4)
    throw ShapeError("argmax_channel expects [N,K,H,W], got " + shape_str(logits.shape));
  const int64_t n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (k > 255) throw ConfigError("class count " + std::to_string(k) + " exceeds label range");
  std::vector<LabelMap> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) out.emplace_back(h, w);
  const float* lp = logits.ptr();
  const int64_t plane = h * w;
#pragma omp parallel for
  for (int64_t p = 0; p < n * plane; ++p) {
    const int64_t i = p / plane, rem = p % plane;
    const float* base = lp + i * k * plane + rem;
    int64_t best = 0;
    float bv = base[0];
    for (int64_t c = 1; c < k; ++c)
      if (base[c * plane] > bv) {
        bv = base[c * plane];
        best = c;
      }
    out[static_cast<size_t>(i)].ids[static_cast<size_t>(rem)] = static_cast<uint8_t>(best);
  }
  return out;
}

void confusion_update(ConfusionMatrix& cm, const LabelMap& truth, const LabelMap& pred) {
  if (truth.h != pred.h || truth.w != pred.w)
    throw ShapeError("confusion_update: truth " + std::to_string(truth.h) + "x" +
                     std::to_string(truth.w) + " vs prediction " + std::to_string(pred.h) + "x" +
                     std::to_string(pred.w));
  for (size_t p = 0; p < truth.ids.size(); ++p) {
    const uint8_t t = truth.ids[p];
    if (t == kIgnore) continue;
    if (t >= cm.num_classes)
      throw DataError("label " + std::to_string(t) + " exceeds class count " +
                      std::to_string(cm.num_classes));
    const uint8_t q = pred.ids[p];
    if (q >= cm.num_classes)
      throw DataError("prediction " + std::to_string(q) + " exceeds class count " +
                      std::to_string(cm.num_classes));
    ++cm.at(t, q);
  }
}

IouReport miou(const ConfusionMatrix& cm) {
  const int64_t k = cm.num_classes;
  IouReport rep;
  rep.per_class.assign(static_cast<size_t>(k), std::numeric_limits<double>::quiet_NaN());
  rep.valid.assign(static_cast<size_t>(k), false);
  double sum = 0.0;
  int64_t nvalid = 0;
  for (int64_t c = 0; c < k; ++c) {
    int64_t row = 0, col = 0;
    for (int64_t j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const int64_t uni = row + col - cm.at(c, c);
    if (uni == 0) continue;
    const double iou = static_cast<double>(cm.at(c, c)) / static_cast<double>(uni);
    rep.per_class[static_cast<size_t>(c)] = iou;
    rep.valid[static_cast<size_t>(c)] = true;
    sum += iou;
    ++nvalid;
  }
  if (nvalid == 0) throw DataError("mIoU undefined: every class has zero union");
  rep.miou = sum / static_cast<double>(nvalid);
  return rep;
}

IouReport evaluate(ModelF& model, const std::vector<SegmentationSample>& samples) {
  if (samples.empty()) throw ConfigError("evaluate: empty sample set");
  ConfusionMatrix cm(model.config().num_classes);
  Ctx<float> ctx;
  for (const auto& s : samples) {
    const int64_t h = s.image.dim(1), w = s.image.dim(2);
    const TensorF batch = s.image.viewed(Shape{1, 3, h, w});
    const TensorF logits = model.forward(ctx, batch);
    const auto preds = argmax_channel(logits);
    confusion_update(cm, s.mask, preds[0]);
  }
  return miou(cm);
}

std::string history_csv(const std::vector<HistoryRow>& history) {
  std::string out = "epoch,iter,lr,loss,miou\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%lld,%lld,%.6f,%.6f,%.6f\n",
                  static_cast<long long>(r.epoch), static_cast<long long>(r.iter), r.lr, r.loss,
                  r.miou);
    out += buf;
  }
  return out;
}

TrainResult train(ModelF& model, const std::vector<SegmentationSample>& train_set,
                  const std::vector<SegmentationSample>& val_set, const TrainConfig& cfg) {
  if (train_set.empty()) throw ConfigError("train: empty training set");
  if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (cfg.base_lr <= 0) throw ConfigError("train: base_lr must be positive");
  if (cfg.momentum < 0 || cfg.momentum >= 1) throw ConfigError("train: momentum must be in [0,1)");
  if (cfg.aug.crop_h % 32 != 0 || cfg.aug.crop_w % 32 != 0)
    throw ConfigError("train: crop size must be divisible by 32, got " +
                      std::to_string(cfg.aug.crop_h) + "x" + std::to_string(cfg.aug.crop_w));

  const int64_t n = static_cast<int64_t>(train_set.size());
  const int64_t bsz = cfg.batch_size;
  const int64_t steps_per_epoch = (n + bsz - 1) / bsz;
  const int64_t max_iter = cfg.epochs * steps_per_epoch;
  const int64_t ch = cfg.aug.crop_h, cw = cfg.aug.crop_w;

  TrainResult res;
  double cur_miou = -1.0;
  int64_t iter = 0;
  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(stream_seed(stream_seed(cfg.seed, 1), static_cast<uint64_t>(epoch)));
    for (int64_t j = n; j > 1; --j)
      std::swap(order[static_cast<size_t>(j - 1)],
                order[static_cast<size_t>(shuffle_rng.below(j))]);

    for (int64_t b0 = 0; b0 < n; b0 += bsz) {
      const int64_t bs = std::min(bsz, n - b0);
      TensorF batch(Shape{bs, 3, ch, cw});
      std::vector<LabelMap> masks(static_cast<size_t>(bs));
      for (int64_t j = 0; j < bs; ++j) {
        const int64_t sidx = order[static_cast<size_t>(b0 + j)];
        Rng aug_rng(stream_seed(stream_seed(cfg.seed, 2),
                                static_cast<uint64_t>(epoch * n + sidx)));
        SegmentationSample s = augment(train_set[static_cast<size_t>(sidx)], aug_rng, cfg.aug);
        std::copy(s.image.ptr(), s.image.ptr() + 3 * ch * cw, batch.ptr() + j * 3 * ch * cw);
        masks[static_cast<size_t>(j)] = std::move(s.mask);
      }
      std::vector<const LabelMap*> label_ptrs;
      label_ptrs.reserve(masks.size());
      for (const auto& m : masks) label_ptrs.push_back(&m);

      Graph<float> graph;
      Ctx<float> ctx{&graph, true};
      const TensorF logits = model.forward(ctx, batch);
      const TensorF loss = cross_entropy(ctx, logits, label_ptrs);
      const double lr = poly_lr(cfg.base_lr, iter, max_iter, cfg.poly_power);
      const float lv = loss.at(0);
      if (!std::isfinite(lv))
        throw Error("training diverged: loss is not finite at epoch " + std::to_string(epoch) +
                    " step " + std::to_string(iter + 1) + " (lr " + std::to_string(lr) + ")");
      graph.backward(loss);
      collect_grads(graph, model.params());
      sgd_step(model.params(), lr, cfg.momentum, cfg.weight_decay);
      ++iter;
      res.history.push_back(
          HistoryRow{epoch, iter, lr, static_cast<double>(lv), cur_miou});
    }

    if (cfg.eval_every > 0 && epoch % cfg.eval_every == 0 && !val_set.empty()) {
      const IouReport rep = evaluate(model, val_set);
      cur_miou = rep.miou;
      res.best_miou = std::max(res.best_miou, cur_miou);
      if (cfg.stop_miou >= 0 && cur_miou >= cfg.stop_miou) break;
    }
  }
  res.steps = iter;
  return res;
}

#define P2AT_TRAIN_INSTANTIATE(T)                                                       \
  template Tensor<T> cross_entropy<T>(Ctx<T>&, const Tensor<T>&,                        \
                                      const std::vector<const LabelMap*>&);             \
  template void collect_grads<T>(Graph<T>&, ParamRegistry<T>&);                         \
  template void sgd_step<T>(ParamRegistry<T>&, double, double, double);

P2AT_TRAIN_INSTANTIATE(float)
P2AT_TRAIN_INSTANTIATE(double)

}  // namespace p2at
