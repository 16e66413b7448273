#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "p2at/data.hpp"
#include "p2at/graph.hpp"
#include "p2at/model.hpp"
#include "p2at/param.hpp"
#include "p2at/tensor.hpp"

namespace p2at {

struct TrainConfig {
  int64_t epochs = 60;
  double base_lr = 0.05;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  int64_t batch_size = 4;
  double poly_power = 0.9;
  uint64_t seed = 1;
  AugmentPolicy aug;
  int64_t eval_every = 1;       // run validation every N epochs; 0 disables
  double stop_miou = -1.0;      // stop once validation mIoU reaches this; <0 disables
};

// base * (1 - iter/max_iter)^power, clamped to 0 at iter >= max_iter.
double poly_lr(double base, int64_t iter, int64_t max_iter, double power);

// Mean per-pixel cross-entropy over pixels whose label != kIgnore.
// logits: [N,K,H,W]; labels: N label maps of HxW. Labels outside [0,K) that
// are not kIgnore raise DataError. Returns a scalar tensor; records the
// backward pass when ctx is recording.
template <typename T>
Tensor<T> cross_entropy(Ctx<T>& ctx, const Tensor<T>& logits,
                        const std::vector<const LabelMap*>& labels);

// Copies accumulated tape gradients into each trainable parameter's grad
// field (zeros when the parameter never contributed to the loss).
template <typename T>
void collect_grads(Graph<T>& graph, ParamRegistry<T>& registry);

// SGD with momentum and decoupled-from-nothing classic weight decay:
//   g = grad + wd * p;  v = momentum * v + g;  p -= lr * v
// Clears grads afterwards.
template <typename T>
void sgd_step(ParamRegistry<T>& registry, double lr, double momentum, double weight_decay);

struct ConfusionMatrix {
  int64_t num_classes = 0;
  std::vector<int64_t> counts;  // rows = ground truth, cols = prediction

  explicit ConfusionMatrix(int64_t k) : num_classes(k), counts(static_cast<size_t>(k * k), 0) {}
  int64_t& at(int64_t truth, int64_t pred) {
    return counts[static_cast<size_t>(truth * num_classes + pred)];
  }
  int64_t at(int64_t truth, int64_t pred) const {
    return counts[static_cast<size_t>(truth * num_classes + pred)];
  }
};

// Per-pixel argmax over the class axis of [N,K,H,W]; ties break to the
// lowest class index.
std::vector<LabelMap> argmax_channel(const TensorF& logits);

// Accumulates prediction/truth pairs, skipping kIgnore pixels.
void confusion_update(ConfusionMatrix& cm, const LabelMap& truth, const LabelMap& pred);

struct IouReport {
  std::vector<double> per_class;  // NaN for classes excluded from the mean
  std::vector<bool> valid;
  double miou = 0.0;
};

// IoU_k = cm[k,k] / (row_k + col_k - cm[k,k]); classes with zero union are
// excluded from the mean. All classes excluded is an error state.
IouReport miou(const ConfusionMatrix& cm);

// Whole-image forward in eval mode, one sample at a time.
IouReport evaluate(ModelF& model, const std::vector<SegmentationSample>& samples);

struct HistoryRow {
  int64_t epoch = 0;
  int64_t iter = 0;  // 1-based global optimizer step
  double lr = 0.0;
  double loss = 0.0;
  double miou = -1.0;  // most recent validation mIoU; -1 before the first eval
};

struct TrainResult {
  std::vector<HistoryRow> history;
  double best_miou = -1.0;
  int64_t steps = 0;
};

// "epoch,iter,lr,loss,miou" header plus one row per optimizer step,
// 6-decimal fixed notation.
std::string history_csv(const std::vector<HistoryRow>& history);

TrainResult train(ModelF& model, const std::vector<SegmentationSample>& train_set,
                  const std::vector<SegmentationSample>& val_set, const TrainConfig& cfg);

}  // namespace p2at
