#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "p2at/tensor.hpp"

namespace p2at {

// Reverse-mode tape. Ops record nodes in execution order; backward() walks
// the tape once in reverse. Gradient buffers live on the tape, keyed by node
// id, and ops accumulate (+=) into them.
template <typename T>
class Graph {
 public:
  using BackFn = std::function<void(Graph<T>&)>;

  // Registers `t` on the tape. A tensor that already carries a node id is
  // returned as-is; a leaf seen before (same storage) reuses its node so
  // gradients from multiple uses accumulate in one buffer.
  Tensor<T> track(const Tensor<T>& t) {
    if (t.node >= 0) return t;
    auto it = leaf_memo_.find(t.data.get());
    if (it != leaf_memo_.end()) {
      Tensor<T> r = t;
      r.node = it->second;
      return r;
    }
    Tensor<T> r = t;
    r.node = new_node(t.numel());
    leaf_memo_.emplace(t.data.get(), r.node);
    return r;
  }

  int new_node(int64_t numel) {
    const int id = static_cast<int>(grads_.size());
    grads_.emplace_back();
    sizes_.push_back(numel);
    return id;
  }

  void record(BackFn fn) { tape_.push_back(std::move(fn)); }

  // Gradient buffer for a node, allocated zero-filled on first touch.
  std::vector<T>& grad_buf(int node) {
    check_node(node);
    auto& g = grads_[static_cast<size_t>(node)];
    if (g.empty()) g.assign(static_cast<size_t>(sizes_[static_cast<size_t>(node)]), T(0));
    return g;
  }

  bool has_grad(int node) const {
    return node >= 0 && node < static_cast<int>(grads_.size()) &&
           !grads_[static_cast<size_t>(node)].empty();
  }

  // Seeds d(loss)/d(loss) = 1 and runs the tape backwards. A tape can run
  // backward once; record more ops or reset() before the next call.
  void backward(const Tensor<T>& loss) {
    if (consumed_) throw UsageError("backward() called twice on the same tape");
    if (loss.node < 0) throw UsageError("backward() target is not on the tape");
    if (loss.numel() != 1) throw UsageError("backward() target must be scalar");
    consumed_ = true;
    auto& g = grad_buf(loss.node);
    g[0] = T(1);
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)(*this);
  }

  // Gradient of a tracked tensor after backward(). Zero tensor if the node
  // never received gradient.
  Tensor<T> grad_of(const Tensor<T>& t) {
    if (t.node < 0) throw UsageError("grad_of() on an untracked tensor");
    Tensor<T> g(t.shape);
    if (has_grad(t.node)) {
      const auto& buf = grads_[static_cast<size_t>(t.node)];
      std::copy(buf.begin(), buf.end(), g.ptr());
    }
    return g;
  }

  void reset() {
    tape_.clear();
    grads_.clear();
    sizes_.clear();
    leaf_memo_.clear();
    consumed_ = false;
  }

  size_t tape_size() const { return tape_.size(); }
  bool consumed() const { return consumed_; }

 private:
  void check_node(int node) const {
    if (node < 0 || node >= static_cast<int>(grads_.size()))
      throw UsageError("bad node id on tape");
  }

  std::vector<BackFn> tape_;
  std::vector<std::vector<T>> grads_;
  std::vector<int64_t> sizes_;
  std::unordered_map<const void*, int> leaf_memo_;
  bool consumed_ = false;
};

// Shared context threaded through ops and blocks. `graph == nullptr` means
// inference: no tape is recorded.
template <typename T>
struct Ctx {
  Graph<T>* graph = nullptr;
  bool training = false;

  bool recording() const { return graph != nullptr; }
};

}  // namespace p2at
