#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <unordered_map>

#include "p2at/common.hpp"
#include "p2at/tensor.hpp"

namespace p2at {

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;      // filled after backward, cleared by the optimizer step
  Tensor<T> velocity;  // SGD momentum state, allocated on first step
  bool trainable = true;
};

// Owns every parameter of a model. Initial values are drawn from a stream
// seeded by (build seed, name hash), so construction order does not affect
// initialization.
template <typename T>
class ParamRegistry {
 public:
  explicit ParamRegistry(uint64_t seed) : seed_(seed) {}

  Parameter<T>& add(const std::string& name, Tensor<T> value, bool trainable = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    value.requires_grad = trainable;
    params_.push_back(Parameter<T>{name, std::move(value), {}, {}, trainable});
    index_.emplace(name, params_.size() - 1);
    return params_.back();
  }

  // Kaiming-uniform fan-in init for conv weights [cout, cin/g, kh, kw].
  Parameter<T>& kaiming(const std::string& name, const Shape& shape) {
    int64_t fan_in = 1;
    for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor<T> t(shape);
    Rng rng(stream_seed(seed_, fnv1a64(name)));
    for (int64_t i = 0; i < t.numel(); ++i)
      t.at(i) = static_cast<T>(rng.uniform(-bound, bound));
    return add(name, std::move(t));
  }

  Parameter<T>& zeros(const std::string& name, const Shape& shape, bool trainable = true) {
    return add(name, Tensor<T>(shape), trainable);
  }

  Parameter<T>& ones(const std::string& name, const Shape& shape, bool trainable = true) {
    return add(name, Tensor<T>::full(shape, T(1)), trainable);
  }

  Parameter<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  std::deque<Parameter<T>>& all() { return params_; }
  const std::deque<Parameter<T>>& all() const { return params_; }

  int64_t count_trainable() const {
    int64_t n = 0;
    for (const auto& p : params_)
      if (p.trainable) n += p.value.numel();
    return n;
  }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  std::deque<Parameter<T>> params_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace p2at
