#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "p2at/model.hpp"
#include "p2at/tensor.hpp"

namespace p2at {

// Checkpoint layout (all integers little-endian):
//   magic "P2AT" | version u32 | config length u32 | config text
//   | entry count u32 | entries
// Entry: name length u32 | name | rank u32 | dims u32[rank] | float32 payload.
// Every registry parameter is stored, including batch-norm running buffers.
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::string config;  // ModelConfig::serialize() echo of the saved model
  std::vector<CheckpointEntry> entries;
};

std::vector<uint8_t> checkpoint_bytes(const ModelF& model);

// Throws DataError on bad magic, unsupported version, or truncation; the
// message states expected versus available byte counts.
Checkpoint parse_checkpoint(const std::vector<uint8_t>& bytes);

void save_checkpoint(const ModelF& model, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

// Copies checkpoint values into the model's parameters. Fails when the
// config echo differs (naming the first differing key), or on the first
// unknown, missing, or shape-mismatched parameter.
void load_into(ModelF& model, const Checkpoint& ckpt);

// Rebuilds a model from the checkpoint's config echo and loads its weights.
ModelF build_from_checkpoint(const Checkpoint& ckpt);

}  // namespace p2at
