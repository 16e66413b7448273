#include "p2at/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_set>

#include "p2at/data.hpp"

namespace p2at {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 24));
}

void put_f32(std::vector<uint8_t>& out, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

struct ByteReader {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;

  explicit ByteReader(const std::vector<uint8_t>& b) : bytes(b) {}

  void need(size_t n, const std::string& what) const {
    if (bytes.size() - pos < n)
      throw DataError("truncated checkpoint: " + what + " needs " + std::to_string(n) +
                      " bytes at offset " + std::to_string(pos) + ", only " +
                      std::to_string(bytes.size() - pos) + " remain");
  }

  uint32_t u32(const std::string& what) {
    need(4, what);
    uint32_t v = static_cast<uint32_t>(bytes[pos]) | (static_cast<uint32_t>(bytes[pos + 1]) << 8) |
                 (static_cast<uint32_t>(bytes[pos + 2]) << 16) |
                 (static_cast<uint32_t>(bytes[pos + 3]) << 24);
    pos += 4;
    return v;
  }

  float f32(const std::string& what) {
    const uint32_t v = u32(what);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }

  std::string str(size_t n, const std::string& what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

std::vector<uint8_t> checkpoint_bytes(const ModelF& model) {
  std::vector<uint8_t> out;
  out.insert(out.end(), {'P', '2', 'A', 'T'});
  put_u32(out, kCheckpointVersion);
  const std::string cfg = model.config().serialize();
  put_u32(out, static_cast<uint32_t>(cfg.size()));
  out.insert(out.end(), cfg.begin(), cfg.end());
  const auto& params = model.params().all();
  put_u32(out, static_cast<uint32_t>(params.size()));
  for (const auto& p : params) {
    put_u32(out, static_cast<uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put_u32(out, static_cast<uint32_t>(p.value.rank()));
    for (int64_t d : p.value.shape) put_u32(out, static_cast<uint32_t>(d));
    for (int64_t i = 0; i < p.value.numel(); ++i) put_f32(out, p.value.at(i));
  }
  return out;
}

Checkpoint parse_checkpoint(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), "P2AT", 4) != 0) throw DataError("bad checkpoint magic");
  r.pos = 4;
  const uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw DataError("checkpoint version " + std::to_string(version) + " unsupported, expected " +
                    std::to_string(kCheckpointVersion));
  Checkpoint ck;
  const uint32_t clen = r.u32("config length");
  ck.config = r.str(clen, "config text");
  const uint32_t nentries = r.u32("entry count");
  ck.entries.reserve(nentries);
  for (uint32_t e = 0; e < nentries; ++e) {
    CheckpointEntry entry;
    const uint32_t nlen = r.u32("entry name length");
    entry.name = r.str(nlen, "entry name");
    const uint32_t rank = r.u32("entry rank");
    if (rank > 8) throw DataError("entry '" + entry.name + "' rank " + std::to_string(rank) +
                                  " is implausible");
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      const uint32_t dim = r.u32("entry dims");
      entry.shape.push_back(static_cast<int64_t>(dim));
      numel *= dim;
    }
    r.need(static_cast<size_t>(numel) * 4, "payload of '" + entry.name + "'");
    entry.data.resize(static_cast<size_t>(numel));
    for (int64_t i = 0; i < numel; ++i) entry.data[static_cast<size_t>(i)] = r.f32("payload");
    ck.entries.push_back(std::move(entry));
  }
  if (r.pos != bytes.size())
    throw DataError("checkpoint has " + std::to_string(bytes.size() - r.pos) +
                    " trailing bytes at offset " + std::to_string(r.pos));
  return ck;
}

void save_checkpoint(const ModelF& model, const std::string& path) {
  write_file(path, checkpoint_bytes(model));
}

Checkpoint read_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

void load_into(ModelF& model, const Checkpoint& ckpt) {
  const ModelConfig stored = ModelConfig::deserialize(ckpt.config);
  const std::string key = model.config().diff(stored);
  if (!key.empty())
    throw ConfigError("checkpoint config mismatch on '" + key + "': model has " +
                      model.config().serialize() + " but checkpoint has " + ckpt.config);
  std::unordered_set<std::string> seen;
  for (const auto& e : ckpt.entries) {
    Parameter<float>* p = model.params().find(e.name);
    if (!p) throw DataError("checkpoint contains unknown parameter '" + e.name + "'");
    if (p->value.shape != e.shape)
      throw DataError("checkpoint parameter '" + e.name + "' has shape " + shape_str(e.shape) +
                      " but model expects " + shape_str(p->value.shape));
    seen.insert(e.name);
  }
  for (const auto& p : model.params().all())
    if (!seen.count(p.name))
      throw DataError("checkpoint is missing parameter '" + p.name + "'");
  for (const auto& e : ckpt.entries) {
    Parameter<float>* p = model.params().find(e.name);
    std::copy(e.data.begin(), e.data.end(), p->value.ptr());
  }
}

ModelF build_from_checkpoint(const Checkpoint& ckpt) {
  const ModelConfig cfg = ModelConfig::deserialize(ckpt.config);
  ModelF model(cfg, 0);
  load_into(model, ckpt);
  return model;
}

}  // namespace p2at
