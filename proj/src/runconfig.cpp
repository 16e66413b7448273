#include "p2at/runconfig.hpp"

#include <fstream>
#include <sstream>
#include <utility>
#include <vector>

namespace p2at {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const int64_t v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' needs an integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' needs a number, got '" + value + "'");
  }
}

uint64_t parse_seed(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' needs an unsigned integer, got '" + value + "'");
  }
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream in(text);
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("run config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("run config line " + std::to_string(lineno) + ": empty key or value");
    for (const auto& [k, v] : pairs)
      if (k == key) throw ConfigError("duplicate key '" + key + "'");
    pairs.emplace_back(key, value);
  }

  RunConfig rc;
  for (const auto& [key, value] : pairs)
    if (key == "preset") rc.model = ModelConfig::from_preset(value, rc.model.num_classes);

  for (const auto& [key, value] : pairs) {
    if (key == "preset") {
    } else if (key == "num_classes") {
      rc.model.num_classes = parse_int(key, value);
    } else if (key == "aggregator_depth") {
      rc.model.aggregator_depth = parse_int(key, value);
    } else if (key == "heads") {
      rc.model.heads = parse_int(key, value);
    } else if (key == "ffn_ratio") {
      rc.model.ffn_ratio = parse_int(key, value);
    } else if (key == "decoder_width") {
      rc.model.decoder_width = parse_int(key, value);
    } else if (key == "attn_span") {
      rc.model.attn_span = parse_int(key, value);
    } else if (key == "epochs") {
      rc.train.epochs = parse_int(key, value);
    } else if (key == "base_lr") {
      rc.train.base_lr = parse_double(key, value);
    } else if (key == "weight_decay") {
      rc.train.weight_decay = parse_double(key, value);
    } else if (key == "momentum") {
      rc.train.momentum = parse_double(key, value);
    } else if (key == "batch_size") {
      rc.train.batch_size = parse_int(key, value);
    } else if (key == "poly_power") {
      rc.train.poly_power = parse_double(key, value);
    } else if (key == "seed") {
      rc.train.seed = parse_seed(key, value);
    } else if (key == "crop_h") {
      rc.train.aug.crop_h = parse_int(key, value);
    } else if (key == "crop_w") {
      rc.train.aug.crop_w = parse_int(key, value);
    } else if (key == "hflip_prob") {
      rc.train.aug.hflip_prob = parse_double(key, value);
    } else if (key == "scale_min") {
      rc.train.aug.scale_min = parse_double(key, value);
    } else if (key == "scale_max") {
      rc.train.aug.scale_max = parse_double(key, value);
    } else if (key == "eval_every") {
      rc.train.eval_every = parse_int(key, value);
    } else if (key == "stop_miou") {
      rc.train.stop_miou = parse_double(key, value);
    } else if (key == "train_manifest") {
      rc.train_manifest = value;
    } else if (key == "val_manifest") {
      rc.val_manifest = value;
    } else if (key == "out_dir") {
      rc.out_dir = value;
    } else {
      throw ConfigError("unknown run config key '" + key + "'");
    }
  }
  rc.model.validate();
  return rc;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open run config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

}  // namespace p2at
