#pragma once

#include <string>

#include "p2at/model.hpp"
#include "p2at/train.hpp"

namespace p2at {

// "key = value" run file, '#' starts a comment. `preset` is applied before
// the other model keys regardless of position; unknown or duplicate keys are
// rejected.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string train_manifest;
  std::string val_manifest;
  std::string out_dir = ".";

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
};

}  // namespace p2at
