#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "p2at/common.hpp"
#include "p2at/tensor.hpp"

namespace p2at {

// H x W grid of class ids; kIgnore marks unlabelled pixels.
struct LabelMap {
  int64_t h = 0, w = 0;
  std::vector<uint8_t> ids;

  LabelMap() = default;
  LabelMap(int64_t h, int64_t w, uint8_t fill = 0)
      : h(h), w(w), ids(static_cast<size_t>(h * w), fill) {}

  uint8_t at(int64_t y, int64_t x) const { return ids[static_cast<size_t>(y * w + x)]; }
  uint8_t& at(int64_t y, int64_t x) { return ids[static_cast<size_t>(y * w + x)]; }
};

struct SegmentationSample {
  TensorF image;  // [3,H,W], values in [0,1]
  LabelMap mask;
};

// Binary netpbm codecs (maxval 255). Decode errors carry the byte offset.
TensorF decode_ppm(const std::vector<uint8_t>& bytes);   // P6 -> [3,H,W] floats = byte/255
LabelMap decode_pgm(const std::vector<uint8_t>& bytes);  // P5 -> class-id grid
std::vector<uint8_t> encode_ppm(const TensorF& image);
std::vector<uint8_t> encode_pgm(const LabelMap& mask);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& bytes);

// Text manifest: one "image<TAB>mask" pair per line, '#' comments. Paths are
// resolved relative to the manifest's directory.
struct Manifest {
  std::vector<std::pair<std::string, std::string>> entries;
  int64_t num_classes = 0;  // informational; the file format does not carry it

  static Manifest load(const std::string& path);
};

std::vector<SegmentationSample> load_samples(const Manifest& manifest);

struct AugmentPolicy {
  double hflip_prob = 0.5;
  double scale_min = 0.5;
  double scale_max = 2.0;
  int64_t crop_h = 64;
  int64_t crop_w = 64;
};

SegmentationSample hflip(const SegmentationSample& s);

// scale (bilinear image / nearest mask) -> pad bottom-right to crop size
// (image 0, mask IGNORE) -> random crop -> random horizontal flip.
SegmentationSample augment(const SegmentationSample& s, Rng& rng, const AugmentPolicy& policy);

// Deterministic color for a class id (golden-ratio hue walk).
std::array<float, 3> synth_palette(int64_t cls);

// Random rectangles/circles of distinct classes over background class 0,
// colored by synth_palette plus Gaussian pixel noise, clamped to [0,1].
std::vector<SegmentationSample> synth_generate(uint64_t seed, int64_t n, int64_t h, int64_t w,
                                               int64_t num_classes, double noise_sigma = 0.05);

}  // namespace p2at
