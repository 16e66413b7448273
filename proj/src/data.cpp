#include "p2at/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "p2at/kernels.hpp"

namespace p2at {

namespace {

struct PnmReader {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;

  explicit PnmReader(const std::vector<uint8_t>& b) : bytes(b) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(msg + " at byte " + std::to_string(pos));
  }

  void skip_space() {
    while (pos < bytes.size()) {
      const uint8_t c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        break;
      }
    }
  }

  int64_t read_int() {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) fail("expected integer");
    int64_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000'000) fail("integer out of range");
      ++pos;
    }
    return v;
  }

  // magic, width, height, maxval; leaves pos at the first payload byte
  std::pair<int64_t, int64_t> header(const char* magic) {
    if (bytes.size() < 2 || bytes[0] != static_cast<uint8_t>(magic[0]) ||
        bytes[1] != static_cast<uint8_t>(magic[1]))
      throw DataError(std::string("bad magic, expected '") + magic + "' at byte 0");
    pos = 2;
    const int64_t w = read_int();
    const int64_t h = read_int();
    const int64_t maxval = read_int();
    if (w < 1 || h < 1) fail("non-positive dimensions");
    if (maxval != 255) fail("unsupported maxval " + std::to_string(maxval) + ", expected 255");
    if (pos >= bytes.size()) fail("missing whitespace before payload");
    const uint8_t c = bytes[pos];
    if (c != ' ' && c != '\t' && c != '\r' && c != '\n') fail("expected whitespace before payload");
    ++pos;
    return {h, w};
  }

  void need_payload(size_t n) const {
    if (bytes.size() - pos < n)
      throw DataError("truncated payload: expected " + std::to_string(n) + " bytes at byte " +
                      std::to_string(pos) + ", have " + std::to_string(bytes.size() - pos));
  }
};

}  // namespace

TensorF decode_ppm(const std::vector<uint8_t>& bytes) {
  PnmReader r(bytes);
  const auto [h, w] = r.header("P6");
  r.need_payload(static_cast<size_t>(3 * h * w));
  TensorF img(Shape{3, h, w});
  const uint8_t* p = bytes.data() + r.pos;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c)
        img.at((c * h + y) * w + x) = static_cast<float>(p[(y * w + x) * 3 + c]) / 255.0f;
  return img;
}

LabelMap decode_pgm(const std::vector<uint8_t>& bytes) {
  PnmReader r(bytes);
  const auto [h, w] = r.header("P5");
  r.need_payload(static_cast<size_t>(h * w));
  LabelMap m(h, w);
  std::copy(bytes.begin() + static_cast<long>(r.pos),
            bytes.begin() + static_cast<long>(r.pos) + h * w, m.ids.begin());
  return m;
}

std::vector<uint8_t> encode_ppm(const TensorF& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw ShapeError("encode_ppm expects [3,H,W], got " + shape_str(image.shape));
  const int64_t h = image.dim(1), w = image.dim(2);
  std::string head = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<uint8_t> out(head.begin(), head.end());
  out.reserve(out.size() + static_cast<size_t>(3 * h * w));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at((c * h + y) * w + x), 0.0f, 1.0f);
        out.push_back(static_cast<uint8_t>(std::lround(v * 255.0f)));
      }
  return out;
}

std::vector<uint8_t> encode_pgm(const LabelMap& mask) {
  std::string head = "P5\n" + std::to_string(mask.w) + " " + std::to_string(mask.h) + "\n255\n";
  std::vector<uint8_t> out(head.begin(), head.end());
  out.insert(out.end(), mask.ids.begin(), mask.ids.end());
  return out;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
  if (!f) throw DataError("write failed: " + path);
}

Manifest Manifest::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest: " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  Manifest m;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw DataError("manifest " + path + " line " + std::to_string(lineno) +
                      ": expected exactly one tab separating image and mask paths");
    auto resolve = [&](std::string p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    m.entries.emplace_back(resolve(line.substr(0, tab)), resolve(line.substr(tab + 1)));
  }
  return m;
}

std::vector<SegmentationSample> load_samples(const Manifest& manifest) {
  std::vector<SegmentationSample> out;
  out.reserve(manifest.entries.size());
  for (const auto& [img_path, mask_path] : manifest.entries) {
    SegmentationSample s;
    s.image = decode_ppm(read_file(img_path));
    s.mask = decode_pgm(read_file(mask_path));
    if (s.image.dim(1) != s.mask.h || s.image.dim(2) != s.mask.w)
      throw DataError("image " + img_path + " is " + std::to_string(s.image.dim(1)) + "x" +
                      std::to_string(s.image.dim(2)) + " but mask " + mask_path + " is " +
                      std::to_string(s.mask.h) + "x" + std::to_string(s.mask.w));
    out.push_back(std::move(s));
  }
  return out;
}

SegmentationSample hflip(const SegmentationSample& s) {
  const int64_t h = s.mask.h, w = s.mask.w;
  SegmentationSample out;
  out.image = TensorF(s.image.shape);
  out.mask = LabelMap(h, w);
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        out.image.at((c * h + y) * w + x) = s.image.at((c * h + y) * w + (w - 1 - x));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) out.mask.at(y, x) = s.mask.at(y, w - 1 - x);
  return out;
}

namespace {

SegmentationSample scale_sample(const SegmentationSample& s, int64_t nh, int64_t nw) {
  const int64_t h = s.mask.h, w = s.mask.w;
  SegmentationSample out;
  out.image = TensorF(Shape{3, nh, nw});
  kernels::bilinear_fwd(s.image.ptr(), 1, 3, h, w, out.image.ptr(), nh, nw);
  out.mask = LabelMap(nh, nw);
  for (int64_t y = 0; y < nh; ++y) {
    const int64_t sy = std::clamp<int64_t>(
        static_cast<int64_t>(std::floor((static_cast<double>(y) + 0.5) * static_cast<double>(h) /
                                        static_cast<double>(nh))),
        0, h - 1);
    for (int64_t x = 0; x < nw; ++x) {
      const int64_t sx = std::clamp<int64_t>(
          static_cast<int64_t>(std::floor((static_cast<double>(x) + 0.5) *
                                          static_cast<double>(w) / static_cast<double>(nw))),
          0, w - 1);
      out.mask.at(y, x) = s.mask.at(sy, sx);
    }
  }
  return out;
}

SegmentationSample pad_to(const SegmentationSample& s, int64_t th, int64_t tw) {
  const int64_t h = s.mask.h, w = s.mask.w;
  if (h >= th && w >= tw) return s;
  const int64_t nh = std::max(h, th), nw = std::max(w, tw);
  SegmentationSample out;
  out.image = TensorF(Shape{3, nh, nw});
  out.mask = LabelMap(nh, nw, kIgnore);
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        out.image.at((c * nh + y) * nw + x) = s.image.at((c * h + y) * w + x);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) out.mask.at(y, x) = s.mask.at(y, x);
  return out;
}

SegmentationSample crop(const SegmentationSample& s, int64_t y0, int64_t x0, int64_t ch,
                        int64_t cw) {
  const int64_t h = s.mask.h, w = s.mask.w;
  SegmentationSample out;
  out.image = TensorF(Shape{3, ch, cw});
  out.mask = LabelMap(ch, cw);
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < ch; ++y)
      for (int64_t x = 0; x < cw; ++x)
        out.image.at((c * ch + y) * cw + x) = s.image.at((c * h + y0 + y) * w + (x0 + x));
  for (int64_t y = 0; y < ch; ++y)
    for (int64_t x = 0; x < cw; ++x) out.mask.at(y, x) = s.mask.at(y0 + y, x0 + x);
  return out;
}

}  // namespace

SegmentationSample augment(const SegmentationSample& s, Rng& rng, const AugmentPolicy& policy) {
  if (policy.scale_min > policy.scale_max || policy.scale_min <= 0)
    throw ConfigError("augment scale range [" + std::to_string(policy.scale_min) + ", " +
                      std::to_string(policy.scale_max) + "] is invalid");
  if (policy.crop_h < 1 || policy.crop_w < 1) throw ConfigError("augment crop size must be positive");
  const double u = rng.uniform(policy.scale_min, policy.scale_max);
  const int64_t nh = std::max<int64_t>(1, std::llround(static_cast<double>(s.mask.h) * u));
  const int64_t nw = std::max<int64_t>(1, std::llround(static_cast<double>(s.mask.w) * u));
  SegmentationSample t =
      (nh == s.mask.h && nw == s.mask.w) ? s : scale_sample(s, nh, nw);
  t = pad_to(t, policy.crop_h, policy.crop_w);
  const int64_t y0 = rng.below(t.mask.h - policy.crop_h + 1);
  const int64_t x0 = rng.below(t.mask.w - policy.crop_w + 1);
  t = crop(t, y0, x0, policy.crop_h, policy.crop_w);
  if (rng.uniform() < policy.hflip_prob) t = hflip(t);
  return t;
}

std::array<float, 3> synth_palette(int64_t cls) {
  const double hue = std::fmod(static_cast<double>(cls) * 0.618034, 1.0);
  const double s = 0.65, v = 0.9;
  const double hh = hue * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  double r, g, b;
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

std::vector<SegmentationSample> synth_generate(uint64_t seed, int64_t n, int64_t h, int64_t w,
                                               int64_t num_classes, double noise_sigma) {
  if (num_classes < 2) throw ConfigError("synthetic corpus needs at least 2 classes");
  if (h < 32 || w < 32) throw ConfigError("synthetic images must be at least 32x32");
  if (noise_sigma < 0) throw ConfigError("noise sigma must be non-negative");
  std::vector<SegmentationSample> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    Rng rng(stream_seed(seed, static_cast<uint64_t>(i)));
    SegmentationSample s;
    s.mask = LabelMap(h, w, 0);

    const int64_t max_shapes = std::min<int64_t>(5, num_classes - 1);
    const int64_t nshapes = 1 + rng.below(max_shapes);
    std::vector<int64_t> classes(static_cast<size_t>(num_classes - 1));
    for (int64_t c = 1; c < num_classes; ++c) classes[static_cast<size_t>(c - 1)] = c;
    for (size_t j = classes.size(); j > 1; --j)
      std::swap(classes[j - 1], classes[static_cast<size_t>(rng.below(static_cast<int64_t>(j)))]);

    for (int64_t sh = 0; sh < nshapes; ++sh) {
      const uint8_t cls = static_cast<uint8_t>(classes[static_cast<size_t>(sh)]);
      if (rng.below(2) == 0) {
        const int64_t rh = h / 8 + rng.below(std::max<int64_t>(1, h / 2 - h / 8 + 1));
        const int64_t rw = w / 8 + rng.below(std::max<int64_t>(1, w / 2 - w / 8 + 1));
        const int64_t y0 = rng.below(h - rh + 1);
        const int64_t x0 = rng.below(w - rw + 1);
        for (int64_t y = y0; y < y0 + rh; ++y)
          for (int64_t x = x0; x < x0 + rw; ++x) s.mask.at(y, x) = cls;
      } else {
        const int64_t r = h / 8 + rng.below(std::max<int64_t>(1, h / 3 - h / 8 + 1));
        const int64_t cy = rng.below(h);
        const int64_t cx = rng.below(w);
        for (int64_t y = std::max<int64_t>(0, cy - r); y <= std::min(h - 1, cy + r); ++y)
          for (int64_t x = std::max<int64_t>(0, cx - r); x <= std::min(w - 1, cx + r); ++x)
            if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) s.mask.at(y, x) = cls;
      }
    }

    s.image = TensorF(Shape{3, h, w});
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        const auto color = synth_palette(s.mask.at(y, x));
        for (int64_t c = 0; c < 3; ++c) {
          const double v = static_cast<double>(color[static_cast<size_t>(c)]) +
                           noise_sigma * rng.gauss();
          s.image.at((c * h + y) * w + x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace p2at
