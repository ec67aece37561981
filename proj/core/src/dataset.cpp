// SPDX-License-Identifier: Apache-2.0
#include "hkd/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <string>

#include "hkd/archive.hpp"
#include "hkd/errors.hpp"
#include "hkd/rng.hpp"

namespace hkd {

namespace {

constexpr char kSampleMagic[4] = {'H', 'K', 'D', 'S'};
constexpr std::uint32_t kSampleVersion = 1;

constexpr std::array<std::array<double, 3>, 8> kPalette{{
    {0.45, 0.45, 0.45},
    {0.85, 0.25, 0.20},
    {0.20, 0.70, 0.30},
    {0.25, 0.35, 0.85},
    {0.85, 0.80, 0.20},
    {0.70, 0.30, 0.75},
    {0.20, 0.75, 0.80},
    {0.95, 0.55, 0.15},
}};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

}  // namespace

void SynthSpec::validate() const {
  if (num_classes < 2) throw ConfigError("synthetic data needs at least two classes");
  if (num_classes > 255) throw ConfigError("labels are 8-bit; at most 255 classes");
  if (min_shapes < 1 || max_shapes < min_shapes) throw ConfigError("invalid shapes-per-image range");
  if (height < 4 || width < 4) throw ConfigError("synthetic images must be at least 4x4");
  if (noise < 0.0 || color_jitter < 0.0) throw ConfigError("noise levels must be non-negative");
}

std::array<double, 3> class_color(std::size_t cls) {
  if (cls < kPalette.size()) return kPalette[cls];
  Rng rng = Rng::substream(cls, "palette");
  return {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
}

Dataset generate_dataset(const SynthSpec& spec, std::size_t count) {
  spec.validate();
  if (count == 0) throw ConfigError("dataset size must be at least 1");
  Rng rng = Rng::substream(spec.seed, "data");
  const std::size_t h = spec.height;
  const std::size_t w = spec.width;
  const std::size_t plane = h * w;
  Dataset out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    std::vector<std::uint8_t> labels(plane, 0);
    std::vector<double> image(3 * plane);
    auto paint = [&](std::size_t i, std::uint8_t cls, const std::array<double, 3>& color) {
      labels[i] = cls;
      for (std::size_t c = 0; c < 3; ++c) image[c * plane + i] = color[c];
    };
    auto jittered = [&](std::size_t cls) {
      std::array<double, 3> color = class_color(cls);
      for (double& v : color) v += rng.uniform(-spec.color_jitter, spec.color_jitter);
      return color;
    };
    const auto background = jittered(0);
    for (std::size_t i = 0; i < plane; ++i) paint(i, 0, background);

    const std::size_t shapes = rng.integer(spec.min_shapes, spec.max_shapes);
    for (std::size_t s = 0; s < shapes; ++s) {
      const auto cls = static_cast<std::uint8_t>(rng.integer(1, spec.num_classes - 1));
      const auto color = jittered(cls);
      if (rng.uniform(0.0, 1.0) < 0.5) {
        const std::size_t rh = rng.integer(std::max<std::size_t>(2, h / 8), h / 2);
        const std::size_t rw = rng.integer(std::max<std::size_t>(2, w / 8), w / 2);
        const std::size_t top = rng.integer(0, h - rh);
        const std::size_t left = rng.integer(0, w - rw);
        for (std::size_t y = top; y < top + rh; ++y) {
          for (std::size_t x = left; x < left + rw; ++x) paint(y * w + x, cls, color);
        }
      } else {
        const double radius = rng.uniform(static_cast<double>(std::min(h, w)) / 10.0,
                                          static_cast<double>(std::min(h, w)) / 4.0);
        const double cy = rng.uniform(0.0, static_cast<double>(h));
        const double cx = rng.uniform(0.0, static_cast<double>(w));
        for (std::size_t y = 0; y < h; ++y) {
          for (std::size_t x = 0; x < w; ++x) {
            const double dy = static_cast<double>(y) + 0.5 - cy;
            const double dx = static_cast<double>(x) + 0.5 - cx;
            if (dy * dy + dx * dx <= radius * radius) paint(y * w + x, cls, color);
          }
        }
      }
    }
    if (spec.noise > 0.0) {
      for (double& v : image) v += rng.normal(0.0, spec.noise);
    }
    out.push_back({Tensor::from_data({3, h, w}, std::move(image)), LabelMap{h, w, std::move(labels)}});
  }
  return out;
}

std::vector<std::uint8_t> encode_sample(const Sample& sample) {
  const Shape& s = sample.image.shape();
  if (s.size() != 3 || s[1] != sample.labels.height || s[2] != sample.labels.width) {
    throw DimensionError("sample image " + shape_string(s) + " does not match its labels");
  }
  std::vector<std::uint8_t> out(std::begin(kSampleMagic), std::end(kSampleMagic));
  put_u32(out, kSampleVersion);
  for (std::size_t d : s) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : sample.image.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  out.insert(out.end(), sample.labels.labels.begin(), sample.labels.labels.end());
  return out;
}

Sample decode_sample(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t header = 4 + 4 * 4;
  if (bytes.size() < header || std::memcmp(bytes.data(), kSampleMagic, 4) != 0) {
    throw FormatError("not a sample record (bad magic)");
  }
  if (get_u32(bytes, 4) != kSampleVersion) throw FormatError("unsupported sample version");
  const std::size_t c = get_u32(bytes, 8);
  const std::size_t h = get_u32(bytes, 12);
  const std::size_t w = get_u32(bytes, 16);
  if (c == 0 || h == 0 || w == 0) throw FormatError("sample record has an empty dimension");
  const std::size_t n = c * h * w;
  if (bytes.size() != header + 8 * n + h * w) throw FormatError("sample record has the wrong length");
  std::vector<double> image(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(bytes[header + 8 * i + b]) << (8 * b);
    }
    image[i] = std::bit_cast<double>(bits);
  }
  const auto* lab = bytes.data() + header + 8 * n;
  return {Tensor::from_data({c, h, w}, std::move(image)),
          LabelMap{h, w, std::vector<std::uint8_t>(lab, lab + h * w)}};
}

void write_dataset(const std::filesystem::path& dir, const Dataset& samples) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%06zu.rec", i);
    write_file_bytes(dir / name, encode_sample(samples[i]));
  }
}

Dataset read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw FormatError("dataset directory " + dir.string() + " not found");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".rec") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw FormatError("dataset directory " + dir.string() + " holds no records");
  Dataset out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(decode_sample(read_file_bytes(f)));
  return out;
}

}  // namespace hkd
