#include "contex/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "binary_io.hpp"
#include "contex/errors.hpp"

namespace contex {

namespace {

using Rgb = std::array<double, 3>;

Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double scaled = h * 6.0;
  const int sector = static_cast<int>(scaled) % 6;
  const double f = scaled - std::floor(scaled);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

Rgb background_color(int bias, int bias_count) {
  return hsv_to_rgb(static_cast<double>(bias) / bias_count, 0.85, 0.85);
}

constexpr Rgb kForeground = {1.0, 1.0, 1.0};
constexpr int kSupersample = 4;

struct Polygon {
  std::vector<std::array<double, 2>> vertices;

  // Even-odd rule; templates are star-shaped but not convex.
  bool contains(double x, double y) const {
    bool inside = false;
    const std::size_t n = vertices.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const auto& a = vertices[i];
      const auto& b = vertices[j];
      if ((a[1] > y) != (b[1] > y) &&
          x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0]) {
        inside = !inside;
      }
    }
    return inside;
  }
};

// Polar template per class: k+3 vertices with class-fixed radii and angle jitter.
// Seeded by the class index only, so every dataset shares the same glyphs.
struct GlyphTemplate {
  std::vector<double> angles;
  std::vector<double> radii;
};

GlyphTemplate glyph_template(int label) {
  std::mt19937_64 rng(derive_seed(0x676c797068ULL, 0, static_cast<std::uint64_t>(label), 0));
  std::uniform_real_distribution<double> radius(0.3, 1.0);
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  const int sides = label + 3;
  GlyphTemplate t;
  for (int v = 0; v < sides; ++v) {
    t.angles.push_back(2.0 * std::numbers::pi * (v + jitter(rng)) / sides);
    t.radii.push_back(radius(rng));
  }
  t.radii[0] = 1.0;
  return t;
}

Polygon class_glyph(const GlyphTemplate& tmpl, int height, int width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> offset(-1.5, 1.5);
  std::uniform_real_distribution<double> radius_frac(0.34, 0.46);
  std::uniform_real_distribution<double> tilt(-0.35, 0.35);
  const double cx = 0.5 * width + offset(rng);
  const double cy = 0.5 * height + offset(rng);
  const double radius = radius_frac(rng) * std::min(height, width);
  const double phase = tilt(rng);
  Polygon poly;
  for (std::size_t v = 0; v < tmpl.angles.size(); ++v) {
    const double theta = phase + tmpl.angles[v];
    const double r = radius * tmpl.radii[v];
    poly.vertices.push_back({cx + r * std::cos(theta), cy + r * std::sin(theta)});
  }
  return poly;
}

std::vector<std::uint8_t> render(const Polygon& glyph, const Rgb& background, int channels,
                                 int height, int width) {
  std::vector<std::uint8_t> image(static_cast<std::size_t>(channels) * height * width);
  const double step = 1.0 / kSupersample;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      int covered = 0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          if (glyph.contains(x + (sx + 0.5) * step, y + (sy + 0.5) * step)) ++covered;
        }
      }
      const double alpha = static_cast<double>(covered) / (kSupersample * kSupersample);
      for (int c = 0; c < channels; ++c) {
        const double bg = channels == 3 ? background[c]
                                        : 0.299 * background[0] + 0.587 * background[1] +
                                              0.114 * background[2];
        const double fg = kForeground[std::min(c, 2)];
        const double value = (1.0 - alpha) * bg + alpha * fg;
        image[(static_cast<std::size_t>(c) * height + y) * width + x] =
            static_cast<std::uint8_t>(std::lround(std::clamp(value, 0.0, 1.0) * 255.0));
      }
    }
  }
  return image;
}

}  // namespace

void BiasedDatasetSpec::validate() const {
  if (class_count <= 0 || bias_count <= 0 || per_class <= 0) {
    throw ParameterError("class, bias and per-class counts must be positive");
  }
  if (channels != 1 && channels != 3) throw ParameterError("channels must be 1 or 3");
  if (height <= 0 || width <= 0) throw ParameterError("image geometry must be positive");
  if (class_count > 65535 || bias_count > 65535) {
    throw ParameterError("class and bias ids must fit in 16 bits");
  }
  const double lo = 1.0 / bias_count;
  if (!(rho >= lo - 1e-12 && rho <= 1.0)) {
    throw ParameterError("rho " + std::to_string(rho) + " outside [" + std::to_string(lo) +
                         ", 1]");
  }
}

int aligned_count(double rho, int per_class) {
  const double raw = std::ceil(rho * per_class - 1e-9);
  return std::clamp(static_cast<int>(raw), 0, per_class);
}

Dataset generate(const BiasedDatasetSpec& spec) {
  spec.validate();
  Dataset data;
  data.channels = spec.channels;
  data.height = spec.height;
  data.width = spec.width;
  data.class_count = spec.class_count;
  data.bias_count = spec.bias_count;
  data.samples.reserve(static_cast<std::size_t>(spec.class_count) * spec.per_class);

  std::mt19937_64 rng(spec.seed);
  const int aligned = aligned_count(spec.rho, spec.per_class);
  for (int k = 0; k < spec.class_count; ++k) {
    const GlyphTemplate tmpl = glyph_template(k);
    const int home = designated_bias(k, spec.bias_count);
    for (int j = 0; j < spec.per_class; ++j) {
      int bias = home;
      if (j >= aligned && spec.bias_count > 1) {
        std::uniform_int_distribution<int> other(0, spec.bias_count - 2);
        bias = other(rng);
        if (bias >= home) ++bias;
      }
      const Polygon glyph = class_glyph(tmpl, spec.height, spec.width, rng);
      Sample s;
      s.label = k;
      s.bias = bias;
      s.image = render(glyph, background_color(bias, spec.bias_count), spec.channels, spec.height,
                       spec.width);
      data.samples.push_back(std::move(s));
    }
  }
  return data;
}

std::vector<std::uint8_t> serialize_dataset(const Dataset& data) {
  detail::ByteWriter w;
  w.magic("CTXD");
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(data.samples.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(data.channels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(data.height));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(data.width));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(data.class_count));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(data.bias_count));
  for (const auto& s : data.samples) {
    if (static_cast<int>(s.image.size()) != data.image_size()) {
      throw ValidationError("sample image size does not match dataset geometry");
    }
    w.put<std::uint16_t>(static_cast<std::uint16_t>(s.label));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(s.bias));
    w.raw(s.image);
  }
  return std::move(w.bytes());
}

Dataset deserialize_dataset(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "dataset");
  r.expect_magic("CTXD");
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion) {
    throw ValidationError("unsupported dataset version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  Dataset data;
  data.channels = static_cast<int>(r.get<std::uint32_t>());
  data.height = static_cast<int>(r.get<std::uint32_t>());
  data.width = static_cast<int>(r.get<std::uint32_t>());
  data.class_count = static_cast<int>(r.get<std::uint32_t>());
  data.bias_count = static_cast<int>(r.get<std::uint32_t>());
  if (data.channels <= 0 || data.height <= 0 || data.width <= 0) {
    throw ValidationError("dataset header has empty geometry");
  }
  data.samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Sample s;
    s.label = r.get<std::uint16_t>();
    s.bias = r.get<std::uint16_t>();
    if (s.label >= data.class_count || s.bias >= data.bias_count) {
      throw ValidationError("sample " + std::to_string(i) + " has label or bias out of range");
    }
    auto pixels = r.take(static_cast<std::size_t>(data.image_size()));
    s.image.assign(pixels.begin(), pixels.end());
    data.samples.push_back(std::move(s));
  }
  if (!r.at_end()) throw ValidationError("dataset has trailing bytes");
  return data;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  detail::write_file(path, serialize_dataset(data));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return deserialize_dataset(detail::read_file(path));
}

ChannelStats channel_stats(const Dataset& data) {
  ChannelStats stats;
  stats.mean.assign(data.channels, 0.0);
  stats.stddev.assign(data.channels, 0.0);
  const std::size_t plane = static_cast<std::size_t>(data.height) * data.width;
  const double count = static_cast<double>(plane * data.samples.size());
  if (count == 0.0) {
    stats.stddev.assign(data.channels, 1.0);
    return stats;
  }
  std::vector<double> sum_sq(data.channels, 0.0);
  for (const auto& s : data.samples) {
    for (int c = 0; c < data.channels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        const double v = s.image[c * plane + p] / 255.0;
        stats.mean[c] += v;
        sum_sq[c] += v * v;
      }
    }
  }
  for (int c = 0; c < data.channels; ++c) {
    stats.mean[c] /= count;
    const double var = std::max(sum_sq[c] / count - stats.mean[c] * stats.mean[c], 0.0);
    stats.stddev[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return stats;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t sample,
                          std::uint64_t view) {
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  std::uint64_t h = mix(seed);
  h = mix(h ^ epoch);
  h = mix(h ^ sample);
  return mix(h ^ view);
}

std::vector<int> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(epoch), ~0ULL, ~0ULL));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

AugmentedBatch make_batch(const Dataset& data, std::span<const int> sources, std::uint64_t seed,
                          int epoch, const AugmentPolicy& policy) {
  const ImageGeometry geom{data.channels, data.height, data.width};
  const int originals = static_cast<int>(sources.size());
  AugmentedBatch batch;
  batch.images.resize(2 * originals, data.image_size());
  for (int k = 0; k < originals; ++k) {
    const int src = sources[k];
    if (src < 0 || static_cast<std::size_t>(src) >= data.size()) {
      throw ValidationError("batch source index " + std::to_string(src) + " outside the dataset");
    }
    const Sample& s = data.samples[src];
    for (int view = 0; view < 2; ++view) {
      std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(epoch),
                                      static_cast<std::uint64_t>(src),
                                      static_cast<std::uint64_t>(view)));
      const std::vector<double> pixels = augment(s.image, geom, policy, rng);
      const int row = 2 * k + view;
      batch.images.row(row) = Eigen::Map<const Eigen::RowVectorXd>(pixels.data(),
                                                                   static_cast<Eigen::Index>(pixels.size()));
      batch.labels.push_back(s.label);
      batch.biases.push_back(s.bias);
      batch.pairs.push_back(view == 0 ? row + 1 : row - 1);
      batch.sources.push_back(src);
    }
  }
  return batch;
}

std::vector<AugmentedBatch> make_batches(const Dataset& data, int originals, std::uint64_t seed,
                                         int epoch, const AugmentPolicy& policy) {
  if (originals <= 0 || static_cast<std::size_t>(originals) > data.size()) {
    throw ParameterError("batch of " + std::to_string(originals) + " originals from a dataset of " +
                         std::to_string(data.size()));
  }
  const std::vector<int> order = epoch_order(data.size(), seed, epoch);
  std::vector<AugmentedBatch> out;
  for (std::size_t start = 0; start < order.size(); start += originals) {
    const std::size_t len = std::min<std::size_t>(originals, order.size() - start);
    out.push_back(make_batch(data, std::span<const int>(order).subspan(start, len), seed, epoch,
                             policy));
  }
  return out;
}

}  // namespace contex
