#include <algorithm>
#include <cmath>
#include <string>

#include "contex/dataset.hpp"
#include "contex/errors.hpp"

namespace contex {

namespace {

struct Image {
  int channels;
  int height;
  int width;
  std::vector<double> v;

  double& at(int c, int y, int x) { return v[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const {
    return v[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

struct CropBox {
  int top;
  int left;
  int height;
  int width;
};

CropBox sample_crop(const AugmentPolicy& p, int height, int width, std::mt19937_64& rng) {
  const double area = static_cast<double>(height) * width;
  std::uniform_real_distribution<double> scale(p.crop_scale_min, p.crop_scale_max);
  std::uniform_real_distribution<double> log_ratio(std::log(p.crop_ratio_min),
                                                   std::log(p.crop_ratio_max));
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = scale(rng) * area;
    const double ratio = std::exp(log_ratio(rng));
    const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (w > 0 && w <= width && h > 0 && h <= height) {
      std::uniform_int_distribution<int> top(0, height - h);
      std::uniform_int_distribution<int> left(0, width - w);
      const int t = top(rng);
      return {t, left(rng), h, w};
    }
  }
  return {0, 0, height, width};
}

// Bilinear resample of the crop box back to the full image size.
Image resized_crop(const Image& in, const CropBox& box) {
  Image out{in.channels, in.height, in.width, std::vector<double>(in.v.size())};
  const double sy = static_cast<double>(box.height) / in.height;
  const double sx = static_cast<double>(box.width) / in.width;
  for (int y = 0; y < in.height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(box.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, box.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < in.width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(box.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, box.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < in.channels; ++c) {
        const double a = in.at(c, box.top + y0, box.left + x0);
        const double b = in.at(c, box.top + y0, box.left + x1);
        const double d = in.at(c, box.top + y1, box.left + x0);
        const double e = in.at(c, box.top + y1, box.left + x1);
        out.at(c, y, x) = (1.0 - wy) * ((1.0 - wx) * a + wx * b) + wy * ((1.0 - wx) * d + wx * e);
      }
    }
  }
  return out;
}

void hflip(Image& img) {
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width / 2; ++x) std::swap(img.at(c, y, x), img.at(c, y, img.width - 1 - x));
    }
  }
}

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

void clamp_unit(Image& img) {
  for (double& v : img.v) v = std::clamp(v, 0.0, 1.0);
}

void adjust_brightness(Image& img, double f) {
  for (double& v : img.v) v *= f;
  clamp_unit(img);
}

void adjust_contrast(Image& img, double f) {
  const int plane = img.height * img.width;
  double mean = 0.0;
  if (img.channels == 3) {
    for (int p = 0; p < plane; ++p) mean += luma(img.v[p], img.v[plane + p], img.v[2 * plane + p]);
  } else {
    for (int p = 0; p < plane; ++p) mean += img.v[p];
  }
  mean /= plane;
  for (double& v : img.v) v = (v - mean) * f + mean;
  clamp_unit(img);
}

void adjust_saturation(Image& img, double f) {
  const int plane = img.height * img.width;
  for (int p = 0; p < plane; ++p) {
    const double gray = luma(img.v[p], img.v[plane + p], img.v[2 * plane + p]);
    for (int c = 0; c < 3; ++c) {
      double& v = img.v[c * plane + p];
      v = gray + f * (v - gray);
    }
  }
  clamp_unit(img);
}

void adjust_hue(Image& img, double shift) {
  const int plane = img.height * img.width;
  for (int p = 0; p < plane; ++p) {
    double& r = img.v[p];
    double& g = img.v[plane + p];
    double& b = img.v[2 * plane + p];
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double delta = mx - mn;
    if (delta <= 0.0) continue;
    double h;
    if (mx == r) {
      h = (g - b) / delta;
    } else if (mx == g) {
      h = 2.0 + (b - r) / delta;
    } else {
      h = 4.0 + (r - g) / delta;
    }
    h = h / 6.0 + shift;
    h -= std::floor(h);
    const double s = delta / mx;
    const double v = mx;
    const double scaled = h * 6.0;
    const int sector = static_cast<int>(scaled) % 6;
    const double f = scaled - std::floor(scaled);
    const double pp = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
      case 0: r = v; g = t; b = pp; break;
      case 1: r = q; g = v; b = pp; break;
      case 2: r = pp; g = v; b = t; break;
      case 3: r = pp; g = q; b = v; break;
      case 4: r = t; g = pp; b = v; break;
      default: r = v; g = pp; b = q; break;
    }
  }
}

void to_grayscale(Image& img) {
  const int plane = img.height * img.width;
  for (int p = 0; p < plane; ++p) {
    const double gray = luma(img.v[p], img.v[plane + p], img.v[2 * plane + p]);
    img.v[p] = img.v[plane + p] = img.v[2 * plane + p] = gray;
  }
}

bool coin(double p, std::mt19937_64& rng) {
  if (p <= 0.0) return false;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng) < p;
}

double factor(double magnitude, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(std::max(0.0, 1.0 - magnitude), 1.0 + magnitude);
  return u(rng);
}

}  // namespace

AugmentPolicy AugmentPolicy::identity() {
  AugmentPolicy p;
  p.crop_scale_min = p.crop_scale_max = 1.0;
  p.crop_ratio_min = p.crop_ratio_max = 1.0;
  p.flip_p = 0.0;
  p.jitter_p = 0.0;
  p.grayscale_p = 0.0;
  return p;
}

std::vector<double> augment_raw(std::span<const std::uint8_t> image, const ImageGeometry& geom,
                                const AugmentPolicy& policy, std::mt19937_64& rng) {
  const std::size_t expected = static_cast<std::size_t>(geom.channels) * geom.height * geom.width;
  if (image.size() != expected) {
    throw ValidationError("image has " + std::to_string(image.size()) + " bytes, geometry needs " +
                          std::to_string(expected));
  }
  Image img{geom.channels, geom.height, geom.width, std::vector<double>(expected)};
  for (std::size_t i = 0; i < expected; ++i) img.v[i] = image[i] / 255.0;

  img = resized_crop(img, sample_crop(policy, geom.height, geom.width, rng));
  if (coin(policy.flip_p, rng)) hflip(img);

  const bool color = geom.channels == 3;
  if (coin(policy.jitter_p, rng)) {
    const double fb = factor(policy.brightness, rng);
    const double fc = factor(policy.contrast, rng);
    const double fs = factor(policy.saturation, rng);
    std::uniform_real_distribution<double> hue(-policy.hue, policy.hue);
    const double fh = policy.hue > 0.0 ? hue(rng) : 0.0;
    adjust_brightness(img, fb);
    adjust_contrast(img, fc);
    if (color) {
      adjust_saturation(img, fs);
      adjust_hue(img, fh);
    }
  }
  if (color && coin(policy.grayscale_p, rng)) to_grayscale(img);
  clamp_unit(img);
  return std::move(img.v);
}

std::vector<double> augment(std::span<const std::uint8_t> image, const ImageGeometry& geom,
                            const AugmentPolicy& policy, std::mt19937_64& rng) {
  std::vector<double> v = augment_raw(image, geom, policy, rng);
  const std::size_t plane = static_cast<std::size_t>(geom.height) * geom.width;
  for (int c = 0; c < geom.channels; ++c) {
    const double mean = c < static_cast<int>(policy.mean.size()) ? policy.mean[c] : 0.0;
    const double sd = c < static_cast<int>(policy.stddev.size()) ? policy.stddev[c] : 1.0;
    for (std::size_t p = 0; p < plane; ++p) v[c * plane + p] = (v[c * plane + p] - mean) / sd;
  }
  return v;
}

Matrix normalized_images(const Dataset& data, const AugmentPolicy& policy) {
  Matrix out(static_cast<Eigen::Index>(data.size()), data.image_size());
  const std::size_t plane = static_cast<std::size_t>(data.height) * data.width;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& img = data.samples[i].image;
    for (int c = 0; c < data.channels; ++c) {
      const double mean = c < static_cast<int>(policy.mean.size()) ? policy.mean[c] : 0.0;
      const double sd = c < static_cast<int>(policy.stddev.size()) ? policy.stddev[c] : 1.0;
      for (std::size_t p = 0; p < plane; ++p) {
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c * plane + p)) =
            (img[c * plane + p] / 255.0 - mean) / sd;
      }
    }
  }
  return out;
}

}  // namespace contex
