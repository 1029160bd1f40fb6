#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "contex/contrast_core.hpp"

namespace contex {

/// Parameters of a procedurally generated colored-background shape dataset.
///
/// Class k draws a filled polygon with k + 3 vertices in a fixed foreground
/// color. The background color is the bias attribute: a fraction rho of each
/// class (rounded up) uses the class's designated color k mod bias_count, the
/// rest are spread uniformly over the other colors.
struct BiasedDatasetSpec {
  int class_count = 10;
  int bias_count = 10;
  double rho = 0.99;
  int per_class = 500;
  int channels = 3;
  int height = 16;
  int width = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Sample {
  std::vector<std::uint8_t> image;  // channels x height x width
  int label = 0;
  int bias = 0;
};

struct Dataset {
  int channels = 3;
  int height = 16;
  int width = 16;
  int class_count = 0;
  int bias_count = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  int image_size() const { return channels * height * width; }
};

inline int designated_bias(int label, int bias_count) { return label % bias_count; }

// Samples of class k carrying the designated bias: ceil(rho * per_class).
int aligned_count(double rho, int per_class);

Dataset generate(const BiasedDatasetSpec& spec);

// "CTXD", u32 version = 1, u32 sample_count, channels, height, width,
// class_count, bias_count, then per sample u16 label, u16 bias and the pixels
// as u8 (channel planes, each row-major). Little-endian throughout.
inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> serialize_dataset(const Dataset& data);
Dataset deserialize_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

/// Two-view augmentation settings. Probabilities of zero and a crop scale
/// range of [1, 1] with ratio [1, 1] give the identity transform.
struct AugmentPolicy {
  double crop_scale_min = 0.2;
  double crop_scale_max = 1.0;
  double crop_ratio_min = 3.0 / 4.0;
  double crop_ratio_max = 4.0 / 3.0;
  double flip_p = 0.5;
  double jitter_p = 0.8;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;
  double grayscale_p = 0.2;
  // Per-channel normalization; empty means mean 0 and std 1.
  std::vector<double> mean;
  std::vector<double> stddev;

  static AugmentPolicy identity();
};

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

// Statistics of pixel values scaled to [0, 1].
ChannelStats channel_stats(const Dataset& data);

struct ImageGeometry {
  int channels;
  int height;
  int width;
};

// Crop, flip, color jitter and grayscale. Output is in [0, 1], channel-major.
std::vector<double> augment_raw(std::span<const std::uint8_t> image, const ImageGeometry& geom,
                                const AugmentPolicy& policy, std::mt19937_64& rng);

// augment_raw followed by per-channel normalization.
std::vector<double> augment(std::span<const std::uint8_t> image, const ImageGeometry& geom,
                            const AugmentPolicy& policy, std::mt19937_64& rng);

// Normalization only, one row per sample.
Matrix normalized_images(const Dataset& data, const AugmentPolicy& policy);

/// 2N augmented views. Rows 2k and 2k + 1 are the two views of source k.
struct AugmentedBatch {
  Matrix images;
  std::vector<int> labels;
  std::vector<int> biases;
  std::vector<int> pairs;
  std::vector<int> sources;

  int size() const { return static_cast<int>(labels.size()); }
};

// SplitMix64 mix of (seed, epoch, sample, view).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t sample,
                          std::uint64_t view);

// Permutation of [0, n) for the given epoch.
std::vector<int> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

AugmentedBatch make_batch(const Dataset& data, std::span<const int> sources, std::uint64_t seed,
                          int epoch, const AugmentPolicy& policy);

// One epoch of batches of `originals` source images each; the last batch holds
// the remainder. Throws ParameterError when originals exceeds the dataset size.
std::vector<AugmentedBatch> make_batches(const Dataset& data, int originals, std::uint64_t seed,
                                         int epoch, const AugmentPolicy& policy);

}  // namespace contex
