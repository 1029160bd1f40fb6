#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "contex/contrast_core.hpp"

namespace contex {

struct AugmentedBatch;

/// Encoder: conv(k, stride) -> ReLU -> conv(k, stride) -> ReLU -> dense -> h.
/// Projection head: dense -> ReLU -> dense -> L2 normalize -> z.
struct ArchSpec {
  int in_channels = 3;
  int height = 16;
  int width = 16;
  int conv1_channels = 16;
  int conv2_channels = 32;
  int kernel = 3;
  int stride = 2;
  int padding = 1;
  int rep_dim = 128;
  int proj_hidden = 128;
  int proj_dim = 128;

  int conv1_height() const { return (height + 2 * padding - kernel) / stride + 1; }
  int conv1_width() const { return (width + 2 * padding - kernel) / stride + 1; }
  int conv2_height() const { return (conv1_height() + 2 * padding - kernel) / stride + 1; }
  int conv2_width() const { return (conv1_width() + 2 * padding - kernel) / stride + 1; }
  int input_size() const { return in_channels * height * width; }
  int flat_size() const { return conv2_channels * conv2_height() * conv2_width(); }

  // Field values in declaration order, as stored in checkpoints.
  std::vector<std::uint32_t> fields() const;
  static ArchSpec from_fields(std::span<const std::uint32_t> fields);
  void validate() const;

  bool operator==(const ArchSpec&) const = default;
};

enum ParamTensor : int {
  kConv1Weight,
  kConv1Bias,
  kConv2Weight,
  kConv2Bias,
  kEncoderWeight,
  kEncoderBias,
  kProj1Weight,
  kProj1Bias,
  kProj2Weight,
  kProj2Bias,
  kParamTensorCount
};

std::string_view tensor_name(int index);

// Row/column shape of every parameter tensor in declaration order. Biases are n x 1.
std::vector<std::array<int, 2>> tensor_shapes(const ArchSpec& arch);

using Gradients = std::vector<Matrix>;

class ModelParams {
 public:
  static ModelParams zeros(const ArchSpec& arch);
  // Uniform fan-in scaling, bound sqrt(6 / fan_in); biases start at zero.
  static ModelParams kaiming_uniform(const ArchSpec& arch, std::uint64_t seed);

  const ArchSpec& arch() const { return arch_; }
  const std::vector<Matrix>& tensors() const { return tensors_; }
  const Matrix& tensor(int index) const { return tensors_.at(index); }

  // Mutable access invalidates forward caches taken before the call.
  Matrix& mutable_tensor(int index);
  std::vector<Matrix>& mutable_tensors();

  std::size_t parameter_count() const;
  std::uint64_t version() const { return version_; }

 private:
  explicit ModelParams(const ArchSpec& arch);
  void touch();

  ArchSpec arch_;
  std::vector<Matrix> tensors_;
  std::uint64_t version_ = 0;
};

/// Intermediates retained by forward() for backward(). Activation rows are
/// (image, y, x) in row-major order and columns are channels.
struct ForwardCache {
  std::uint64_t params_version = 0;
  int batch = 0;
  Matrix cols1;
  Matrix act1;
  Matrix cols2;
  Matrix act2;
  Matrix h;
  Matrix hidden;
  Matrix z_raw;
  Vector norms;
  Matrix z;
};

inline constexpr double kZeroNormGuard = 1e-12;

struct ForwardOutput {
  Matrix h;
  Matrix z;
  ForwardCache cache;
};

// images: one row per image, channel-major C x H x W values.
ForwardOutput forward(const ModelParams& params, const Matrix& images);

struct BatchForward {
  Matrix h;
  EmbeddingBatch z;
  ForwardCache cache;
};

BatchForward forward(const ModelParams& params, const AugmentedBatch& batch);

// Encoder only; returns the representation h without touching the projection head.
Matrix encode(const ModelParams& params, const Matrix& images);

/// Exact reverse pass through normalization, projection head, dense map and
/// both convolutions. Throws UsageError if params changed since the forward.
/// extra_dh, when given, is added to the gradient arriving at h (for heads on h).
Gradients backward(const ModelParams& params, const ForwardCache& cache, const Matrix& dz,
                   const Matrix* extra_dh = nullptr);

struct OptimizerState {
  std::vector<Matrix> velocity;
  double momentum = 0.9;
  double base_lr = 0.0;
  int total_epochs = 1;

  // base_lr * 0.5 * (1 + cos(pi * epoch / total_epochs))
  double lr(int epoch) const;
};

OptimizerState make_optimizer(std::span<const Matrix> params, double base_lr, int total_epochs,
                              double momentum = 0.9);

// v <- momentum * v + g; p <- p - lr * v. Throws NumericalError naming the
// first tensor with a non-finite gradient; nothing is updated in that case.
void sgd_update(std::span<Matrix> params, std::span<const Matrix> grads, OptimizerState& state,
                int epoch, std::span<const std::string> names = {});

void sgd_step(ModelParams& params, const Gradients& grads, OptimizerState& state, int epoch);

/// Linear classifier on the frozen representation h.
struct LinearProbe {
  Matrix weight;  // classes x rep_dim
  Vector bias;    // classes

  static LinearProbe zeros(int classes, int rep_dim);
  Matrix logits(const Matrix& features) const;
};

Matrix linear_probe_forward(const ModelParams& params, const LinearProbe& probe,
                            const Matrix& images);

// Binary checkpoint: "CTXC", u32 version, u32 field count, arch fields,
// u32 tensor count, (u32 rows, u32 cols) per tensor, then every tensor as
// little-endian f64 in row-major order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const ModelParams& params);
ModelParams deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace contex
