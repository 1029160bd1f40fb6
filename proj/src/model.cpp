#include "contex/model.hpp"

#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "contex/dataset.hpp"
#include "contex/errors.hpp"

namespace contex {

namespace {

std::atomic<std::uint64_t> g_version_counter{1};

struct ConvGeometry {
  int channels;
  int height;
  int width;
  int out_height;
  int out_width;
  int kernel;
  int stride;
  int padding;
};

// Rows are (image, oy, ox); columns are (channel, ky, kx) to match weight rows.
template <class Get>
Matrix im2col(int batch, const ConvGeometry& g, Get get) {
  const int k2 = g.kernel * g.kernel;
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(batch) * g.out_height * g.out_width,
                             static_cast<Eigen::Index>(g.channels) * k2);
  Eigen::Index r = 0;
  for (int b = 0; b < batch; ++b) {
    for (int oy = 0; oy < g.out_height; ++oy) {
      for (int ox = 0; ox < g.out_width; ++ox, ++r) {
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix < 0 || ix >= g.width) continue;
            for (int c = 0; c < g.channels; ++c) {
              cols(r, c * k2 + ky * g.kernel + kx) = get(b, c, iy, ix);
            }
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col for an (image, y, x) x channel activation layout.
Matrix col2im(int batch, const ConvGeometry& g, const Matrix& dcols) {
  const int k2 = g.kernel * g.kernel;
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(batch) * g.height * g.width, g.channels);
  Eigen::Index r = 0;
  for (int b = 0; b < batch; ++b) {
    for (int oy = 0; oy < g.out_height; ++oy) {
      for (int ox = 0; ox < g.out_width; ++ox, ++r) {
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix < 0 || ix >= g.width) continue;
            const Eigen::Index dst = (static_cast<Eigen::Index>(b) * g.height + iy) * g.width + ix;
            for (int c = 0; c < g.channels; ++c) {
              out(dst, c) += dcols(r, c * k2 + ky * g.kernel + kx);
            }
          }
        }
      }
    }
  }
  return out;
}

ConvGeometry conv1_geometry(const ArchSpec& a) {
  return {a.in_channels, a.height, a.width, a.conv1_height(), a.conv1_width(),
          a.kernel, a.stride, a.padding};
}

ConvGeometry conv2_geometry(const ArchSpec& a) {
  return {a.conv1_channels, a.conv1_height(), a.conv1_width(), a.conv2_height(), a.conv2_width(),
          a.kernel, a.stride, a.padding};
}

// y = x W^T + b, with b stored as an n x 1 column.
Matrix dense(const Matrix& x, const Matrix& weight, const Matrix& bias) {
  Matrix y(x.rows(), weight.rows());
  y.noalias() = x * weight.transpose();
  y.rowwise() += bias.col(0).transpose();
  return y;
}

void relu_inplace(Matrix& m) { m = m.cwiseMax(0.0); }

void relu_backward_inplace(Matrix& grad, const Matrix& activation) {
  grad = (activation.array() > 0.0).select(grad, 0.0);
}

Matrix column_sums(const Matrix& m) { return m.colwise().sum().transpose(); }

Matrix weight_grad(const Matrix& dout, const Matrix& input) {
  Matrix g(dout.cols(), input.cols());
  g.noalias() = dout.transpose() * input;
  return g;
}

struct EncoderPass {
  Matrix cols1;
  Matrix act1;
  Matrix cols2;
  Matrix act2;
  Matrix h;
};

EncoderPass run_encoder(const ModelParams& params, const Matrix& images) {
  const ArchSpec& a = params.arch();
  if (images.cols() != a.input_size()) {
    throw ValidationError("image rows hold " + std::to_string(images.cols()) +
                          " values but the architecture expects " +
                          std::to_string(a.input_size()));
  }
  const int batch = static_cast<int>(images.rows());
  EncoderPass p;
  const ConvGeometry g1 = conv1_geometry(a);
  p.cols1 = im2col(batch, g1, [&](int b, int c, int y, int x) {
    return images(b, (c * a.height + y) * a.width + x);
  });
  p.act1 = dense(p.cols1, params.tensor(kConv1Weight), params.tensor(kConv1Bias));
  relu_inplace(p.act1);

  const ConvGeometry g2 = conv2_geometry(a);
  const Matrix& act1 = p.act1;
  p.cols2 = im2col(batch, g2, [&](int b, int c, int y, int x) {
    return act1((static_cast<Eigen::Index>(b) * g2.height + y) * g2.width + x, c);
  });
  p.act2 = dense(p.cols2, params.tensor(kConv2Weight), params.tensor(kConv2Bias));
  relu_inplace(p.act2);

  Eigen::Map<const Matrix> flat(p.act2.data(), batch, a.flat_size());
  p.h = dense(flat, params.tensor(kEncoderWeight), params.tensor(kEncoderBias));
  return p;
}

}  // namespace

std::vector<std::uint32_t> ArchSpec::fields() const {
  const int values[] = {in_channels, height, width, conv1_channels, conv2_channels, kernel,
                        stride, padding, rep_dim, proj_hidden, proj_dim};
  std::vector<std::uint32_t> out;
  for (int v : values) out.push_back(static_cast<std::uint32_t>(v));
  return out;
}

ArchSpec ArchSpec::from_fields(std::span<const std::uint32_t> f) {
  if (f.size() != 11) {
    throw ValidationError("architecture descriptor has " + std::to_string(f.size()) +
                          " fields, expected 11");
  }
  ArchSpec a;
  int* targets[] = {&a.in_channels, &a.height, &a.width, &a.conv1_channels, &a.conv2_channels,
                    &a.kernel, &a.stride, &a.padding, &a.rep_dim, &a.proj_hidden, &a.proj_dim};
  for (std::size_t i = 0; i < f.size(); ++i) *targets[i] = static_cast<int>(f[i]);
  a.validate();
  return a;
}

void ArchSpec::validate() const {
  const int positive[] = {in_channels, height, width, conv1_channels, conv2_channels, kernel,
                          stride, rep_dim, proj_hidden, proj_dim};
  for (int v : positive) {
    if (v <= 0) throw ValidationError("architecture sizes must be positive");
  }
  if (padding < 0 || conv2_height() <= 0 || conv2_width() <= 0) {
    throw ValidationError("convolution geometry leaves no output pixels");
  }
}

std::string_view tensor_name(int index) {
  static constexpr std::string_view names[] = {
      "conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "encoder.weight",
      "encoder.bias", "proj1.weight", "proj1.bias", "proj2.weight", "proj2.bias"};
  if (index < 0 || index >= kParamTensorCount) return "unknown";
  return names[index];
}

std::vector<std::array<int, 2>> tensor_shapes(const ArchSpec& a) {
  const int k2 = a.kernel * a.kernel;
  return {{a.conv1_channels, a.in_channels * k2}, {a.conv1_channels, 1},
          {a.conv2_channels, a.conv1_channels * k2}, {a.conv2_channels, 1},
          {a.rep_dim, a.flat_size()}, {a.rep_dim, 1},
          {a.proj_hidden, a.rep_dim}, {a.proj_hidden, 1},
          {a.proj_dim, a.proj_hidden}, {a.proj_dim, 1}};
}

ModelParams::ModelParams(const ArchSpec& arch) : arch_(arch) {
  arch_.validate();
  for (const auto& shape : tensor_shapes(arch_)) {
    tensors_.push_back(Matrix::Zero(shape[0], shape[1]));
  }
  touch();
}

ModelParams ModelParams::zeros(const ArchSpec& arch) { return ModelParams(arch); }

ModelParams ModelParams::kaiming_uniform(const ArchSpec& arch, std::uint64_t seed) {
  ModelParams p(arch);
  std::mt19937_64 rng(seed);
  for (int t = 0; t < kParamTensorCount; t += 2) {
    Matrix& w = p.tensors_[t];
    const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  }
  p.touch();
  return p;
}

Matrix& ModelParams::mutable_tensor(int index) {
  touch();
  return tensors_.at(index);
}

std::vector<Matrix>& ModelParams::mutable_tensors() {
  touch();
  return tensors_;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.size());
  return n;
}

void ModelParams::touch() { version_ = g_version_counter.fetch_add(1); }

ForwardOutput forward(const ModelParams& params, const Matrix& images) {
  const ArchSpec& a = params.arch();
  EncoderPass enc = run_encoder(params, images);

  ForwardOutput out;
  ForwardCache& c = out.cache;
  c.params_version = params.version();
  c.batch = static_cast<int>(images.rows());
  c.hidden = dense(enc.h, params.tensor(kProj1Weight), params.tensor(kProj1Bias));
  relu_inplace(c.hidden);
  c.z_raw = dense(c.hidden, params.tensor(kProj2Weight), params.tensor(kProj2Bias));
  c.norms = c.z_raw.rowwise().norm();
  c.z = Matrix::Zero(c.z_raw.rows(), a.proj_dim);
  for (Eigen::Index r = 0; r < c.z.rows(); ++r) {
    if (c.norms(r) < kZeroNormGuard) {
      c.z(r, 0) = 1.0;
    } else {
      c.z.row(r) = c.z_raw.row(r) / c.norms(r);
    }
  }
  c.cols1 = std::move(enc.cols1);
  c.act1 = std::move(enc.act1);
  c.cols2 = std::move(enc.cols2);
  c.act2 = std::move(enc.act2);
  c.h = std::move(enc.h);
  out.h = c.h;
  out.z = c.z;
  return out;
}

BatchForward forward(const ModelParams& params, const AugmentedBatch& batch) {
  ForwardOutput f = forward(params, batch.images);
  EmbeddingBatch z(f.z, batch.pairs);
  return {std::move(f.h), std::move(z), std::move(f.cache)};
}

Matrix encode(const ModelParams& params, const Matrix& images) {
  return run_encoder(params, images).h;
}

Gradients backward(const ModelParams& params, const ForwardCache& c, const Matrix& dz,
                   const Matrix* extra_dh) {
  if (c.params_version != params.version()) {
    throw UsageError("forward cache is stale: parameters changed after the forward pass");
  }
  if (dz.rows() != c.z.rows() || dz.cols() != c.z.cols()) {
    throw ValidationError("upstream gradient shape does not match the cached embeddings");
  }
  const ArchSpec& a = params.arch();
  const int batch = c.batch;
  Gradients g(kParamTensorCount);

  // z = z_raw / |z_raw|  =>  d z_raw = (dz - z (z . dz)) / |z_raw|
  Matrix dz_raw = Matrix::Zero(dz.rows(), dz.cols());
  for (Eigen::Index r = 0; r < dz.rows(); ++r) {
    if (c.norms(r) < kZeroNormGuard) continue;
    const double radial = c.z.row(r).dot(dz.row(r));
    dz_raw.row(r) = (dz.row(r) - radial * c.z.row(r)) / c.norms(r);
  }

  g[kProj2Weight] = weight_grad(dz_raw, c.hidden);
  g[kProj2Bias] = column_sums(dz_raw);
  Matrix dhidden = dz_raw * params.tensor(kProj2Weight);
  relu_backward_inplace(dhidden, c.hidden);

  g[kProj1Weight] = weight_grad(dhidden, c.h);
  g[kProj1Bias] = column_sums(dhidden);
  Matrix dh = dhidden * params.tensor(kProj1Weight);
  if (extra_dh != nullptr) {
    if (extra_dh->rows() != dh.rows() || extra_dh->cols() != dh.cols()) {
      throw ValidationError("representation gradient shape does not match the cache");
    }
    dh += *extra_dh;
  }

  Eigen::Map<const Matrix> flat(c.act2.data(), batch, a.flat_size());
  g[kEncoderWeight] = weight_grad(dh, flat);
  g[kEncoderBias] = column_sums(dh);
  Matrix dflat = dh * params.tensor(kEncoderWeight);
  Matrix dact2 = Eigen::Map<const Matrix>(dflat.data(), c.act2.rows(), c.act2.cols());
  relu_backward_inplace(dact2, c.act2);

  g[kConv2Weight] = weight_grad(dact2, c.cols2);
  g[kConv2Bias] = column_sums(dact2);
  Matrix dcols2 = dact2 * params.tensor(kConv2Weight);
  Matrix dact1 = col2im(batch, conv2_geometry(a), dcols2);
  relu_backward_inplace(dact1, c.act1);

  g[kConv1Weight] = weight_grad(dact1, c.cols1);
  g[kConv1Bias] = column_sums(dact1);
  return g;
}

double OptimizerState::lr(int epoch) const {
  const double t = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

OptimizerState make_optimizer(std::span<const Matrix> params, double base_lr, int total_epochs,
                              double momentum) {
  if (total_epochs <= 0) throw ParameterError("total epochs must be positive");
  OptimizerState s;
  s.momentum = momentum;
  s.base_lr = base_lr;
  s.total_epochs = total_epochs;
  for (const auto& p : params) s.velocity.push_back(Matrix::Zero(p.rows(), p.cols()));
  return s;
}

void sgd_update(std::span<Matrix> params, std::span<const Matrix> grads, OptimizerState& state,
                int epoch, std::span<const std::string> names) {
  if (params.size() != grads.size() || params.size() != state.velocity.size()) {
    throw ValidationError("parameter, gradient and velocity lists differ in length");
  }
  for (std::size_t t = 0; t < grads.size(); ++t) {
    if (grads[t].rows() != params[t].rows() || grads[t].cols() != params[t].cols()) {
      throw ValidationError("gradient shape mismatch for tensor " + std::to_string(t));
    }
    if (!grads[t].allFinite()) {
      const std::string name = t < names.size() ? names[t] : "tensor " + std::to_string(t);
      throw NumericalError("non-finite gradient in " + name);
    }
  }
  const double lr = state.lr(epoch);
  for (std::size_t t = 0; t < grads.size(); ++t) {
    state.velocity[t] = state.momentum * state.velocity[t] + grads[t];
    params[t] -= lr * state.velocity[t];
  }
}

void sgd_step(ModelParams& params, const Gradients& grads, OptimizerState& state, int epoch) {
  std::vector<std::string> names;
  for (int t = 0; t < kParamTensorCount; ++t) names.emplace_back(tensor_name(t));
  // Validate before touching so a failed step leaves the version unchanged.
  for (std::size_t t = 0; t < grads.size(); ++t) {
    if (!grads[t].allFinite()) {
      throw NumericalError("non-finite gradient in " + names.at(t));
    }
  }
  sgd_update(params.mutable_tensors(), grads, state, epoch, names);
}

LinearProbe LinearProbe::zeros(int classes, int rep_dim) {
  return {Matrix::Zero(classes, rep_dim), Vector::Zero(classes)};
}

Matrix LinearProbe::logits(const Matrix& features) const {
  Matrix out(features.rows(), weight.rows());
  out.noalias() = features * weight.transpose();
  out.rowwise() += bias.transpose();
  return out;
}

Matrix linear_probe_forward(const ModelParams& params, const LinearProbe& probe,
                            const Matrix& images) {
  return probe.logits(encode(params, images));
}

}  // namespace contex
