#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "contex/errors.hpp"
#include "contex/model.hpp"
#include "contex/protocols.hpp"
#include "model_fd.hpp"
#include "oracles.hpp"

using namespace contex;

namespace {

std::uint64_t fnv1a(const Matrix& m) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(m.size()) * sizeof(double); ++i) {
    h = (h ^ bytes[i]) * 1099511628211ULL;
  }
  return h;
}

model_fd::Problem small_problem(std::mt19937_64& rng, const ArchSpec& arch) {
  model_fd::Problem prob;
  prob.images = model_fd::random_images(6, arch, rng);
  prob.masks = build_masks(std::vector<int>{0, 0, 1, 1, 0, 0}, std::vector<int>{1, 0, 3, 2, 5, 4});
  return prob;
}

}  // namespace

TEST_CASE("architecture descriptor") {
  const ArchSpec a;
  CHECK(a.conv1_height() == 8);
  CHECK(a.conv2_height() == 4);
  CHECK(a.flat_size() == 512);
  CHECK(ArchSpec::from_fields(a.fields()) == a);
  CHECK(a.fields().size() == 11);
  const auto shapes = tensor_shapes(a);
  CHECK(shapes[kConv1Weight] == std::array<int, 2>{16, 27});
  CHECK(shapes[kConv2Weight] == std::array<int, 2>{32, 144});
  CHECK(shapes[kEncoderWeight] == std::array<int, 2>{128, 512});
  CHECK(shapes[kProj2Bias] == std::array<int, 2>{128, 1});
  CHECK(model_fd::tiny_arch().fields().size() == 11);
  CHECK(ModelParams::zeros(model_fd::tiny_arch()).parameter_count() == 1142);
  std::vector<std::uint32_t> bad = a.fields();
  bad.pop_back();
  CHECK_THROWS_AS(ArchSpec::from_fields(bad), ValidationError);
}

TEST_CASE("kaiming initialization") {
  const ArchSpec a;
  const auto p = ModelParams::kaiming_uniform(a, 7);
  for (int t = 0; t < kParamTensorCount; ++t) {
    const Matrix& m = p.tensor(t);
    CHECK(m.allFinite());
    if (t % 2 == 1) {
      CHECK(m.isZero());
    } else {
      CHECK(m.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / m.cols()));
      CHECK(m.cwiseAbs().maxCoeff() > 0.5 * std::sqrt(6.0 / m.cols()));
    }
  }
  const auto q = ModelParams::kaiming_uniform(a, 7);
  for (int t = 0; t < kParamTensorCount; ++t) CHECK(p.tensor(t) == q.tensor(t));
}

TEST_CASE("zero weights hit the normalization guard") {
  const ArchSpec a;
  const auto p = ModelParams::zeros(a);
  std::mt19937_64 rng(1);
  const Matrix x = model_fd::random_images(4, a, rng);
  const auto f = forward(p, x);
  CHECK(f.h.isZero());
  for (int r = 0; r < 4; ++r) {
    CHECK(f.z(r, 0) == 1.0);
    CHECK(f.z.row(r).tail(a.proj_dim - 1).isZero());
  }
  const auto g = backward(p, f.cache, Matrix::Ones(4, a.proj_dim));
  for (const auto& t : g) CHECK(t.isZero());
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  const auto arch = model_fd::tiny_arch();
  const auto p = model_fd::random_params(arch, 3);
  std::mt19937_64 rng(3);
  const auto f = forward(p, model_fd::random_images(4, arch, rng));
  const auto g = backward(p, f.cache, Matrix::Zero(4, arch.proj_dim));
  CHECK(g.size() == kParamTensorCount);
  for (const auto& t : g) CHECK(t.isZero());
}

TEST_CASE("forward is reproducible bit for bit") {
  const ArchSpec a;
  const auto p = ModelParams::kaiming_uniform(a, 42);
  std::mt19937_64 rng(42);
  const Matrix x = model_fd::random_images(8, a, rng);
  const auto f1 = forward(p, x);
  const auto f2 = forward(p, x);
  CHECK(fnv1a(f1.z) == fnv1a(f2.z));
  CHECK(fnv1a(f1.h) == fnv1a(f2.h));
  for (int r = 0; r < 8; ++r) CHECK(std::fabs(f1.z.row(r).norm() - 1.0) < 1e-12);

  // Duplicated rows map to identical embeddings.
  Matrix dup(2, a.input_size());
  dup.row(0) = x.row(3);
  dup.row(1) = x.row(3);
  const auto fd = forward(p, dup);
  CHECK(fd.z.row(0) == fd.z.row(1));
  CHECK(fd.z.row(0) == f1.z.row(3));
}

TEST_CASE("geometry mismatch is rejected") {
  const auto p = ModelParams::zeros(ArchSpec{});
  CHECK_THROWS_AS(forward(p, Matrix::Zero(2, 100)), ValidationError);
}

TEST_CASE("stale cache is a usage error") {
  const auto arch = model_fd::tiny_arch();
  auto p = model_fd::random_params(arch, 5);
  std::mt19937_64 rng(5);
  const auto f = forward(p, model_fd::random_images(4, arch, rng));
  p.mutable_tensor(kProj1Bias)(0, 0) += 1.0;
  CHECK_THROWS_AS(backward(p, f.cache, Matrix::Zero(4, arch.proj_dim)), UsageError);
}

TEST_CASE("normalization backward is the projected gradient") {
  const auto arch = model_fd::tiny_arch();
  const auto p = model_fd::random_params(arch, 9);
  std::mt19937_64 rng(9);
  const auto f = forward(p, model_fd::random_images(5, arch, rng));
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix dz(5, arch.proj_dim);
  for (Eigen::Index i = 0; i < dz.size(); ++i) dz.data()[i] = g(rng);
  const auto grads = backward(p, f.cache, dz);
  // The second projection bias receives sum_r (dz_r - z_r (z_r . dz_r)) / |h_r|.
  Vector expected = Vector::Zero(arch.proj_dim);
  for (int r = 0; r < 5; ++r) {
    const Vector zr = f.z.row(r).transpose();
    const Vector dr = dz.row(r).transpose();
    const double norm = f.cache.z_raw.row(r).norm();
    expected += (dr - zr * zr.dot(dr)) / norm;
  }
  CHECK(oracle::rel_error(Matrix(grads[kProj2Bias]), Matrix(expected)) < 1e-12);

  // And it matches differences of the normalized output.
  ModelParams q = p;
  Matrix numeric(arch.proj_dim, 1);
  std::mt19937_64 again(9);
  const Matrix x = model_fd::random_images(5, arch, again);
  for (int k = 0; k < arch.proj_dim; ++k) {
    const double keep = q.tensor(kProj2Bias)(k, 0);
    q.mutable_tensor(kProj2Bias)(k, 0) = keep + 1e-6;
    const double up = (forward(q, x).z.array() * dz.array()).sum();
    q.mutable_tensor(kProj2Bias)(k, 0) = keep - 1e-6;
    const double down = (forward(q, x).z.array() * dz.array()).sum();
    q.mutable_tensor(kProj2Bias)(k, 0) = keep;
    numeric(k, 0) = (up - down) / 2e-6;
  }
  CHECK(oracle::rel_error(Matrix(grads[kProj2Bias]), numeric) < 1e-7);
}

TEST_CASE("single-parameter directional check") {
  const auto arch = model_fd::tiny_arch();
  std::mt19937_64 rng(13);
  auto prob = small_problem(rng, arch);
  const auto p = model_fd::random_params(arch, 13);
  const auto g = prob.grad(p);
  for (int t = 0; t < kParamTensorCount; ++t) {
    ModelParams q = p;
    const Eigen::Index i = g[t].size() / 2;
    const double step = 1e-5;
    q.mutable_tensor(t).data()[i] += step;
    const double up = prob.loss(q);
    q.mutable_tensor(t).data()[i] -= 2.0 * step;
    const double down = prob.loss(q);
    const double numeric = (up - down) / (2.0 * step);
    CAPTURE(t);
    CHECK(oracle::rel_error(g[t].data()[i], numeric) < 1e-5);
  }
}

TEST_CASE("full finite-difference sweep on a tiny model") {
  const auto arch = model_fd::tiny_arch();
  std::mt19937_64 rng(17);
  auto prob = small_problem(rng, arch);
  const auto p = model_fd::random_params(arch, 17);
  for (auto v : {PartBVariant::literal, PartBVariant::infonce}) {
    prob.variant = v;
    prob.lambda = 0.5;
    const auto r = model_fd::full_sweep(prob, p, 1e-5);
    CHECK(r.parameters == 1142);
    CHECK(r.max_rel_error <= 1e-5);
  }
}

TEST_CASE("learning-rate schedule") {
  const std::vector<Matrix> params{Matrix::Zero(2, 2)};
  const auto s = make_optimizer(params, 0.05, 50);
  CHECK(s.lr(0) == 0.05);
  CHECK(s.lr(50) == doctest::Approx(0.0).epsilon(1e-18));
  CHECK(s.lr(25) == doctest::Approx(0.025));
  CHECK(s.momentum == 0.9);
  CHECK(s.velocity[0].isZero());
  CHECK_THROWS_AS(make_optimizer(params, 0.05, 0), ParameterError);
}

TEST_CASE("two momentum steps with a constant gradient") {
  std::vector<Matrix> params{Matrix::Zero(2, 3)};
  const std::vector<Matrix> grads{Matrix::Constant(2, 3, 0.5)};
  auto s = make_optimizer(params, 0.1, 1000000);
  sgd_update(params, grads, s, 0);
  const Matrix after_one = params[0];
  sgd_update(params, grads, s, 0);
  CHECK(oracle::rel_error(Matrix(params[0] - after_one), Matrix::Constant(2, 3, -1.9 * 0.1 * 0.5)) <
        1e-15);
  CHECK(oracle::rel_error(params[0], Matrix::Constant(2, 3, -2.9 * 0.1 * 0.5)) < 1e-15);
}

TEST_CASE("non-finite gradient names the tensor") {
  const auto arch = model_fd::tiny_arch();
  auto p = model_fd::random_params(arch, 2);
  auto s = make_optimizer(p.tensors(), 0.1, 10);
  Gradients g;
  for (const auto& t : p.tensors()) g.push_back(Matrix::Zero(t.rows(), t.cols()));
  g[kEncoderWeight](1, 1) = std::numeric_limits<double>::quiet_NaN();
  const Matrix before = p.tensor(kConv1Weight);
  try {
    sgd_step(p, g, s, 0);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find(std::string(tensor_name(kEncoderWeight))) != std::string::npos);
  }
  CHECK(p.tensor(kConv1Weight) == before);
}

TEST_CASE("linear probe") {
  const auto arch = model_fd::tiny_arch();
  const auto p = model_fd::random_params(arch, 4);
  std::mt19937_64 rng(4);
  Matrix x = model_fd::random_images(3, arch, rng);
  x.row(2) = x.row(0);
  const auto probe = LinearProbe::zeros(5, arch.rep_dim);
  const Matrix logits = linear_probe_forward(p, probe, x);
  CHECK(logits.rows() == 3);
  CHECK(logits.cols() == 5);
  CHECK(logits.isZero());
  CHECK(cross_entropy(logits, std::vector<int>{0, 1, 2}).value == doctest::Approx(std::log(5.0)));

  LinearProbe w = LinearProbe::zeros(5, arch.rep_dim);
  for (Eigen::Index i = 0; i < w.weight.size(); ++i) w.weight.data()[i] = 0.01 * static_cast<double>(i % 7);
  const Matrix l2 = linear_probe_forward(p, w, x);
  CHECK(l2.row(0) == l2.row(2));
  CHECK(oracle::rel_error(l2, Matrix(encode(p, x) * w.weight.transpose())) < 1e-14);
}

TEST_CASE("probe reaches full accuracy on separable features") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 0.1);
  const int classes = 4;
  Matrix feats(200, 6);
  std::vector<int> labels(200);
  for (int r = 0; r < 200; ++r) {
    labels[r] = r % classes;
    for (int c = 0; c < 6; ++c) feats(r, c) = g(rng) + (c == labels[r] ? 3.0 : 0.0);
  }
  ProbeSettings s;
  s.batch = 32;
  const auto probe = train_probe(feats, labels, classes, s);
  const auto pred = argmax_rows(probe.logits(feats));
  CHECK(top1_accuracy(pred, labels) == 1.0);
}

TEST_CASE("checkpoint round trip and layout") {
  const auto arch = model_fd::tiny_arch();
  const auto p = model_fd::random_params(arch, 8);
  const auto bytes = serialize_checkpoint(p);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "CTXC");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[8] == 11);
  // Header: magic, version, field count, fields, tensor count, shapes.
  const std::size_t header = 4 + 4 + 4 + 11 * 4 + 4 + kParamTensorCount * 8;
  CHECK(bytes.size() == header + 8 * p.parameter_count());
  double first = 0.0;
  std::memcpy(&first, bytes.data() + header, sizeof first);
  CHECK(first == p.tensor(kConv1Weight)(0, 0));

  const auto q = deserialize_checkpoint(bytes);
  CHECK(q.arch() == arch);
  for (int t = 0; t < kParamTensorCount; ++t) CHECK(q.tensor(t) == p.tensor(t));

  const auto path = std::filesystem::temp_directory_path() / "contex_test_ckpt" / "m.ctxc";
  save_checkpoint(path, p);
  CHECK(serialize_checkpoint(load_checkpoint(path)) == bytes);
  std::filesystem::remove_all(path.parent_path());

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad), ValidationError);
  auto version = bytes;
  version[4] = 9;
  CHECK_THROWS_AS(deserialize_checkpoint(version), ValidationError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(deserialize_checkpoint(truncated), ValidationError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(deserialize_checkpoint(trailing), ValidationError);
}
