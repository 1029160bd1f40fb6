#include "contex/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "contex/bounds.hpp"
#include "contex/losses.hpp"

namespace contex {

double max_relative_error(const Matrix& analytic, const Matrix& numeric) {
  const double scale = std::max(analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff());
  const double diff = (analytic - numeric).cwiseAbs().maxCoeff();
  if (scale == 0.0) return diff;
  return diff / scale;
}

Matrix central_difference(const std::function<double(const Matrix&)>& f, const Matrix& x,
                          double step) {
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + step;
    const double up = f(probe);
    probe.data()[i] = orig - step;
    const double down = f(probe);
    probe.data()[i] = orig;
    grad.data()[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

RandomContrastBatch random_contrast_batch(int originals, int dim, int classes, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, classes - 1);
  RandomContrastBatch b;
  b.z.resize(2 * originals, dim);
  for (int k = 0; k < originals; ++k) {
    const int y = label(rng);
    for (int v = 0; v < 2; ++v) {
      const int row = 2 * k + v;
      for (int d = 0; d < dim; ++d) b.z(row, d) = gauss(rng);
      b.z.row(row).normalize();
      b.labels.push_back(y);
      b.pairs.push_back(v == 0 ? row + 1 : row - 1);
    }
  }
  return b;
}

std::vector<KernelCheck> gradient_suite(int trials, std::uint64_t seed, double tau) {
  using Kernel = std::function<LossOutput(const SimilarityMatrix&, const ContrastMasks&)>;
  const std::vector<std::pair<std::string, Kernel>> kernels = {
      {"ntxent", [](const auto& s, const auto& m) { return ntxent(s, m); }},
      {"supcon", [](const auto& s, const auto& m) { return supcon(s, m); }},
      {"contex_a", [](const auto& s, const auto& m) { return contex_a(s, m); }},
      {"contex_b_literal",
       [](const auto& s, const auto& m) { return contex_b(s, m, PartBVariant::literal); }},
      {"contex_b_infonce",
       [](const auto& s, const auto& m) { return contex_b(s, m, PartBVariant::infonce); }},
      {"contex_literal_0.7",
       [](const auto& s, const auto& m) { return contex(s, m, 0.7, PartBVariant::literal); }},
      {"contex_infonce_0.5",
       [](const auto& s, const auto& m) { return contex(s, m, 0.5, PartBVariant::infonce); }},
  };
  std::vector<KernelCheck> out;
  for (const auto& [name, _] : kernels) out.push_back({name, 0.0, 0});
  out.push_back({"cross_entropy", 0.0, 0});

  static constexpr int kSizes[] = {4, 8, 16, 32};
  static constexpr int kDims[] = {4, 8, 16};
  std::mt19937_64 rng(seed);
  for (int t = 0; t < trials; ++t) {
    const int anchors = kSizes[t % 4];
    const int dim = kDims[(t / 4) % 3];
    const int originals = anchors / 2;
    std::uniform_int_distribution<int> class_pick(2, std::max(2, originals));
    const RandomContrastBatch b = random_contrast_batch(originals, dim, class_pick(rng), rng);
    const ContrastMasks masks = build_masks(b.labels, b.pairs);
    for (std::size_t k = 0; k < kernels.size(); ++k) {
      const Kernel& kernel = kernels[k].second;
      const LossOutput analytic = kernel(similarity(b.z, tau), masks);
      const Matrix numeric = central_difference(
          [&](const Matrix& z) { return kernel(similarity_unchecked(z, tau), masks).value; }, b.z,
          kGradientStep);
      out[k].max_rel_error = std::max(out[k].max_rel_error, max_relative_error(analytic.grad, numeric));
      ++out[k].trials;
    }
    // Logits with the same row count; classes cycle through 2..10.
    const int classes = 2 + t % 9;
    std::normal_distribution<double> gauss(0.0, 2.0);
    Matrix logits(anchors, classes);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = gauss(rng);
    std::vector<int> y(anchors);
    std::uniform_int_distribution<int> cls(0, classes - 1);
    for (int& v : y) v = cls(rng);
    const LossOutput ce = cross_entropy(logits, y);
    const Matrix numeric = central_difference(
        [&](const Matrix& l) { return cross_entropy(l, y).value; }, logits, kGradientStep);
    KernelCheck& ce_check = out.back();
    ce_check.max_rel_error = std::max(ce_check.max_rel_error, max_relative_error(ce.grad, numeric));
    ++ce_check.trials;
  }
  return out;
}

std::vector<BoundsTrial> bounds_suite(int trials, std::uint64_t seed, double tau) {
  std::mt19937_64 rng(seed);
  std::vector<BoundsTrial> out;
  for (int t = 0; t < trials; ++t) {
    std::uniform_int_distribution<int> class_pick(2, 6);
    const int classes = class_pick(rng);
    std::uniform_int_distribution<int> extra(1, 6);
    const int originals = classes + extra(rng);
    std::uniform_int_distribution<int> dim_pick(2, 16);
    RandomContrastBatch b = random_contrast_batch(originals, dim_pick(rng), classes, rng);
    // Guarantee two distinct classes so every anchor has context negatives.
    if (b.labels[0] == b.labels[2]) {
      const int other = (b.labels[0] + 1) % classes;
      b.labels[2] = b.labels[3] = other;
    }
    const ContrastMasks masks = build_masks(b.labels, b.pairs);
    const BoundReport r = compare_bounds(similarity(b.z, tau), masks);
    out.push_back({t, r.parta_bound, r.ntxent_bound, r.all_hold() && r.multi_positive});
  }
  return out;
}

}  // namespace contex
