#include "contex/contrast_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "contex/errors.hpp"

namespace contex {

namespace {

void check_unit_rows(const Matrix& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double norm = z.row(i).norm();
    if (std::abs(norm - 1.0) > kUnitNormTolerance) {
      throw ValidationError("embedding row " + std::to_string(i) + " has norm " +
                            std::to_string(norm) + ", expected 1");
    }
  }
}

}  // namespace

EmbeddingBatch::EmbeddingBatch(Matrix z, std::vector<int> pairs)
    : z_(std::move(z)), pairs_(std::move(pairs)) {
  if (static_cast<Eigen::Index>(pairs_.size()) != z_.rows()) {
    throw ValidationError("pair map length " + std::to_string(pairs_.size()) +
                          " does not match " + std::to_string(z_.rows()) + " embedding rows");
  }
  validate_pairs(pairs_);
  check_unit_rows(z_);
}

void validate_pairs(std::span<const int> pairs) {
  const int n = static_cast<int>(pairs.size());
  for (int i = 0; i < n; ++i) {
    const int p = pairs[i];
    if (p < 0 || p >= n) {
      throw ValidationError("pair index " + std::to_string(i) + " points outside the batch");
    }
    if (p == i) {
      throw ValidationError("index " + std::to_string(i) + " is paired with itself");
    }
    if (pairs[p] != i) {
      throw ValidationError("pair map is not an involution at index " + std::to_string(i));
    }
  }
}

ContrastMasks build_masks(std::span<const int> labels, std::span<const int> pairs) {
  const int n = static_cast<int>(labels.size());
  if (static_cast<int>(pairs.size()) != n) {
    throw ValidationError("labels and pairs differ in length");
  }
  validate_pairs(pairs);
  for (int i = 0; i < n; ++i) {
    if (labels[i] != labels[pairs[i]]) {
      throw ValidationError("label of index " + std::to_string(i) +
                            " differs from its self positive " + std::to_string(pairs[i]));
    }
  }

  ContrastMasks m;
  m.labels.assign(labels.begin(), labels.end());
  m.self_pos.assign(pairs.begin(), pairs.end());
  m.ctx_pos = MaskMatrix::Constant(n, n, false);
  m.ctx_neg = MaskMatrix::Constant(n, n, false);
  m.self_neg = MaskMatrix::Constant(n, n, false);
  m.all_others = MaskMatrix::Constant(n, n, false);
  m.ctx_pos_count.assign(n, 0);
  m.ctx_neg_count.assign(n, 0);

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      m.all_others(i, j) = true;
      m.self_neg(i, j) = j != pairs[i];
      if (labels[j] == labels[i]) {
        m.ctx_pos(i, j) = true;
        ++m.ctx_pos_count[i];
      } else {
        m.ctx_neg(i, j) = true;
        ++m.ctx_neg_count[i];
      }
    }
  }
  return m;
}

SimilarityMatrix similarity_unchecked(const Matrix& z, double tau) {
  if (!(tau > 0.0)) {
    throw ParameterError("temperature must be positive, got " + std::to_string(tau));
  }
  SimilarityMatrix out;
  out.tau = tau;
  out.z = z;
  out.s = (z * z.transpose()) / tau;
  // The product is symmetric in exact arithmetic; enforce it bitwise.
  for (Eigen::Index i = 0; i < out.s.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < out.s.cols(); ++j) {
      out.s(j, i) = out.s(i, j);
    }
  }
  return out;
}

SimilarityMatrix similarity(const Matrix& z, double tau) {
  if (!(tau > 0.0)) {
    throw ParameterError("temperature must be positive, got " + std::to_string(tau));
  }
  check_unit_rows(z);
  return similarity_unchecked(z, tau);
}

SimilarityMatrix similarity(const EmbeddingBatch& batch, double tau) {
  return similarity_unchecked(batch.z(), tau);
}

double logsumexp(std::span<const double> xs) {
  if (xs.empty()) {
    throw DomainError("logsumexp of an empty set");
  }
  const double top = *std::max_element(xs.begin(), xs.end());
  if (std::isinf(top)) return top;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - top);
  return top + std::log(acc);
}

double masked_logsumexp(const Matrix& s, const MaskMatrix& mask, int row) {
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    if (mask(row, j)) top = std::max(top, s(row, j));
  }
  if (std::isinf(top)) return top;
  double acc = 0.0;
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    if (mask(row, j)) acc += std::exp(s(row, j) - top);
  }
  return top + std::log(acc);
}

}  // namespace contex
