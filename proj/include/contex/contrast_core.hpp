#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace contex {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using MaskMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kUnitNormTolerance = 1e-6;

/// A 2N x D batch of unit-norm embeddings together with the self-positive map.
///
/// Row i is z_i. pairs()[i] is the index of the other augmented view of the
/// same source image; the map is a fixed-point-free involution.
class EmbeddingBatch {
 public:
  EmbeddingBatch(Matrix z, std::vector<int> pairs);

  const Matrix& z() const { return z_; }
  const std::vector<int>& pairs() const { return pairs_; }
  int size() const { return static_cast<int>(z_.rows()); }
  int dim() const { return static_cast<int>(z_.cols()); }

 private:
  Matrix z_;
  std::vector<int> pairs_;
};

/// Temperature-scaled pairwise dot products, s(i, j) = z_i . z_j / tau.
///
/// The embeddings are kept alongside so that loss kernels can map gradients
/// with respect to similarities back onto the rows of z.
struct SimilarityMatrix {
  Matrix s;
  double tau = 0.0;
  Matrix z;

  int size() const { return static_cast<int>(s.rows()); }
};

/// Dense per-anchor index sets. Row i of each mask marks membership for anchor i.
///
///   all_others  A(i)   = every index except i
///   ctx_pos     P_l(i) = members of A(i) sharing i's label (includes the self positive)
///   ctx_neg     N_l(i) = A(i) \ P_l(i)
///   self_neg    N_s(i) = A(i) \ {self_pos[i]}
struct ContrastMasks {
  std::vector<int> labels;
  std::vector<int> self_pos;
  MaskMatrix ctx_pos;
  MaskMatrix ctx_neg;
  MaskMatrix self_neg;
  MaskMatrix all_others;
  std::vector<int> ctx_pos_count;
  std::vector<int> ctx_neg_count;

  int size() const { return static_cast<int>(self_pos.size()); }
};

// Throws ValidationError unless pairs is a fixed-point-free involution on [0, n).
void validate_pairs(std::span<const int> pairs);

ContrastMasks build_masks(std::span<const int> labels, std::span<const int> pairs);

SimilarityMatrix similarity(const EmbeddingBatch& batch, double tau);

// Validates that every row of z is unit norm before computing similarities.
SimilarityMatrix similarity(const Matrix& z, double tau);

// No norm check. Used where z is perturbed off the sphere (finite differences).
SimilarityMatrix similarity_unchecked(const Matrix& z, double tau);

/// log(sum(exp(xs))) with max-shift. Throws DomainError on empty input.
double logsumexp(std::span<const double> xs);

/// Log-sum-exp of s(row, j) over the columns j where mask(row, j) is set.
/// Returns -infinity when the masked set is empty.
double masked_logsumexp(const Matrix& s, const MaskMatrix& mask, int row);

}  // namespace contex
