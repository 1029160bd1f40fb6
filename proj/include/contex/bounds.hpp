#pragma once

#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "contex/contrast_core.hpp"

namespace contex {

/// Outcome of one bound check. Fields that a given check does not touch keep
/// their NaN / empty defaults.
struct BoundReport {
  double lse_lower = std::numeric_limits<double>::quiet_NaN();
  double lse_value = std::numeric_limits<double>::quiet_NaN();
  double lse_upper = std::numeric_limits<double>::quiet_NaN();
  double parta_bound = std::numeric_limits<double>::quiet_NaN();
  double ntxent_bound = std::numeric_limits<double>::quiet_NaN();
  // |L_c|: number of augmented samples carrying label c in the batch.
  std::vector<int> positives_per_class;

  struct Checks {
    bool lse_bracket = true;
    // Per anchor, the largest context-positive similarity is at least the self-positive one.
    bool positive_term = true;
    // -log|P_l(i)| + max over N_l(i) + log|N_l(i)| <= max over A(i) + log|A(i)|, per anchor.
    bool negative_term = true;
    // parta_bound <= ntxent_bound.
    bool bound_order = true;
  } holds;

  // Some class contributes at least two context positives to an anchor.
  bool multi_positive = false;
  // Anchors without context negatives; their part-a bound is -infinity.
  int degenerate_anchors = 0;

  bool all_hold() const {
    return holds.lse_bracket && holds.positive_term && holds.negative_term && holds.bound_order;
  }
};

/// Pigeonhole witness: a class appearing at least twice in labels, if any.
/// Always present when labels.size() > class_count.
std::optional<int> lemma1_witness(std::span<const int> labels, int class_count);

BoundReport lse_bracket(std::span<const double> xs);

/// Mean over anchors of
///   -max_{p in P_l(i)} s_ip - log|P_l(i)| + max_{n in N_l(i)} s_in + log|N_l(i)|.
/// Throws DomainError if any anchor lacks context negatives.
double parta_upper_bound(const SimilarityMatrix& sim, const ContrastMasks& masks);

/// Mean over anchors of -s_{i,P_s(i)} + max_{a in A(i)} s_ia + log|A(i)|.
double ntxent_upper_bound(const SimilarityMatrix& sim, const ContrastMasks& masks);

/// Evaluates both bounds and the two term-wise inequalities that order them.
/// Anchors without context negatives are counted as degenerate and treated as
/// -infinity on the part-a side instead of raising.
BoundReport compare_bounds(const SimilarityMatrix& sim, const ContrastMasks& masks);

}  // namespace contex
