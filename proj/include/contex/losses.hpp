#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "contex/contrast_core.hpp"

namespace contex {

/// Batch-summed loss value and its total derivative with respect to the
/// embedding rows (every path through every anchor's numerator and denominator).
struct LossOutput {
  double value = 0.0;
  Matrix grad;
  int skipped_anchors = 0;
};

/// Two readings of the self-contrast term.
///
/// literal: -log(1 + exp(s_ip) / sum_{n in N_s(i)} exp(s_in)), as the loss is written.
/// infonce: -log(exp(s_ip) / sum_{a in A(i)} exp(s_ia)), the form whose anchor
///          gradient is the published part-b gradient.
enum class PartBVariant { literal, infonce };

PartBVariant parse_variant(std::string_view tag);
std::string_view to_string(PartBVariant v);

LossOutput ntxent(const SimilarityMatrix& sim, const ContrastMasks& masks);
LossOutput supcon(const SimilarityMatrix& sim, const ContrastMasks& masks);

// Context positives against context negatives only. Anchors with an empty
// context-negative set contribute zero and are counted in skipped_anchors.
LossOutput contex_a(const SimilarityMatrix& sim, const ContrastMasks& masks);
LossOutput contex_b(const SimilarityMatrix& sim, const ContrastMasks& masks, PartBVariant variant);

// lambda * contex_a + (1 - lambda) * contex_b. The endpoints return the
// corresponding part unchanged.
LossOutput contex(const SimilarityMatrix& sim, const ContrastMasks& masks, double lambda,
                  PartBVariant variant);

// Mean over rows of -log softmax(logits)[label]; grad is with respect to logits.
LossOutput cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Restricted softmax weights used by the closed-form anchor gradients.
///
/// x(i, n): weight of context negative n among N_l(i) (zero elsewhere).
/// p(i, a): weight of a among A(i) (zero on the diagonal).
/// zbar_pl.row(i): mean embedding over P_l(i).
struct LikelihoodTerms {
  Matrix x;
  Matrix p;
  Matrix zbar_pl;
  std::vector<bool> empty_ctx_neg;
};

LikelihoodTerms likelihood_terms(const SimilarityMatrix& sim, const ContrastMasks& masks);

enum class AnchorGradient { part_a, part_b, supcon };

/// Closed-form partial derivative of anchor i's own summand with respect to z_i.
///
/// part_a:  -(1/tau) (zbar_pl - sum_n x(i,n) z_n)
/// part_b:  -(1/tau) (z_ps - p(i,ps) z_ps - sum_{n in N_s} p(i,n) z_n)   (InfoNCE reading)
/// supcon:   (1/tau) (sum_{a in A} p(i,a) z_a - zbar_pl)
///
/// Throws DomainError when part_a is requested for an anchor without context negatives.
Vector paper_anchor_gradient(const SimilarityMatrix& sim, const ContrastMasks& masks,
                             AnchorGradient which, int anchor);

}  // namespace contex
