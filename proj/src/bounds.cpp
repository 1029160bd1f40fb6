#include "contex/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "contex/errors.hpp"

namespace contex {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double masked_max(const Matrix& s, const MaskMatrix& mask, int row) {
  double top = kNegInf;
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    if (mask(row, j)) top = std::max(top, s(row, j));
  }
  return top;
}

int mask_count(const MaskMatrix& mask, int row) {
  return static_cast<int>(mask.row(row).count());
}

double parta_anchor_bound(const SimilarityMatrix& sim, const ContrastMasks& m, int i) {
  return -masked_max(sim.s, m.ctx_pos, i) - std::log(static_cast<double>(m.ctx_pos_count[i])) +
         masked_max(sim.s, m.ctx_neg, i) + std::log(static_cast<double>(m.ctx_neg_count[i]));
}

double ntxent_anchor_bound(const SimilarityMatrix& sim, const ContrastMasks& m, int i) {
  return -sim.s(i, m.self_pos[i]) + masked_max(sim.s, m.all_others, i) +
         std::log(static_cast<double>(mask_count(m.all_others, i)));
}

void check_sizes(const SimilarityMatrix& sim, const ContrastMasks& masks) {
  if (sim.size() != masks.size() || sim.size() == 0) {
    throw ValidationError("similarity matrix and masks disagree on batch size");
  }
}

}  // namespace

std::optional<int> lemma1_witness(std::span<const int> labels, int class_count) {
  std::vector<int> seen(static_cast<std::size_t>(std::max(class_count, 0)), 0);
  for (int y : labels) {
    if (y < 0 || y >= class_count) continue;
    if (++seen[static_cast<std::size_t>(y)] == 2) return y;
  }
  return std::nullopt;
}

BoundReport lse_bracket(std::span<const double> xs) {
  BoundReport r;
  r.lse_value = logsumexp(xs);
  r.lse_lower = *std::max_element(xs.begin(), xs.end());
  r.lse_upper = r.lse_lower + std::log(static_cast<double>(xs.size()));
  r.holds.lse_bracket = r.lse_lower <= r.lse_value && r.lse_value <= r.lse_upper;
  return r;
}

double parta_upper_bound(const SimilarityMatrix& sim, const ContrastMasks& masks) {
  check_sizes(sim, masks);
  double acc = 0.0;
  for (int i = 0; i < sim.size(); ++i) {
    if (masks.ctx_neg_count[i] == 0) {
      throw DomainError("part-a bound undefined: anchor " + std::to_string(i) +
                        " has no context negatives");
    }
    acc += parta_anchor_bound(sim, masks, i);
  }
  return acc / sim.size();
}

double ntxent_upper_bound(const SimilarityMatrix& sim, const ContrastMasks& masks) {
  check_sizes(sim, masks);
  double acc = 0.0;
  for (int i = 0; i < sim.size(); ++i) acc += ntxent_anchor_bound(sim, masks, i);
  return acc / sim.size();
}

BoundReport compare_bounds(const SimilarityMatrix& sim, const ContrastMasks& masks) {
  check_sizes(sim, masks);
  const int n = sim.size();
  BoundReport r;

  int classes = 0;
  for (int y : masks.labels) classes = std::max(classes, y + 1);
  r.positives_per_class.assign(classes, 0);
  for (int y : masks.labels) ++r.positives_per_class[y];

  double parta_sum = 0.0;
  double ntxent_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (masks.ctx_pos_count[i] >= 2) r.multi_positive = true;
    const double nt = ntxent_anchor_bound(sim, masks, i);
    ntxent_sum += nt;

    const double max_pos = masked_max(sim.s, masks.ctx_pos, i);
    if (max_pos < sim.s(i, masks.self_pos[i])) r.holds.positive_term = false;

    if (masks.ctx_neg_count[i] == 0) {
      ++r.degenerate_anchors;
      parta_sum = kNegInf;
      continue;
    }
    const double lhs = -std::log(static_cast<double>(masks.ctx_pos_count[i])) +
                       masked_max(sim.s, masks.ctx_neg, i) +
                       std::log(static_cast<double>(masks.ctx_neg_count[i]));
    const double rhs = masked_max(sim.s, masks.all_others, i) +
                       std::log(static_cast<double>(mask_count(masks.all_others, i)));
    if (lhs > rhs) r.holds.negative_term = false;
    parta_sum += parta_anchor_bound(sim, masks, i);
  }
  r.parta_bound = parta_sum / n;
  r.ntxent_bound = ntxent_sum / n;
  r.holds.bound_order = r.parta_bound <= r.ntxent_bound;
  return r;
}

}  // namespace contex
