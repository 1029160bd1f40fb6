#include "contex/losses.hpp"

#include <cmath>
#include <string>

#include "contex/errors.hpp"

namespace contex {

namespace {

void check_batch(const SimilarityMatrix& sim, const ContrastMasks& masks) {
  if (sim.size() != masks.size()) {
    throw ValidationError("similarity matrix has " + std::to_string(sim.size()) +
                          " rows but masks cover " + std::to_string(masks.size()));
  }
  if (sim.size() < 4) {
    throw ValidationError("contrastive losses need at least 4 augmented samples, got " +
                          std::to_string(sim.size()));
  }
}

// dL/dz_k = sum_j (G(k,j) + G(j,k)) z_j / tau, for s = z z^T / tau.
Matrix chain_to_embeddings(const SimilarityMatrix& sim, const Matrix& ds) {
  return ((ds + ds.transpose()) * sim.z) / sim.tau;
}

// Writes softmax weights of row i restricted to mask into out(i, .) scaled by `scale`.
void add_masked_softmax(const Matrix& s, const MaskMatrix& mask, int i, double lse,
                        double scale, Matrix& out) {
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    if (mask(i, j)) out(i, j) += scale * std::exp(s(i, j) - lse);
  }
}

double masked_row_sum(const Matrix& s, const MaskMatrix& mask, int i) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    if (mask(i, j)) acc += s(i, j);
  }
  return acc;
}

}  // namespace

PartBVariant parse_variant(std::string_view tag) {
  if (tag == "literal") return PartBVariant::literal;
  if (tag == "infonce") return PartBVariant::infonce;
  throw ParameterError("unknown part-b variant '" + std::string(tag) + "'");
}

std::string_view to_string(PartBVariant v) {
  return v == PartBVariant::literal ? "literal" : "infonce";
}

LossOutput ntxent(const SimilarityMatrix& sim, const ContrastMasks& masks) {
  check_batch(sim, masks);
  const int n = sim.size();
  Matrix ds = Matrix::Zero(n, n);
  double value = 0.0;
  for (int i = 0; i < n; ++i) {
    const int ps = masks.self_pos[i];
    const double lse = masked_logsumexp(sim.s, masks.all_others, i);
    value += lse - sim.s(i, ps);
    add_masked_softmax(sim.s, masks.all_others, i, lse, 1.0, ds);
    ds(i, ps) -= 1.0;
  }
  return {value, chain_to_embeddings(sim, ds), 0};
}

LossOutput supcon(const SimilarityMatrix& sim, const ContrastMasks& masks) {
  check_batch(sim, masks);
  const int n = sim.size();
  Matrix ds = Matrix::Zero(n, n);
  double value = 0.0;
  for (int i = 0; i < n; ++i) {
    const double inv_pos = 1.0 / masks.ctx_pos_count[i];
    const double lse = masked_logsumexp(sim.s, masks.all_others, i);
    value += lse - inv_pos * masked_row_sum(sim.s, masks.ctx_pos, i);
    add_masked_softmax(sim.s, masks.all_others, i, lse, 1.0, ds);
    for (int j = 0; j < n; ++j) {
      if (masks.ctx_pos(i, j)) ds(i, j) -= inv_pos;
    }
  }
  return {value, chain_to_embeddings(sim, ds), 0};
}

LossOutput contex_a(const SimilarityMatrix& sim, const ContrastMasks& masks) {
  check_batch(sim, masks);
  const int n = sim.size();
  Matrix ds = Matrix::Zero(n, n);
  double value = 0.0;
  int skipped = 0;
  for (int i = 0; i < n; ++i) {
    if (masks.ctx_neg_count[i] == 0) {
      ++skipped;
      continue;
    }
    const double inv_pos = 1.0 / masks.ctx_pos_count[i];
    const double lse = masked_logsumexp(sim.s, masks.ctx_neg, i);
    value += lse - inv_pos * masked_row_sum(sim.s, masks.ctx_pos, i);
    add_masked_softmax(sim.s, masks.ctx_neg, i, lse, 1.0, ds);
    for (int j = 0; j < n; ++j) {
      if (masks.ctx_pos(i, j)) ds(i, j) -= inv_pos;
    }
  }
  return {value, chain_to_embeddings(sim, ds), skipped};
}

LossOutput contex_b(const SimilarityMatrix& sim, const ContrastMasks& masks,
                    PartBVariant variant) {
  if (variant == PartBVariant::infonce) return ntxent(sim, masks);
  check_batch(sim, masks);
  const int n = sim.size();
  Matrix ds = Matrix::Zero(n, n);
  double value = 0.0;
  // -log(1 + e^{s_ip} / sum_{N_s} e^{s_in}) = LSE over N_s(i) - LSE over A(i),
  // since N_s(i) and {P_s(i)} partition A(i).
  for (int i = 0; i < n; ++i) {
    const double lse_self_neg = masked_logsumexp(sim.s, masks.self_neg, i);
    const double lse_all = masked_logsumexp(sim.s, masks.all_others, i);
    value += lse_self_neg - lse_all;
    add_masked_softmax(sim.s, masks.self_neg, i, lse_self_neg, 1.0, ds);
    add_masked_softmax(sim.s, masks.all_others, i, lse_all, -1.0, ds);
  }
  return {value, chain_to_embeddings(sim, ds), 0};
}

LossOutput contex(const SimilarityMatrix& sim, const ContrastMasks& masks, double lambda,
                  PartBVariant variant) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ParameterError("lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  if (lambda == 1.0) return contex_a(sim, masks);
  if (lambda == 0.0) return contex_b(sim, masks, variant);
  LossOutput a = contex_a(sim, masks);
  LossOutput b = contex_b(sim, masks, variant);
  LossOutput out;
  out.value = lambda * a.value + (1.0 - lambda) * b.value;
  out.grad = lambda * a.grad + (1.0 - lambda) * b.grad;
  out.skipped_anchors = a.skipped_anchors;
  return out;
}

LossOutput cross_entropy(const Matrix& logits, std::span<const int> labels) {
  const Eigen::Index rows = logits.rows();
  const Eigen::Index classes = logits.cols();
  if (classes < 2) {
    throw ParameterError("cross entropy needs at least 2 classes");
  }
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    throw ValidationError("label count does not match logit rows");
  }
  if (rows == 0) {
    throw ValidationError("cross entropy of an empty batch");
  }
  LossOutput out;
  out.grad = Matrix::Zero(rows, classes);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int y = labels[r];
    if (y < 0 || y >= classes) {
      throw ValidationError("label " + std::to_string(y) + " at row " + std::to_string(r) +
                            " is outside [0, " + std::to_string(classes) + ")");
    }
    const double top = logits.row(r).maxCoeff();
    double acc = 0.0;
    for (Eigen::Index c = 0; c < classes; ++c) acc += std::exp(logits(r, c) - top);
    const double lse = top + std::log(acc);
    out.value += lse - logits(r, y);
    for (Eigen::Index c = 0; c < classes; ++c) {
      out.grad(r, c) = std::exp(logits(r, c) - lse);
    }
    out.grad(r, y) -= 1.0;
  }
  out.value /= static_cast<double>(rows);
  out.grad /= static_cast<double>(rows);
  return out;
}

LikelihoodTerms likelihood_terms(const SimilarityMatrix& sim, const ContrastMasks& masks) {
  check_batch(sim, masks);
  const int n = sim.size();
  LikelihoodTerms t;
  t.x = Matrix::Zero(n, n);
  t.p = Matrix::Zero(n, n);
  t.zbar_pl = Matrix::Zero(n, sim.z.cols());
  t.empty_ctx_neg.assign(n, false);
  for (int i = 0; i < n; ++i) {
    if (masks.ctx_neg_count[i] == 0) {
      t.empty_ctx_neg[i] = true;
    } else {
      add_masked_softmax(sim.s, masks.ctx_neg, i, masked_logsumexp(sim.s, masks.ctx_neg, i),
                         1.0, t.x);
    }
    add_masked_softmax(sim.s, masks.all_others, i,
                       masked_logsumexp(sim.s, masks.all_others, i), 1.0, t.p);
    for (int j = 0; j < n; ++j) {
      if (masks.ctx_pos(i, j)) t.zbar_pl.row(i) += sim.z.row(j);
    }
    t.zbar_pl.row(i) /= masks.ctx_pos_count[i];
  }
  return t;
}

Vector paper_anchor_gradient(const SimilarityMatrix& sim, const ContrastMasks& masks,
                             AnchorGradient which, int anchor) {
  check_batch(sim, masks);
  const int n = sim.size();
  if (anchor < 0 || anchor >= n) {
    throw ParameterError("anchor index " + std::to_string(anchor) + " outside the batch");
  }
  if (which == AnchorGradient::part_a && masks.ctx_neg_count[anchor] == 0) {
    throw DomainError("anchor " + std::to_string(anchor) + " has no context negatives");
  }
  const LikelihoodTerms t = likelihood_terms(sim, masks);
  const Matrix& z = sim.z;
  const int ps = masks.self_pos[anchor];
  Vector g = Vector::Zero(z.cols());

  switch (which) {
    case AnchorGradient::part_a: {
      Vector weighted_neg = Vector::Zero(z.cols());
      for (int j = 0; j < n; ++j) {
        if (masks.ctx_neg(anchor, j)) weighted_neg += t.x(anchor, j) * z.row(j).transpose();
      }
      g = -(t.zbar_pl.row(anchor).transpose() - weighted_neg) / sim.tau;
      break;
    }
    case AnchorGradient::part_b: {
      Vector weighted_self_neg = Vector::Zero(z.cols());
      for (int j = 0; j < n; ++j) {
        if (masks.self_neg(anchor, j)) weighted_self_neg += t.p(anchor, j) * z.row(j).transpose();
      }
      const Vector z_ps = z.row(ps).transpose();
      g = -(z_ps - t.p(anchor, ps) * z_ps - weighted_self_neg) / sim.tau;
      break;
    }
    case AnchorGradient::supcon: {
      Vector weighted_all = Vector::Zero(z.cols());
      for (int j = 0; j < n; ++j) {
        if (masks.all_others(anchor, j)) weighted_all += t.p(anchor, j) * z.row(j).transpose();
      }
      g = (weighted_all - t.zbar_pl.row(anchor).transpose()) / sim.tau;
      break;
    }
  }
  return g;
}

}  // namespace contex
