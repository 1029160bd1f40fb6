#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "contex/config.hpp"
#include "contex/dataset.hpp"
#include "contex/losses.hpp"
#include "contex/metrics.hpp"
#include "contex/model.hpp"

namespace contex {

// Default desk-scale architecture with input geometry taken from the dataset.
ArchSpec arch_for(const Dataset& data);

// Training-time augmentation with normalization statistics of `data`.
AugmentPolicy training_policy(const Dataset& data);

// Dispatches the configured contrastive loss. Not valid for cross_entropy.
LossOutput contrastive_loss(const TrainConfig& config, const SimilarityMatrix& sim,
                            const ContrastMasks& masks);

struct ProbeSettings {
  int epochs = 30;
  int batch = 256;
  double momentum = 0.9;
  std::uint64_t seed = 0;

  // 0.1 x batch / 256
  double lr() const { return 0.1 * batch / 256.0; }
};

ProbeSettings probe_settings(const TrainConfig& config);

/// Trains a linear classifier on fixed features with SGD, momentum and cosine
/// decay. Features are standardized during training and the scaling is folded
/// back into the returned weights, so logits = features * w^T + b.
LinearProbe train_probe(const Matrix& features, std::span<const int> labels, int class_count,
                        const ProbeSettings& settings);

struct LinearEvalResult {
  double top1 = 0.0;
  double unbiased_acc = 0.0;
  double train_top1 = 0.0;
  Matrix group_accuracy;
  LinearProbe probe;
};

/// Freezes the encoder, drops the projection head, fits a probe on `train`
/// representations and scores it on `eval`.
LinearEvalResult linear_eval(const ModelParams& params, const Dataset& train, const Dataset& eval,
                             const ProbeSettings& settings);

/// Mean NT-Xent loss per anchor over freshly augmented pairs of `data`, with
/// frozen parameters.
double ntxent_eval(const ModelParams& params, const Dataset& data, const AugmentPolicy& policy,
                   double tau, int batch, std::uint64_t seed);

struct PretrainResult {
  ModelParams params;
  std::vector<MetricsRow> metrics;
  std::vector<std::string> warnings;
  long long skipped_anchors = 0;
};

/// Trains encoder and projection head with the configured loss. When
/// config.output_dir is set, writes checkpoint.ctxc, metrics.csv and
/// checkpoint_e<E>.ctxc for every entry of eval_epochs.
PretrainResult pretrain(const TrainConfig& config, const Dataset& train, const Dataset* eval);

// Loads config.dataset (and config.eval_dataset when present) from disk.
PretrainResult pretrain(const TrainConfig& config);

enum class SweepAxis { lambda, batch_size };

SweepAxis parse_axis(std::string_view tag);

struct SweepRow {
  double value = 0.0;
  double top1 = 0.0;
  double unbiased_acc = 0.0;
  double wall_seconds = 0.0;
};

std::vector<SweepRow> sweep(const TrainConfig& base, SweepAxis axis, std::span<const double> values,
                            const Dataset& train, const Dataset& eval);

std::string format_sweep_csv(SweepAxis axis, std::span<const SweepRow> rows, bool record_wall_time);

}  // namespace contex
