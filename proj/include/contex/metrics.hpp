#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "contex/contrast_core.hpp"

namespace contex {

struct MetricsRow {
  int epoch = 0;
  double train_loss = 0.0;
  double lr = 0.0;
  std::optional<double> top1;
  std::optional<double> unbiased_acc;
  double wall_seconds = 0.0;
};

inline constexpr const char* kMetricsHeader = "epoch,train_loss,lr,top1,unbiased_acc,wall_seconds";

std::string format_metrics_row(const MetricsRow& row, bool record_wall_time);

/// Append-only CSV writer; every row is flushed as soon as it is written.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path, bool record_wall_time);
  void append(const MetricsRow& row);

 private:
  std::ofstream out_;
  bool record_wall_time_;
  int last_epoch_ = 0;
};

std::vector<int> argmax_rows(const Matrix& scores);

double top1_accuracy(std::span<const int> predictions, std::span<const int> targets);

/// Accuracy per (target, bias) cell, row = target, column = bias.
/// Throws ValidationError listing every empty cell.
Matrix group_accuracy(std::span<const int> predictions, std::span<const int> targets,
                      std::span<const int> biases, int class_count, int bias_count);

// Mean of group_accuracy over all class_count x bias_count cells.
double unbiased_accuracy(std::span<const int> predictions, std::span<const int> targets,
                         std::span<const int> biases, int class_count, int bias_count);

// Cell counts inferred as max(id) + 1.
double unbiased_accuracy(std::span<const int> predictions, std::span<const int> targets,
                         std::span<const int> biases);

}  // namespace contex
