#include "contex/metrics.hpp"

#include <algorithm>
#include <cstdio>

#include "contex/errors.hpp"

namespace contex {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void check_lengths(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || a != c) throw ValidationError("prediction, target and bias vectors differ in length");
}

}  // namespace

std::string format_metrics_row(const MetricsRow& row, bool record_wall_time) {
  std::string line = std::to_string(row.epoch) + "," + format_double(row.train_loss) + "," +
                     format_double(row.lr) + ",";
  if (row.top1) line += format_double(*row.top1);
  line += ",";
  if (row.unbiased_acc) line += format_double(*row.unbiased_acc);
  line += ",";
  line += record_wall_time ? format_double(row.wall_seconds) : "0";
  return line;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, bool record_wall_time)
    : record_wall_time_(record_wall_time) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::trunc);
  if (!out_) throw ValidationError("cannot write metrics file " + path.string());
  out_ << kMetricsHeader << '\n' << std::flush;
}

void MetricsWriter::append(const MetricsRow& row) {
  if (row.epoch < last_epoch_) {
    throw UsageError("metrics epochs must be non-decreasing");
  }
  last_epoch_ = row.epoch;
  out_ << format_metrics_row(row, record_wall_time_) << '\n' << std::flush;
}

std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    scores.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

double top1_accuracy(std::span<const int> predictions, std::span<const int> targets) {
  if (predictions.size() != targets.size() || predictions.empty()) {
    throw ValidationError("top-1 accuracy needs equal-length, non-empty vectors");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == targets[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

Matrix group_accuracy(std::span<const int> predictions, std::span<const int> targets,
                      std::span<const int> biases, int class_count, int bias_count) {
  check_lengths(predictions.size(), targets.size(), biases.size());
  Matrix hits = Matrix::Zero(class_count, bias_count);
  Matrix totals = Matrix::Zero(class_count, bias_count);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const int t = targets[i];
    const int b = biases[i];
    if (t < 0 || t >= class_count || b < 0 || b >= bias_count) {
      throw ValidationError("target or bias id out of range at index " + std::to_string(i));
    }
    totals(t, b) += 1.0;
    if (predictions[i] == t) hits(t, b) += 1.0;
  }
  std::string missing;
  for (int t = 0; t < class_count; ++t) {
    for (int b = 0; b < bias_count; ++b) {
      if (totals(t, b) == 0.0) {
        missing += (missing.empty() ? "" : ", ") + std::string("(") + std::to_string(t) + "," +
                   std::to_string(b) + ")";
      }
    }
  }
  if (!missing.empty()) {
    throw ValidationError("empty (target,bias) groups: " + missing);
  }
  return hits.cwiseQuotient(totals);
}

double unbiased_accuracy(std::span<const int> predictions, std::span<const int> targets,
                         std::span<const int> biases, int class_count, int bias_count) {
  return group_accuracy(predictions, targets, biases, class_count, bias_count).mean();
}

double unbiased_accuracy(std::span<const int> predictions, std::span<const int> targets,
                         std::span<const int> biases) {
  check_lengths(predictions.size(), targets.size(), biases.size());
  if (targets.empty()) throw ValidationError("unbiased accuracy of an empty set");
  const int classes = *std::max_element(targets.begin(), targets.end()) + 1;
  const int bias_count = *std::max_element(biases.begin(), biases.end()) + 1;
  return unbiased_accuracy(predictions, targets, biases, classes, bias_count);
}

}  // namespace contex
