#include "contex/protocols.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "contex/errors.hpp"

namespace contex {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<int> labels_of(const Dataset& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& s : data.samples) out.push_back(s.label);
  return out;
}

std::vector<int> biases_of(const Dataset& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& s : data.samples) out.push_back(s.bias);
  return out;
}

Matrix gather_rows(const Matrix& m, std::span<const int> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

std::string epoch_checkpoint_name(int epoch) {
  return "checkpoint_e" + std::to_string(epoch) + ".ctxc";
}

}  // namespace

ArchSpec arch_for(const Dataset& data) {
  ArchSpec a;
  a.in_channels = data.channels;
  a.height = data.height;
  a.width = data.width;
  return a;
}

AugmentPolicy training_policy(const Dataset& data) {
  AugmentPolicy p;
  const ChannelStats stats = channel_stats(data);
  p.mean = stats.mean;
  p.stddev = stats.stddev;
  return p;
}

LossOutput contrastive_loss(const TrainConfig& config, const SimilarityMatrix& sim,
                            const ContrastMasks& masks) {
  switch (config.loss) {
    case LossKind::ntxent: return ntxent(sim, masks);
    case LossKind::supcon: return supcon(sim, masks);
    case LossKind::contex: return contex(sim, masks, config.lambda, config.variant);
    case LossKind::cross_entropy: break;
  }
  throw ParameterError("cross_entropy is not a contrastive loss");
}

ProbeSettings probe_settings(const TrainConfig& config) {
  ProbeSettings s;
  s.epochs = config.probe_epochs;
  s.batch = config.probe_batch;
  s.momentum = config.momentum;
  s.seed = config.seed;
  return s;
}

LinearProbe train_probe(const Matrix& features, std::span<const int> labels, int class_count,
                        const ProbeSettings& settings) {
  const Eigen::Index n = features.rows();
  const Eigen::Index dim = features.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n || n == 0) {
    throw ValidationError("probe features and labels disagree in length");
  }
  const Eigen::RowVectorXd mean = features.colwise().mean();
  Eigen::RowVectorXd scale =
      ((features.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(n)).sqrt();
  for (Eigen::Index j = 0; j < dim; ++j) scale(j) = scale(j) > 1e-12 ? 1.0 / scale(j) : 0.0;
  const Matrix standardized = (features.rowwise() - mean).array().rowwise() * scale.array();

  LinearProbe probe = LinearProbe::zeros(class_count, static_cast<int>(dim));
  std::vector<Matrix> tensors = {probe.weight, Matrix(probe.bias)};
  OptimizerState opt = make_optimizer(tensors, settings.lr(), settings.epochs, settings.momentum);
  const std::vector<std::string> names = {"probe.weight", "probe.bias"};

  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    const std::vector<int> order =
        epoch_order(static_cast<std::size_t>(n), settings.seed ^ 0x70726f6265ULL, epoch);
    for (std::size_t start = 0; start < order.size(); start += settings.batch) {
      const std::size_t len = std::min<std::size_t>(settings.batch, order.size() - start);
      const auto idx = std::span<const int>(order).subspan(start, len);
      const Matrix x = gather_rows(standardized, idx);
      std::vector<int> y;
      for (int i : idx) y.push_back(labels[i]);
      Matrix logits = x * tensors[0].transpose();
      logits.rowwise() += tensors[1].col(0).transpose();
      const LossOutput ce = cross_entropy(logits, y);
      const std::vector<Matrix> grads = {ce.grad.transpose() * x,
                                         Matrix(ce.grad.colwise().sum().transpose())};
      sgd_update(tensors, grads, opt, epoch, names);
    }
  }
  probe.weight = tensors[0].array().rowwise() * scale.array();
  probe.bias = tensors[1].col(0) - probe.weight * mean.transpose();
  return probe;
}

LinearEvalResult linear_eval(const ModelParams& params, const Dataset& train, const Dataset& eval,
                             const ProbeSettings& settings) {
  const ArchSpec& a = params.arch();
  if (a.in_channels != train.channels || a.height != train.height || a.width != train.width ||
      eval.channels != train.channels || eval.height != train.height || eval.width != train.width) {
    throw ValidationError("checkpoint architecture does not match the dataset geometry");
  }
  if (eval.class_count != train.class_count) {
    throw ValidationError("train and eval datasets disagree on the class count");
  }
  const AugmentPolicy norm = training_policy(train);
  const Matrix train_h = encode(params, normalized_images(train, norm));
  const Matrix eval_h = encode(params, normalized_images(eval, norm));
  const std::vector<int> train_y = labels_of(train);
  const std::vector<int> eval_y = labels_of(eval);

  LinearEvalResult r;
  r.probe = train_probe(train_h, train_y, train.class_count, settings);
  r.train_top1 = top1_accuracy(argmax_rows(r.probe.logits(train_h)), train_y);
  const std::vector<int> pred = argmax_rows(r.probe.logits(eval_h));
  r.top1 = top1_accuracy(pred, eval_y);
  r.group_accuracy = group_accuracy(pred, eval_y, biases_of(eval), eval.class_count, eval.bias_count);
  r.unbiased_acc = r.group_accuracy.mean();
  return r;
}

double ntxent_eval(const ModelParams& params, const Dataset& data, const AugmentPolicy& policy,
                   double tau, int batch, std::uint64_t seed) {
  const std::vector<int> order = epoch_order(data.size(), seed, 0);
  double total = 0.0;
  long long anchors = 0;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t len = std::min<std::size_t>(batch, order.size() - start);
    if (len < 2) continue;
    const AugmentedBatch b =
        make_batch(data, std::span<const int>(order).subspan(start, len), seed, 0, policy);
    const ForwardOutput f = forward(params, b.images);
    const ContrastMasks masks = build_masks(b.labels, b.pairs);
    total += ntxent(similarity_unchecked(f.z, tau), masks).value;
    anchors += b.size();
  }
  if (anchors == 0) throw ValidationError("dataset too small for NT-Xent evaluation");
  return total / static_cast<double>(anchors);
}

PretrainResult pretrain(const TrainConfig& config, const Dataset& train, const Dataset* eval) {
  config.validate();
  if (static_cast<std::size_t>(config.batch) > train.size()) {
    throw ParameterError("batch of " + std::to_string(config.batch) + " exceeds dataset size " +
                         std::to_string(train.size()));
  }
  const auto start = Clock::now();
  const std::filesystem::path out_dir = config.output_dir;
  const bool write = !config.output_dir.empty();
  std::unique_ptr<MetricsWriter> writer;
  if (write) {
    std::filesystem::create_directories(out_dir);
    writer = std::make_unique<MetricsWriter>(out_dir / "metrics.csv", config.record_wall_time);
  }

  PretrainResult result{ModelParams::kaiming_uniform(arch_for(train), config.seed), {}, {}, 0};
  ModelParams& params = result.params;
  OptimizerState opt = make_optimizer(params.tensors(), config.base_lr, config.epochs, config.momentum);

  const bool supervised_head = config.loss == LossKind::cross_entropy;
  std::vector<Matrix> head;
  OptimizerState head_opt;
  if (supervised_head) {
    std::mt19937_64 rng(derive_seed(config.seed, 0, 0, 0x68656164ULL));
    const double bound = std::sqrt(6.0 / params.arch().rep_dim);
    std::uniform_real_distribution<double> dist(-bound, bound);
    head = {Matrix(train.class_count, params.arch().rep_dim), Matrix::Zero(train.class_count, 1)};
    for (Eigen::Index i = 0; i < head[0].size(); ++i) head[0].data()[i] = dist(rng);
    head_opt = make_optimizer(head, config.base_lr, config.epochs, config.momentum);
  }

  const AugmentPolicy policy = training_policy(train);
  const Dataset& eval_set = eval != nullptr ? *eval : train;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<int> order = epoch_order(train.size(), config.seed, epoch);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t first = 0; first < order.size(); first += config.batch) {
      const std::size_t len = std::min<std::size_t>(config.batch, order.size() - first);
      if (len < 2) continue;
      const AugmentedBatch b = make_batch(
          train, std::span<const int>(order).subspan(first, len), config.seed, epoch, policy);
      const ForwardOutput f = forward(params, b.images);
      const double anchors = static_cast<double>(b.size());

      Gradients grads;
      double value = 0.0;
      if (supervised_head) {
        Matrix logits = f.h * head[0].transpose();
        logits.rowwise() += head[1].col(0).transpose();
        const LossOutput ce = cross_entropy(logits, b.labels);
        value = ce.value;
        const Matrix dh = ce.grad * head[0];
        const std::vector<Matrix> head_grads = {ce.grad.transpose() * f.h,
                                                Matrix(ce.grad.colwise().sum().transpose())};
        grads = backward(params, f.cache, Matrix::Zero(f.z.rows(), f.z.cols()), &dh);
        if (std::isfinite(value)) sgd_update(head, head_grads, head_opt, epoch);
      } else {
        const ContrastMasks masks = build_masks(b.labels, b.pairs);
        const LossOutput loss = contrastive_loss(config, similarity_unchecked(f.z, config.tau), masks);
        value = loss.value / anchors;
        result.skipped_anchors += loss.skipped_anchors;
        if (std::isfinite(value)) grads = backward(params, f.cache, loss.grad / anchors);
      }
      if (!std::isfinite(value)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch + 1) + " batch " +
                             std::to_string(batches));
      }
      sgd_step(params, grads, opt, epoch);
      loss_sum += value;
      ++batches;
    }

    MetricsRow row;
    row.epoch = epoch + 1;
    row.train_loss = batches > 0 ? loss_sum / batches : 0.0;
    row.lr = opt.lr(epoch);
    const bool evaluate = std::find(config.eval_epochs.begin(), config.eval_epochs.end(),
                                    row.epoch) != config.eval_epochs.end();
    if (evaluate) {
      const LinearEvalResult le = linear_eval(params, train, eval_set, probe_settings(config));
      row.top1 = le.top1;
      row.unbiased_acc = le.unbiased_acc;
      if (write) save_checkpoint(out_dir / epoch_checkpoint_name(row.epoch), params);
    }
    row.wall_seconds = seconds_since(start);
    result.metrics.push_back(row);
    if (writer) writer->append(row);
  }

  if (result.skipped_anchors > 0) {
    result.warnings.push_back(std::to_string(result.skipped_anchors) +
                              " anchors had no context negatives and contributed zero loss");
  }
  if (write) save_checkpoint(out_dir / "checkpoint.ctxc", params);
  return result;
}

PretrainResult pretrain(const TrainConfig& config) {
  if (config.dataset.empty()) throw ValidationError("config.dataset is required");
  const Dataset train = load_dataset(config.dataset);
  if (config.eval_dataset.empty()) return pretrain(config, train, nullptr);
  const Dataset eval = load_dataset(config.eval_dataset);
  return pretrain(config, train, &eval);
}

SweepAxis parse_axis(std::string_view tag) {
  if (tag == "lambda") return SweepAxis::lambda;
  if (tag == "batch" || tag == "batch_size") return SweepAxis::batch_size;
  throw ParameterError("unknown sweep axis '" + std::string(tag) + "'");
}

std::vector<SweepRow> sweep(const TrainConfig& base, SweepAxis axis, std::span<const double> values,
                            const Dataset& train, const Dataset& eval) {
  if (values.empty()) throw ParameterError("sweep needs at least one value");
  std::vector<SweepRow> rows;
  for (double v : values) {
    TrainConfig c = base;
    char tag[64];
    if (axis == SweepAxis::lambda) {
      c.loss = LossKind::contex;
      c.lambda = v;
      std::snprintf(tag, sizeof(tag), "lambda_%.4g", v);
    } else {
      c.batch = static_cast<int>(std::lround(v));
      std::snprintf(tag, sizeof(tag), "batch_%d", c.batch);
    }
    if (!base.output_dir.empty()) c.output_dir = (std::filesystem::path(base.output_dir) / tag).string();
    const auto start = Clock::now();
    const PretrainResult pr = pretrain(c, train, &eval);
    const LinearEvalResult le = linear_eval(pr.params, train, eval, probe_settings(c));
    rows.push_back({v, le.top1, le.unbiased_acc, seconds_since(start)});
  }
  return rows;
}

std::string format_sweep_csv(SweepAxis axis, std::span<const SweepRow> rows, bool record_wall_time) {
  std::string out = axis == SweepAxis::lambda ? "lambda" : "batch_size";
  out += ",top1,unbiased_acc,wall_seconds\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g\n", r.value, r.top1, r.unbiased_acc,
                  record_wall_time ? r.wall_seconds : 0.0);
    out += buf;
  }
  return out;
}

}  // namespace contex
