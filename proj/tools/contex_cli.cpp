// Command-line front end: dataset generation, pretraining, evaluation and
// the gradient / bound verification suites.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "contex/bounds.hpp"
#include "contex/config.hpp"
#include "contex/dataset.hpp"
#include "contex/diagnostics.hpp"
#include "contex/errors.hpp"
#include "contex/model.hpp"
#include "contex/protocols.hpp"

namespace {

constexpr double kGradientTolerance = 1e-5;

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw contex::ValidationError("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contex: contrastive loss workbench"};
  app.require_subcommand(1);

  contex::BiasedDatasetSpec gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a biased shape dataset");
  gen_cmd->add_option("--classes", gen.class_count, "Number of target classes")->capture_default_str();
  gen_cmd->add_option("--biases", gen.bias_count, "Number of background colors")->capture_default_str();
  gen_cmd->add_option("--rho", gen.rho, "Target-bias correlation")->capture_default_str();
  gen_cmd->add_option("--count", gen.per_class, "Samples per class")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--height", gen.height)->capture_default_str();
  gen_cmd->add_option("--width", gen.width)->capture_default_str();
  gen_cmd->add_option("--channels", gen.channels)->capture_default_str();
  gen_cmd->add_option("--out", gen_out, "Output dataset file")->required();

  std::string config_path;
  auto* pre_cmd = app.add_subcommand("pretrain", "Pretrain encoder and projection head");
  pre_cmd->add_option("--config", config_path, "JSON training config")->required();

  std::string ckpt, data, eval_data, le_config;
  int probe_epochs = 30, probe_batch = 256;
  std::uint64_t probe_seed = 0;
  auto* le_cmd = app.add_subcommand("linear-eval", "Train a linear probe on frozen features");
  le_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  le_cmd->add_option("--data", data, "Probe training dataset")->required();
  le_cmd->add_option("--eval-data", eval_data, "Evaluation dataset (defaults to --data)");
  le_cmd->add_option("--probe-epochs", probe_epochs)->capture_default_str();
  le_cmd->add_option("--probe-batch", probe_batch)->capture_default_str();
  le_cmd->add_option("--seed", probe_seed)->capture_default_str();

  std::string norm_data;
  double tau = 0.1;
  int nt_batch = 128;
  std::uint64_t nt_seed = 0;
  auto* nt_cmd = app.add_subcommand("ntxent-eval", "Mean NT-Xent per anchor with frozen weights");
  nt_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  nt_cmd->add_option("--data", data, "Dataset to augment and score")->required();
  nt_cmd->add_option("--norm-data", norm_data, "Dataset supplying normalization statistics");
  nt_cmd->add_option("--tau", tau)->capture_default_str();
  nt_cmd->add_option("--batch", nt_batch)->capture_default_str();
  nt_cmd->add_option("--seed", nt_seed)->capture_default_str();

  int grad_trials = 200;
  std::uint64_t suite_seed = 0;
  auto* grad_cmd = app.add_subcommand("check-gradients", "Finite-difference check of every loss kernel");
  grad_cmd->add_option("--trials", grad_trials)->capture_default_str();
  grad_cmd->add_option("--seed", suite_seed)->capture_default_str();

  int bound_trials = 1000;
  std::string bound_out;
  auto* bound_cmd = app.add_subcommand("check-bounds", "Monte-Carlo check of the bound ordering");
  bound_cmd->add_option("--trials", bound_trials)->capture_default_str();
  bound_cmd->add_option("--seed", suite_seed)->capture_default_str();
  bound_cmd->add_option("--out", bound_out, "CSV path (stdout when omitted)");

  std::string axis_tag, sweep_out;
  std::vector<double> values;
  auto* sweep_cmd = app.add_subcommand("sweep", "Pretrain + linear eval for each axis value");
  sweep_cmd->add_option("--axis", axis_tag, "lambda or batch")->required();
  sweep_cmd->add_option("--values", values, "Axis values")->required();
  sweep_cmd->add_option("--config", config_path, "Base JSON training config")->required();
  sweep_cmd->add_option("--out", sweep_out, "CSV path (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) {
      const contex::Dataset d = contex::generate(gen);
      contex::save_dataset(gen_out, d);
      std::cerr << "wrote " << d.size() << " samples to " << gen_out << "\n";
    } else if (*pre_cmd) {
      const contex::TrainConfig config = contex::load_config(config_path);
      const contex::PretrainResult r = contex::pretrain(config);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
      const auto& last = r.metrics.back();
      std::printf("epochs=%d final_train_loss=%.6f\n", last.epoch, last.train_loss);
    } else if (*le_cmd) {
      const contex::ModelParams params = contex::load_checkpoint(ckpt);
      const contex::Dataset train = contex::load_dataset(data);
      const contex::Dataset eval = eval_data.empty() ? train : contex::load_dataset(eval_data);
      contex::ProbeSettings s;
      s.epochs = probe_epochs;
      s.batch = probe_batch;
      s.seed = probe_seed;
      const contex::LinearEvalResult r = contex::linear_eval(params, train, eval, s);
      std::printf("top1=%.6f unbiased_acc=%.6f train_top1=%.6f\n", r.top1, r.unbiased_acc,
                  r.train_top1);
    } else if (*nt_cmd) {
      const contex::ModelParams params = contex::load_checkpoint(ckpt);
      const contex::Dataset d = contex::load_dataset(data);
      const contex::AugmentPolicy policy =
          contex::training_policy(norm_data.empty() ? d : contex::load_dataset(norm_data));
      std::printf("ntxent_per_anchor=%.6f\n", contex::ntxent_eval(params, d, policy, tau, nt_batch, nt_seed));
    } else if (*grad_cmd) {
      bool ok = true;
      for (const auto& k : contex::gradient_suite(grad_trials, suite_seed)) {
        const bool pass = k.max_rel_error <= kGradientTolerance;
        ok = ok && pass;
        std::printf("%-20s trials=%d max_rel_error=%.3e %s\n", k.kernel.c_str(), k.trials,
                    k.max_rel_error, pass ? "PASS" : "FAIL");
      }
      return ok ? 0 : 1;
    } else if (*bound_cmd) {
      std::string csv = "trial_id,parta_bound,ntxent_bound,holds\n";
      int violations = 0;
      char buf[128];
      for (const auto& t : contex::bounds_suite(bound_trials, suite_seed)) {
        std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%d\n", t.trial, t.parta_bound,
                      t.ntxent_bound, t.holds ? 1 : 0);
        csv += buf;
        violations += !t.holds;
      }
      write_text(bound_out, csv);
      std::cerr << violations << " violations in " << bound_trials << " trials\n";
      return violations == 0 ? 0 : 1;
    } else if (*sweep_cmd) {
      const contex::TrainConfig base = contex::load_config(config_path);
      const contex::SweepAxis axis = contex::parse_axis(axis_tag);
      if (base.dataset.empty()) throw contex::ValidationError("config.dataset is required");
      const contex::Dataset train = contex::load_dataset(base.dataset);
      const contex::Dataset eval =
          base.eval_dataset.empty() ? train : contex::load_dataset(base.eval_dataset);
      const auto rows = contex::sweep(base, axis, values, train, eval);
      write_text(sweep_out, contex::format_sweep_csv(axis, rows, base.record_wall_time));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
