// Runs the ten acceptance criteria and prints one PASS/FAIL line for each.
//
//   acceptance [--work-dir DIR] [--only 1,2,...] [--strict]
//
// Exits non-zero when a criterion could not be evaluated (an exception), or
// when --strict is given and any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "contex/bounds.hpp"
#include "contex/config.hpp"
#include "contex/dataset.hpp"
#include "contex/losses.hpp"
#include "contex/model.hpp"
#include "contex/protocols.hpp"
#include "model_fd.hpp"
#include "oracles.hpp"

using namespace contex;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

constexpr double kTau = 0.1;

// ---------------------------------------------------------------------------
// 1-5: kernels, closed forms, oracles, bounds, model gradient

Outcome gradient_suite() {
  const auto start = Clock::now();
  const int sizes[] = {4, 8, 16, 32};
  const int dims[] = {4, 8, 16};
  std::mt19937_64 rng(1001);
  using Kernel = std::function<LossOutput(const SimilarityMatrix&, const ContrastMasks&)>;
  const std::vector<std::pair<std::string, Kernel>> kernels{
      {"ntxent", [](const auto& s, const auto& m) { return ntxent(s, m); }},
      {"supcon", [](const auto& s, const auto& m) { return supcon(s, m); }},
      {"contex_a", [](const auto& s, const auto& m) { return contex_a(s, m); }},
      {"contex_b_literal", [](const auto& s, const auto& m) { return contex_b(s, m, PartBVariant::literal); }},
      {"contex_b_infonce", [](const auto& s, const auto& m) { return contex_b(s, m, PartBVariant::infonce); }},
      {"contex_literal", [](const auto& s, const auto& m) { return contex::contex(s, m, 0.7, PartBVariant::literal); }},
      {"contex_infonce", [](const auto& s, const auto& m) { return contex::contex(s, m, 0.7, PartBVariant::infonce); }},
  };
  double worst = 0.0;
  std::string worst_kernel;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = sizes[trial % 4];
    const int d = dims[(trial / 4) % 3];
    const auto b = oracle::random_batch(n / 2, d, 2 + trial % 3, rng);
    const auto masks = build_masks(b.labels, b.pairs);
    for (const auto& [name, k] : kernels) {
      const auto out = k(similarity_unchecked(b.z, kTau), masks);
      const auto numeric = oracle::central_difference(
          [&](const Matrix& z) { return k(similarity_unchecked(z, kTau), masks).value; }, b.z, 1e-5);
      const double e = oracle::rel_error(out.grad, numeric);
      if (e > worst) {
        worst = e;
        worst_kernel = name;
      }
    }
    // Cross-entropy on logits of the same shape.
    std::vector<int> targets(n);
    for (int i = 0; i < n; ++i) targets[i] = i % d;
    const Matrix logits = b.z * 3.0;
    const auto ce = cross_entropy(logits, targets);
    const auto numeric = oracle::central_difference(
        [&](const Matrix& x) { return cross_entropy(x, targets).value; }, logits, 1e-5);
    const double e = oracle::rel_error(ce.grad, numeric);
    if (e > worst) {
      worst = e;
      worst_kernel = "cross_entropy";
    }
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-5 && secs < 60.0,
          "max rel error " + fmt("%.3g", worst) + " (" + worst_kernel + "), " + fmt("%.1f", secs) + " s"};
}

Outcome closed_forms() {
  std::mt19937_64 rng(2002);
  double worst = 0.0;
  int anchors = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto b = oracle::random_batch(3 + trial % 6, 4 + trial % 3 * 4, 2 + trial % 2, rng);
    const auto sim = similarity_unchecked(b.z, kTau);
    const auto masks = build_masks(b.labels, b.pairs);
    auto check = [&](AnchorGradient which, oracle::Summand kind, int i) {
      const Vector a = paper_anchor_gradient(sim, masks, which, i);
      const Vector n = oracle::anchor_partial(kind, b.z, b.labels, b.pairs, kTau, i, 1e-5);
      worst = std::max(worst, oracle::rel_error(Matrix(a.transpose()), Matrix(n.transpose())));
    };
    for (int i = 0; i < masks.size(); ++i) {
      check(AnchorGradient::part_b, oracle::Summand::infonce, i);
      check(AnchorGradient::supcon, oracle::Summand::supcon, i);
      if (masks.ctx_neg_count[i] > 0) check(AnchorGradient::part_a, oracle::Summand::part_a, i);
      ++anchors;
    }
  }
  return {worst <= 1e-6, "max rel error " + fmt("%.3g", worst) + " over " + std::to_string(anchors) + " anchors"};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(3003);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto b = oracle::random_batch(2 + trial % 8, 4 + trial % 3 * 4, 2 + trial % 3, rng);
    const auto sim = similarity_unchecked(b.z, kTau);
    const auto masks = build_masks(b.labels, b.pairs);
    auto cmp = [&](double got, oracle::Real want) {
      worst = std::max(worst, oracle::rel_error(got, static_cast<double>(want)));
    };
    cmp(ntxent(sim, masks).value, oracle::ntxent(b.z, b.pairs, kTau));
    cmp(supcon(sim, masks).value, oracle::supcon(b.z, b.labels, kTau));
    int skipped = 0;
    cmp(contex_a(sim, masks).value, oracle::contex_a(b.z, b.labels, kTau, &skipped));
    cmp(contex_b(sim, masks, PartBVariant::literal).value, oracle::contex_b_literal(b.z, b.pairs, kTau));
    std::vector<int> targets(b.labels.size());
    for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<int>(i) % b.z.cols();
    const Matrix logits = b.z * 4.0;
    cmp(cross_entropy(logits, targets).value, oracle::cross_entropy(logits, targets));
  }

  Matrix same = Matrix::Zero(4, 3);
  same.col(0).setOnes();
  const std::vector<int> pairs{1, 0, 3, 2};
  const auto sim = similarity(same, kTau);
  const auto two = build_masks(std::vector<int>{0, 0, 1, 1}, pairs);
  const auto one = build_masks(std::vector<int>{0, 0, 0, 0}, pairs);
  double golden = 0.0;
  golden = std::max(golden, oracle::rel_error(ntxent(sim, two).value, 4.0 * std::log(3.0)));
  golden = std::max(golden, oracle::rel_error(supcon(sim, one).value, 4.0 * std::log(3.0)));
  golden = std::max(golden, oracle::rel_error(contex_a(sim, two).value, 4.0 * std::log(2.0)));
  golden = std::max(golden, oracle::rel_error(contex_b(sim, two, PartBVariant::literal).value, -4.0 * std::log(1.5)));
  return {worst <= 1e-10 && golden <= 1e-12,
          "max rel error " + fmt("%.3g", worst) + ", golden values within " + fmt("%.3g", golden)};
}

Outcome bound_suite() {
  const auto start = Clock::now();
  std::mt19937_64 rng(4004);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 64);
  std::uniform_real_distribution<double> spread(0.1, 50.0);
  int bracket_fail = 0;
  for (int k = 0; k < 10000; ++k) {
    std::vector<double> xs(len(rng));
    const double s = spread(rng);
    for (auto& x : xs) x = s * g(rng);
    bracket_fail += !lse_bracket(xs).holds.lse_bracket;
  }

  int pigeon_fail = 0;
  for (int m = 1; m <= 6; ++m) {
    const int n = m + 1;
    long long total = 1;
    for (int k = 0; k < n; ++k) total *= m;
    std::vector<int> labels(n);
    for (long long code = 0; code < total; ++code) {
      long long c = code;
      for (int k = 0; k < n; ++k) {
        labels[k] = static_cast<int>(c % m);
        c /= m;
      }
      const auto w = lemma1_witness(labels, m);
      pigeon_fail += !w || std::count(labels.begin(), labels.end(), *w) < 2;
    }
  }

  int violations = 0, batches = 0;
  while (batches < 1000) {
    const int classes = 2 + batches % 5;
    const auto b = oracle::random_batch(classes + 1 + batches % 6, 4 + batches % 3 * 4, classes, rng);
    const auto r = compare_bounds(similarity(b.z, kTau), build_masks(b.labels, b.pairs));
    if (!r.multi_positive) continue;
    ++batches;
    violations += !r.all_hold() || !(r.parta_bound <= r.ntxent_bound);
  }
  const double secs = seconds_since(start);
  return {bracket_fail == 0 && pigeon_fail == 0 && violations == 0 && secs < 60.0,
          "bracket failures " + std::to_string(bracket_fail) + ", pigeonhole misses " +
              std::to_string(pigeon_fail) + ", compare_bounds violations " + std::to_string(violations) +
              "/1000, " + fmt("%.1f", secs) + " s"};
}

Outcome model_gradient() {
  const ArchSpec arch = model_fd::tiny_arch();
  const auto params = model_fd::random_params(arch, 55);
  std::mt19937_64 rng(5005);
  model_fd::Problem prob;
  prob.images = model_fd::random_images(8, arch, rng);
  prob.masks = build_masks(std::vector<int>{0, 0, 1, 1, 0, 0, 2, 2}, std::vector<int>{1, 0, 3, 2, 5, 4, 7, 6});
  double worst = 0.0;
  std::size_t count = 0;
  for (double lambda : {0.0, 0.5, 1.0}) {
    for (auto v : {PartBVariant::literal, PartBVariant::infonce}) {
      prob.lambda = lambda;
      prob.variant = v;
      const auto r = model_fd::full_sweep(prob, params, 1e-5);
      worst = std::max(worst, r.max_rel_error);
      count = r.parameters;
    }
  }
  return {worst <= 1e-5 && count <= 2000,
          std::to_string(count) + " parameters, max rel error " + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------------------
// 6-10: training experiments

struct Data {
  Dataset train;
  Dataset eval;
  Dataset heldout;
};

Data prepare(const fs::path& dir) {
  BiasedDatasetSpec s;
  s.rho = 0.99;
  s.seed = 1;
  Data d;
  d.train = generate(s);
  // Balanced: every (class, color) cell populated.
  s.rho = 0.1;
  s.per_class = 200;
  s.seed = 2;
  d.eval = generate(s);
  s.rho = 0.99;
  s.seed = 3;
  d.heldout = generate(s);
  save_dataset(dir / "train.ctxd", d.train);
  save_dataset(dir / "eval.ctxd", d.eval);
  save_dataset(dir / "heldout.ctxd", d.heldout);
  return d;
}

struct BiasRuns {
  std::vector<ModelParams> contex_params, supcon_params;
  std::vector<double> contex_acc, supcon_acc;
  double seconds = 0.0;
};

BiasRuns run_bias(const Data& d, const fs::path& dir) {
  BiasRuns r;
  const auto start = Clock::now();
  for (std::uint64_t seed : {1, 2, 3}) {
    for (LossKind loss : {LossKind::contex, LossKind::supcon}) {
      TrainConfig c;
      c.loss = loss;
      c.seed = seed;
      c.output_dir = (dir / (std::string(to_string(loss)) + "_s" + std::to_string(seed))).string();
      auto pr = pretrain(c, d.train, &d.eval);
      const double acc = linear_eval(pr.params, d.train, d.eval, probe_settings(c)).unbiased_acc;
      std::cout << "  " << to_string(loss) << " seed " << seed << ": unbiased " << fmt("%.4f", acc) << std::endl;
      auto& params = loss == LossKind::contex ? r.contex_params : r.supcon_params;
      auto& accs = loss == LossKind::contex ? r.contex_acc : r.supcon_acc;
      params.push_back(std::move(pr.params));
      accs.push_back(acc);
    }
  }
  r.seconds = seconds_since(start);
  return r;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

Outcome bias_direction(const BiasRuns& r) {
  const double gap = 100.0 * (mean(r.contex_acc) - mean(r.supcon_acc));
  return {gap >= 2.0 && r.seconds < 20.0 * 60.0,
          "contex " + fmt("%.2f", 100.0 * mean(r.contex_acc)) + "% vs supcon " +
              fmt("%.2f", 100.0 * mean(r.supcon_acc)) + "%, gap " + fmt("%.2f", gap) + " pp, " +
              fmt("%.0f", r.seconds) + " s"};
}

Outcome ntxent_direction(const BiasRuns& r, const Data& d) {
  const AugmentPolicy policy = training_policy(d.train);
  const TrainConfig c;
  int lower = 0;
  std::string detail;
  for (std::size_t k = 0; k < r.contex_params.size(); ++k) {
    const double a = ntxent_eval(r.contex_params[k], d.heldout, policy, c.tau, c.batch, 0);
    const double b = ntxent_eval(r.supcon_params[k], d.heldout, policy, c.tau, c.batch, 0);
    lower += a < b;
    detail += (k ? "; " : "") + std::string("seed ") + std::to_string(k + 1) + " contex " + fmt("%.4f", a) +
              " vs supcon " + fmt("%.4f", b);
  }
  return {lower == static_cast<int>(r.contex_params.size()), detail};
}

Outcome convergence(const Data& d, const fs::path& dir) {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    double top1[2] = {0.0, 0.0};
    int slot = 0;
    for (LossKind loss : {LossKind::contex, LossKind::supcon}) {
      TrainConfig c;
      c.loss = loss;
      c.seed = seed;
      c.batch = 32;
      c.eval_epochs = {10, 20, 30, 40, 50};
      c.output_dir = (dir / (std::string(to_string(loss)) + "_s" + std::to_string(seed))).string();
      const auto pr = pretrain(c, d.train, &d.eval);
      top1[slot++] = *pr.metrics[9].top1;
    }
    wins += top1[0] >= top1[1];
    detail += (seed > 1 ? "; " : "") + std::string("seed ") + std::to_string(seed) + " contex " +
              fmt("%.4f", top1[0]) + " vs supcon " + fmt("%.4f", top1[1]);
    std::cout << "  convergence seed " << seed << ": contex " << top1[0] << " supcon " << top1[1] << std::endl;
  }
  return {wins >= 2, std::to_string(wins) + "/3 seeds; " + detail};
}

Outcome lambda_sweep(const Data& d, const fs::path& dir) {
  std::vector<double> lambdas;
  for (int k = 0; k <= 10; ++k) lambdas.push_back(k / 10.0);
  TrainConfig c;
  c.seed = 1;
  const auto rows = sweep(c, SweepAxis::lambda, lambdas, d.train, d.eval);
  fs::create_directories(dir);
  std::ofstream(dir / "lambda_sweep.csv") << format_sweep_csv(SweepAxis::lambda, rows, true);
  std::size_t best = 0;
  std::string detail;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].unbiased_acc > rows[best].unbiased_acc) best = k;
    detail += (k ? " " : "") + fmt("%.1f", rows[k].value) + ":" + fmt("%.3f", rows[k].unbiased_acc);
  }
  return {best != 0 && best + 1 != rows.size(),
          "best lambda " + fmt("%.1f", rows[best].value) + " (" + detail + ")"};
}

Outcome determinism(const Data& d, const fs::path& dir) {
  for (const char* run : {"a", "b"}) {
    TrainConfig c;
    c.seed = 7;
    c.epochs = 3;
    c.eval_epochs = {3};
    c.record_wall_time = false;
    c.output_dir = (dir / run).string();
    pretrain(c, d.train, &d.eval);
  }
  int differing = 0;
  for (const char* f : {"checkpoint.ctxc", "checkpoint_e3.ctxc", "metrics.csv"}) {
    const auto a = slurp(dir / "a" / f);
    differing += a.empty() || a != slurp(dir / "b" / f);
  }
  return {differing == 0, std::to_string(differing) + " of 3 artifacts differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work_dir = "acceptance_runs";
  std::vector<int> only;
  bool strict = false;
  app.add_option("--work-dir", work_dir)->capture_default_str();
  app.add_option("--only", only, "Criteria to run")->delimiter(',')->check(CLI::Range(1, 10));
  app.add_flag("--strict", strict, "Exit non-zero when any criterion fails");
  CLI11_PARSE(app, argc, argv);

  const std::set<int> wanted(only.begin(), only.end());
  auto want = [&](int k) { return wanted.empty() || wanted.count(k) > 0; };
  const fs::path dir(work_dir);
  fs::create_directories(dir);

  const char* names[] = {"",
                         "gradient suite",
                         "closed-form anchor gradients",
                         "oracle equivalence",
                         "bound suite",
                         "end-to-end model gradient",
                         "bias direction",
                         "ntxent-eval direction",
                         "convergence direction",
                         "lambda sweep shape",
                         "determinism"};
  int passed = 0, failed = 0, errors = 0;
  auto report = [&](int k, const std::function<Outcome()>& run) {
    if (!want(k)) return;
    try {
      const Outcome o = run();
      (o.pass ? passed : failed)++;
      std::cout << "criterion " << k << " " << (o.pass ? "PASS" : "FAIL") << ": " << names[k] << " | "
                << o.detail << std::endl;
    } catch (const std::exception& e) {
      ++errors;
      std::cout << "criterion " << k << " FAIL: " << names[k] << " | error: " << e.what() << std::endl;
    }
  };

  report(1, gradient_suite);
  report(2, closed_forms);
  report(3, oracle_equivalence);
  report(4, bound_suite);
  report(5, model_gradient);

  if (want(6) || want(7) || want(8) || want(9) || want(10)) {
    const Data d = prepare(dir);
    if (want(6) || want(7)) {
      BiasRuns runs;
      bool ok = true;
      try {
        runs = run_bias(d, dir / "bias");
      } catch (const std::exception& e) {
        ok = false;
        for (int k : {6, 7}) {
          if (!want(k)) continue;
          ++errors;
          std::cout << "criterion " << k << " FAIL: " << names[k] << " | error: " << e.what() << std::endl;
        }
      }
      if (ok) {
        report(6, [&] { return bias_direction(runs); });
        report(7, [&] { return ntxent_direction(runs, d); });
      }
    }
    report(8, [&] { return convergence(d, dir / "convergence"); });
    report(9, [&] { return lambda_sweep(d, dir / "sweep"); });
    report(10, [&] { return determinism(d, dir / "determinism"); });
  }

  std::cout << passed << " passed, " << failed + errors << " failed" << std::endl;
  if (errors > 0) return 2;
  return strict && failed > 0 ? 1 : 0;
}
