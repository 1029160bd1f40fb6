#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "contex/bounds.hpp"
#include "contex/config.hpp"
#include "contex/dataset.hpp"
#include "contex/errors.hpp"
#include "contex/losses.hpp"
#include "contex/model.hpp"
#include "contex/protocols.hpp"

namespace py = pybind11;
using namespace contex;

namespace {

struct Inputs {
  SimilarityMatrix sim;
  ContrastMasks masks;
};

Inputs inputs(const Matrix& z, const std::vector<int>& labels, const std::vector<int>& pairs, double tau) {
  return {similarity(z, tau), build_masks(labels, pairs)};
}

py::tuple as_tuple(const LossOutput& out) {
  return py::make_tuple(out.value, out.grad, out.skipped_anchors);
}

py::dict as_dict(const BoundReport& r) {
  py::dict d;
  d["lse_lower"] = r.lse_lower;
  d["lse_value"] = r.lse_value;
  d["lse_upper"] = r.lse_upper;
  d["parta_bound"] = r.parta_bound;
  d["ntxent_bound"] = r.ntxent_bound;
  d["positives_per_class"] = r.positives_per_class;
  d["multi_positive"] = r.multi_positive;
  d["degenerate_anchors"] = r.degenerate_anchors;
  d["lse_bracket"] = r.holds.lse_bracket;
  d["positive_term"] = r.holds.positive_term;
  d["negative_term"] = r.holds.negative_term;
  d["bound_order"] = r.holds.bound_order;
  d["all_hold"] = r.all_hold();
  return d;
}

std::vector<py::dict> as_rows(const std::vector<MetricsRow>& rows) {
  std::vector<py::dict> out;
  for (const auto& r : rows) {
    py::dict d;
    d["epoch"] = r.epoch;
    d["train_loss"] = r.train_loss;
    d["lr"] = r.lr;
    d["top1"] = r.top1 ? py::cast(*r.top1) : py::none();
    d["unbiased_acc"] = r.unbiased_acc ? py::cast(*r.unbiased_acc) : py::none();
    d["wall_seconds"] = r.wall_seconds;
    out.push_back(d);
  }
  return out;
}

TrainConfig parse_config(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(doc);
}

}  // namespace

PYBIND11_MODULE(_contex, m) {
  m.doc() = "Supervised contrastive losses, bound checks and desk-scale training";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ArithmeticError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("similarity", [](const Matrix& z, double tau) { return similarity(z, tau).s; }, py::arg("z"),
        py::arg("tau") = 0.1);

  // Losses take unit-norm rows z (2N x D), labels and the self-positive map,
  // and return (value, grad wrt z, skipped anchors).
  m.def(
      "ntxent",
      [](const Matrix& z, const std::vector<int>& labels, const std::vector<int>& pairs, double tau) {
        const auto in = inputs(z, labels, pairs, tau);
        return as_tuple(ntxent(in.sim, in.masks));
      },
      py::arg("z"), py::arg("labels"), py::arg("pairs"), py::arg("tau") = 0.1);
  m.def(
      "supcon",
      [](const Matrix& z, const std::vector<int>& labels, const std::vector<int>& pairs, double tau) {
        const auto in = inputs(z, labels, pairs, tau);
        return as_tuple(supcon(in.sim, in.masks));
      },
      py::arg("z"), py::arg("labels"), py::arg("pairs"), py::arg("tau") = 0.1);
  m.def(
      "contex_a",
      [](const Matrix& z, const std::vector<int>& labels, const std::vector<int>& pairs, double tau) {
        const auto in = inputs(z, labels, pairs, tau);
        return as_tuple(contex_a(in.sim, in.masks));
      },
      py::arg("z"), py::arg("labels"), py::arg("pairs"), py::arg("tau") = 0.1);
  m.def(
      "contex_b",
      [](const Matrix& z, const std::vector<int>& labels, const std::vector<int>& pairs, double tau,
         const std::string& variant) {
        const auto in = inputs(z, labels, pairs, tau);
        return as_tuple(contex_b(in.sim, in.masks, parse_variant(variant)));
      },
      py::arg("z"), py::arg("labels"), py::arg("pairs"), py::arg("tau") = 0.1, py::arg("variant") = "literal");
  m.def(
      "contex",
      [](const Matrix& z, const std::vector<int>& labels, const std::vector<int>& pairs, double lam, double tau,
         const std::string& variant) {
        const auto in = inputs(z, labels, pairs, tau);
        return as_tuple(contex::contex(in.sim, in.masks, lam, parse_variant(variant)));
      },
      py::arg("z"), py::arg("labels"), py::arg("pairs"), py::arg("lam") = 0.7, py::arg("tau") = 0.1,
      py::arg("variant") = "literal");
  m.def(
      "cross_entropy",
      [](const Matrix& logits, const std::vector<int>& labels) { return as_tuple(cross_entropy(logits, labels)); },
      py::arg("logits"), py::arg("labels"));
  m.def(
      "anchor_gradient",
      [](const Matrix& z, const std::vector<int>& labels, const std::vector<int>& pairs, const std::string& which,
         int anchor, double tau) {
        const auto in = inputs(z, labels, pairs, tau);
        AnchorGradient kind;
        if (which == "part_a") {
          kind = AnchorGradient::part_a;
        } else if (which == "part_b") {
          kind = AnchorGradient::part_b;
        } else if (which == "supcon") {
          kind = AnchorGradient::supcon;
        } else {
          throw ParameterError("unknown anchor gradient '" + which + "'");
        }
        return paper_anchor_gradient(in.sim, in.masks, kind, anchor);
      },
      py::arg("z"), py::arg("labels"), py::arg("pairs"), py::arg("which"), py::arg("anchor"), py::arg("tau") = 0.1);

  m.def(
      "lemma1_witness",
      [](const std::vector<int>& labels, int class_count) { return lemma1_witness(labels, class_count); },
      py::arg("labels"), py::arg("class_count"));
  m.def("lse_bracket", [](const std::vector<double>& xs) { return as_dict(lse_bracket(xs)); }, py::arg("xs"));
  m.def(
      "compare_bounds",
      [](const Matrix& z, const std::vector<int>& labels, const std::vector<int>& pairs, double tau) {
        const auto in = inputs(z, labels, pairs, tau);
        return as_dict(compare_bounds(in.sim, in.masks));
      },
      py::arg("z"), py::arg("labels"), py::arg("pairs"), py::arg("tau") = 0.1);

  m.def(
      "generate_dataset",
      [](const std::filesystem::path& out, int classes, int biases, double rho, int count, std::uint64_t seed) {
        BiasedDatasetSpec s;
        s.class_count = classes;
        s.bias_count = biases;
        s.rho = rho;
        s.per_class = count;
        s.seed = seed;
        const Dataset d = generate(s);
        save_dataset(out, d);
        return d.size();
      },
      py::arg("out"), py::arg("classes") = 10, py::arg("biases") = 10, py::arg("rho") = 0.99,
      py::arg("count") = 500, py::arg("seed") = 0);
  m.def(
      "dataset_arrays",
      [](const std::filesystem::path& path) {
        const Dataset d = load_dataset(path);
        Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> images(d.size(),
                                                                                            d.image_size());
        std::vector<int> labels, biases;
        for (std::size_t i = 0; i < d.size(); ++i) {
          for (int k = 0; k < d.image_size(); ++k) images(i, k) = d.samples[i].image[k];
          labels.push_back(d.samples[i].label);
          biases.push_back(d.samples[i].bias);
        }
        return py::make_tuple(images, labels, biases, py::make_tuple(d.channels, d.height, d.width));
      },
      py::arg("path"));

  m.def(
      "pretrain",
      [](const std::string& config_json) {
        const TrainConfig c = parse_config(config_json);
        const PretrainResult r = [&] {
          py::gil_scoped_release release;
          return pretrain(c);
        }();
        py::dict d;
        d["metrics"] = as_rows(r.metrics);
        d["warnings"] = r.warnings;
        d["skipped_anchors"] = r.skipped_anchors;
        return d;
      },
      py::arg("config_json"));
  m.def(
      "linear_eval",
      [](const std::filesystem::path& ckpt, const std::filesystem::path& train, const std::filesystem::path& eval,
         int epochs, int batch, std::uint64_t seed) {
        ProbeSettings ps;
        ps.epochs = epochs;
        ps.batch = batch;
        ps.seed = seed;
        const auto r = linear_eval(load_checkpoint(ckpt), load_dataset(train), load_dataset(eval), ps);
        py::dict d;
        d["top1"] = r.top1;
        d["unbiased_acc"] = r.unbiased_acc;
        d["train_top1"] = r.train_top1;
        d["group_accuracy"] = r.group_accuracy;
        return d;
      },
      py::arg("ckpt"), py::arg("train"), py::arg("eval"), py::arg("epochs") = 30, py::arg("batch") = 256,
      py::arg("seed") = 0);
  m.def(
      "ntxent_eval",
      [](const std::filesystem::path& ckpt, const std::filesystem::path& data, const std::optional<std::filesystem::path>& norm,
         double tau, int batch, std::uint64_t seed) {
        const Dataset d = load_dataset(data);
        const AugmentPolicy policy = training_policy(norm ? load_dataset(*norm) : d);
        return ntxent_eval(load_checkpoint(ckpt), d, policy, tau, batch, seed);
      },
      py::arg("ckpt"), py::arg("data"), py::arg("norm_data") = py::none(), py::arg("tau") = 0.1,
      py::arg("batch") = 128, py::arg("seed") = 0);
}
