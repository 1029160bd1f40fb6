#include "contex/config.hpp"

#include <fstream>
#include <set>

#include "contex/errors.hpp"

namespace contex {

LossKind parse_loss(std::string_view tag) {
  if (tag == "ntxent") return LossKind::ntxent;
  if (tag == "supcon") return LossKind::supcon;
  if (tag == "contex") return LossKind::contex;
  if (tag == "cross_entropy") return LossKind::cross_entropy;
  throw ParameterError("unknown loss '" + std::string(tag) + "'");
}

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::ntxent: return "ntxent";
    case LossKind::supcon: return "supcon";
    case LossKind::contex: return "contex";
    case LossKind::cross_entropy: return "cross_entropy";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("lambda must lie in [0, 1]");
  if (!(tau > 0.0)) throw ParameterError("tau must be positive");
  if (batch < 2) throw ParameterError("batch must hold at least 2 originals");
  if (epochs <= 0) throw ParameterError("epochs must be positive");
  if (!(base_lr >= 0.0)) throw ParameterError("base_lr must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must lie in [0, 1)");
  if (probe_epochs <= 0 || probe_batch <= 0) throw ParameterError("probe settings must be positive");
  for (int e : eval_epochs) {
    if (e <= 0 || e > epochs) throw ParameterError("eval epoch " + std::to_string(e) + " out of range");
  }
}

TrainConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("config must be a JSON object");
  static const std::set<std::string> known = {
      "loss", "lambda", "tau", "variant", "batch", "epochs", "base_lr", "momentum", "seed",
      "dataset", "eval_dataset", "output_dir", "probe_epochs", "probe_batch", "eval_epochs",
      "record_wall_time"};
  for (const auto& item : doc.items()) {
    if (!known.contains(item.key())) {
      throw ValidationError("unknown config key '" + item.key() + "'");
    }
  }
  TrainConfig c;
  try {
    if (doc.contains("loss")) c.loss = parse_loss(doc.at("loss").get<std::string>());
    if (doc.contains("variant")) c.variant = parse_variant(doc.at("variant").get<std::string>());
    if (doc.contains("lambda")) c.lambda = doc.at("lambda").get<double>();
    if (doc.contains("tau")) c.tau = doc.at("tau").get<double>();
    if (doc.contains("batch")) c.batch = doc.at("batch").get<int>();
    if (doc.contains("epochs")) c.epochs = doc.at("epochs").get<int>();
    if (doc.contains("base_lr")) c.base_lr = doc.at("base_lr").get<double>();
    if (doc.contains("momentum")) c.momentum = doc.at("momentum").get<double>();
    if (doc.contains("seed")) c.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("dataset")) c.dataset = doc.at("dataset").get<std::string>();
    if (doc.contains("eval_dataset")) c.eval_dataset = doc.at("eval_dataset").get<std::string>();
    if (doc.contains("output_dir")) c.output_dir = doc.at("output_dir").get<std::string>();
    if (doc.contains("probe_epochs")) c.probe_epochs = doc.at("probe_epochs").get<int>();
    if (doc.contains("probe_batch")) c.probe_batch = doc.at("probe_batch").get<int>();
    if (doc.contains("eval_epochs")) c.eval_epochs = doc.at("eval_epochs").get<std::vector<int>>();
    if (doc.contains("record_wall_time")) c.record_wall_time = doc.at("record_wall_time").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config type error: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"loss", std::string(to_string(c.loss))},
          {"lambda", c.lambda},
          {"tau", c.tau},
          {"variant", std::string(to_string(c.variant))},
          {"batch", c.batch},
          {"epochs", c.epochs},
          {"base_lr", c.base_lr},
          {"momentum", c.momentum},
          {"seed", c.seed},
          {"dataset", c.dataset},
          {"eval_dataset", c.eval_dataset},
          {"output_dir", c.output_dir},
          {"probe_epochs", c.probe_epochs},
          {"probe_batch", c.probe_batch},
          {"eval_epochs", c.eval_epochs},
          {"record_wall_time", c.record_wall_time}};
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(doc);
}

}  // namespace contex
