#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "contex/losses.hpp"
#include "json.hpp"

namespace contex {

enum class LossKind { ntxent, supcon, contex, cross_entropy };

LossKind parse_loss(std::string_view tag);
std::string_view to_string(LossKind kind);

/// Pretraining and evaluation settings. JSON keys mirror the field names;
/// unknown keys are rejected.
struct TrainConfig {
  LossKind loss = LossKind::contex;
  double lambda = 0.7;
  double tau = 0.1;
  PartBVariant variant = PartBVariant::literal;
  int batch = 128;
  int epochs = 50;
  double base_lr = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  std::string dataset;
  std::string eval_dataset;
  std::string output_dir;
  int probe_epochs = 30;
  int probe_batch = 256;
  // Epochs (1-based) after which a probe is trained from scratch and a checkpoint is kept.
  std::vector<int> eval_epochs;
  // When false the wall_seconds columns are written as 0 so outputs are byte-reproducible.
  bool record_wall_time = true;

  void validate() const;
};

TrainConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const TrainConfig& config);
TrainConfig load_config(const std::filesystem::path& path);

}  // namespace contex
