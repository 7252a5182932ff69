#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairbat/analysis.hpp"
#include "fairbat/dataset.hpp"
#include "fairbat/model.hpp"
#include "fairbat/train.hpp"

namespace fairbat {

// One self-describing training run: dataset source, model, train settings.
// The config is echoed back into the output directory so every run can be
// reproduced from its artifacts alone.
struct ExperimentConfig {
  uint64_t seed = 0;
  std::string output_dir;

  // Exactly one of: a FTDS file path, an inline mixture spec, or a named
  // built-in preset ("fairness_stress").
  std::string dataset_path;
  std::optional<MixtureSpec> mixture;
  std::string dataset_preset;
  std::vector<int> exclude_classes;

  ModelSpec model;
  TrainConfig train;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load_file(const std::string& path);

  Dataset resolve_dataset() const;
};

struct RunResult {
  Model model;
  TrainHistory history;
  std::string checkpoint_path;
  std::string history_path;
};

// Trains per the config, writes checkpoint.fbm, history.csv and config.json
// into output_dir (created if missing).
RunResult run_experiment(const ExperimentConfig& cfg);

}  // namespace fairbat
