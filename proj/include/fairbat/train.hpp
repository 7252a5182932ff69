#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairbat/attack.hpp"
#include "fairbat/dataset.hpp"
#include "fairbat/losses.hpp"
#include "fairbat/model.hpp"

namespace fairbat {

enum class TrainMethod { PgdAt, Trades, Bat, BatAblationFixedSteps };

std::string method_name(TrainMethod m);
TrainMethod method_from_name(const std::string& s);
std::string target_mode_name(TargetMode m);
TargetMode target_mode_from_name(const std::string& s);

struct TrainConfig {
  TrainMethod method = TrainMethod::Bat;
  float beta = 6.0f;          // source-class balancing weight
  float alpha_target = 1.0f;  // target-class balancing weight
  int epochs = 10;
  int batch_size = 64;
  float lr = 0.1f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  bool lr_step_decay = true;  // /10 at 50% and 75% of epochs
  AttackConfig attack;        // training-time attack
  AttackConfig eval_attack;   // robust-accuracy snapshots
  uint64_t seed = 0;
  // Robust accuracy is evaluated every `snapshot_interval` epochs (0 = final
  // epoch only); clean accuracy and losses are recorded every epoch.
  int snapshot_interval = 0;
  TargetMode target_mode = TargetMode::Both;  // bat / ablation only

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
  int epoch = 0;
  double total_loss = 0.0;
  double source_loss = 0.0;
  double target_loss = 0.0;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  bool has_robust = false;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  void write_csv(const std::string& path) const;
};

class TrainError : public Error {
 public:
  using Error::Error;
};

// Mini-batch SGD over the configured method's loss; fully deterministic per
// seed. Throws TrainError("non-finite loss at epoch E") on divergence.
std::pair<Model, TrainHistory> train(const TrainConfig& cfg,
                                     const ModelSpec& spec, const Dataset& ds);

// Fraction of the dataset classified correctly, clean or under attack.
double clean_accuracy(const Model& model, const Dataset& ds);
double robust_accuracy(const Model& model, const Dataset& ds,
                       const AttackConfig& eval_attack, uint64_t seed);

}  // namespace fairbat
