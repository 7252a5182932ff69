#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairbat/attack.hpp"
#include "fairbat/dataset.hpp"
#include "fairbat/model.hpp"

namespace fairbat {

struct ClassErrors {
  int n_classes = 0;
  std::vector<double> std_err;   // clean misclassification rate per class
  std::vector<double> rob_err;   // rate under the evaluation attack
  std::vector<double> bndy_err;  // rob - std, per class
  std::vector<int64_t> counts;

  // For arithmetic checks and report replay; bndy is derived.
  static ClassErrors from_rates(std::vector<double> std_rates,
                                std::vector<double> rob_rates,
                                std::vector<int64_t> counts = {});
};

struct Diagnostics {
  std::vector<double> avg_attack_steps;  // per class; empty if not measured
  std::vector<double> target_dist;       // over K classes; empty if not measured
  double target_kl_uniform = 0.0;
  int64_t target_successes = 0;
};

struct FairnessReport {
  double avg_std = 0.0, worst_std = 0.0;
  double avg_bndy = 0.0, worst_bndy = 0.0;
  double avg_rob = 0.0, worst_rob = 0.0;
  ClassErrors per_class;
  Diagnostics diag;

  nlohmann::json to_json() const;
  void write_json(const std::string& path) const;
  // class,std_err,rob_err,bndy_err rows plus AVG and WORST summary rows.
  void write_csv(const std::string& path) const;
};

struct ConfusionMatrix {
  int n_classes = 0;
  std::vector<int64_t> counts;  // row-major K x K; (i,j) = true i predicted j

  int64_t& at(int i, int j) { return counts[i * n_classes + j]; }
  int64_t at(int i, int j) const { return counts[i * n_classes + j]; }
  std::vector<int64_t> row_sums() const;
  int64_t trace() const;
  void write_csv(const std::string& path) const;
};

struct TargetDistribution {
  std::vector<double> probs;     // over K classes, sums to 1
  double kl_to_uniform = 0.0;    // KL(p || U) = sum p ln(K p)
  int64_t successes = 0;
  std::vector<int64_t> raw_counts;
};

// Clean and attacked error rates per class; throws if any class is empty.
ClassErrors class_errors(const Model& model, const Dataset& ds,
                         const AttackConfig& eval_attack, uint64_t seed);

// Aggregates per-class errors (equal class weight) with per-metric maxima.
FairnessReport fairness_report(const ClassErrors& errors,
                               const Diagnostics& diag = {});

// Predictions after exactly `at_step` PGD steps (default: all of them).
ConfusionMatrix confusion_matrix(const Model& model, const Dataset& ds,
                                 const AttackConfig& eval_attack, uint64_t seed,
                                 std::optional<int> at_step = std::nullopt);

// Class-wise mean of attack_step_count (capped counts included).
std::vector<double> avg_attack_steps(const Model& model, const Dataset& ds,
                                     const AttackConfig& longrun, uint64_t seed);

// Distribution of predicted classes among successfully attacked samples.
// Throws "no adversarial targets" when every attack fails.
TargetDistribution target_distribution(const Model& model, const Dataset& ds,
                                       const AttackConfig& eval_attack,
                                       uint64_t seed);

// Spearman rank correlation with average-rank ties; throws on constant input.
double spearman(std::span<const double> xs, std::span<const double> ys);

}  // namespace fairbat
