#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "fairbat/model.hpp"
#include "fairbat/tensor.hpp"

namespace fairbat {

enum class AttackLoss { CrossEntropy, KlToClean };

struct AttackConfig {
  float eps = 8.0f / 255.0f;       // l-inf budget in pixel units
  float step_size = 2.0f / 255.0f;
  int max_steps = 10;
  float random_start_scale = 0.001f;  // xi; must not exceed eps
  AttackLoss loss = AttackLoss::CrossEntropy;
  bool sign_step = true;  // raw-gradient steps available as a switch

  void validate() const;
  nlohmann::json to_json() const;
  static AttackConfig from_json(const nlohmann::json& j);
  // Convenience: a copy with eps (and xi, if now violating xi <= eps) adjusted.
  AttackConfig with_eps(float new_eps) const;
};

struct BoundaryPair {
  Tensor x_clean;     // last correctly classified iterate (x^phi_clean)
  Tensor x_adv;       // first misclassified iterate (x^phi_adv)
  int steps_used = 0; // phi(x)
  bool success = false;
};

// Elementwise clamp of x_tilde into [x - eps, x + eps], then into [0,1].
Tensor project_linf(const Tensor& x_tilde, const Tensor& x, float eps);

// Batched PGD: exactly max_steps projected ascent steps from
// x + xi * N(0,I) (projected). CrossEntropy maximizes CE(f(x~), y);
// KlToClean maximizes KL(f(x) || f(x~)) with f(x) held constant.
// sample_seeds has one entry per batch row.
Tensor pgd(const Model& model, const Tensor& x, const std::vector<int>& y,
           const AttackConfig& cfg, std::span<const uint64_t> sample_seeds);
Tensor pgd(const Model& model, const Tensor& x, const std::vector<int>& y,
           const AttackConfig& cfg, uint64_t seed);

// Early-stopping KL-PGD over a single sample (batch dim 1): walks toward the
// decision boundary and returns the straddling pair of iterates.
BoundaryPair boundary_search(const Model& model, const Tensor& x, int y,
                             const AttackConfig& cfg, uint64_t seed);

// CE-PGD steps until first misclassification; max_steps if never reached,
// 0 if the clean start is already misclassified.
int attack_step_count(const Model& model, const Tensor& x, int y,
                      const AttackConfig& cfg, uint64_t seed);

}  // namespace fairbat
