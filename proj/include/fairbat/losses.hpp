#pragma once

#include <vector>

#include "fairbat/attack.hpp"
#include "fairbat/dataset.hpp"
#include "fairbat/model.hpp"
#include "fairbat/ops.hpp"

namespace fairbat {

// Batch mean of -log softmax(logits)[y].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& y);

// Batch mean of KL(softmax(p_logits) || softmax(q_logits)). Gradients flow
// through both arguments; detach an input upstream to stop one side.
Tensor kl_div(const Tensor& p_logits, const Tensor& q_logits);

// Batch mean of KL(U || softmax(logits)) with probabilities floored at 1e-12:
// -ln K - (1/K) sum_k log softmax(logits)_k per row.
Tensor kl_uniform(const Tensor& logits);

// Which operands feed the target-class (uniformity) regularizer.
enum class TargetMode { None, BoundaryClean, BoundaryAdv, FixedAdv, Both };

// Batched boundary pairs for one mini-batch, one search per sample.
struct BoundaryBatch {
  Tensor x_clean;  // [m, ...]
  Tensor x_adv;    // [m, ...]
  std::vector<int> steps_used;
  std::vector<bool> success;
};
BoundaryBatch boundary_search_batch(const Model& model, const Batch& batch,
                                    const AttackConfig& cfg,
                                    std::span<const uint64_t> sample_seeds);

// CE(f(pgd_CE(x, y)), y)
Tensor loss_pgd_at(const Model& model, const Batch& batch,
                   const AttackConfig& cfg,
                   std::span<const uint64_t> sample_seeds);

// CE(f(x), y) + beta * KL(f(x) || f(x_adv)), x_adv from fixed-step KL-PGD.
Tensor loss_trades(const Model& model, const Batch& batch, float beta,
                   const AttackConfig& cfg,
                   std::span<const uint64_t> sample_seeds);

// CE(f(x_clean^phi), y) + beta * KL(f(x) || f(x_adv^phi))
Tensor loss_source_class(const Model& model, const Tensor& x,
                         const Tensor& x_clean_phi, const Tensor& x_adv_phi,
                         const std::vector<int>& y, float beta);

// KL(U || f(x_clean^phi)) + KL(U || f(x_adv^phi))
Tensor loss_target_class(const Model& model, const Tensor& x_clean_phi,
                         const Tensor& x_adv_phi);

struct BatLossParts {
  Tensor total;
  double source = 0.0;
  double target = 0.0;
};

// Full objective: source + alpha * target on shared boundary pairs. The
// target operands follow `mode`; FixedAdv additionally runs a fixed-step
// KL-PGD. `fixed_source` switches the source term to the fixed-step form
// (ablation of the boundary search).
BatLossParts loss_bat_total(const Model& model, const Batch& batch, float beta,
                            float alpha, const AttackConfig& cfg,
                            TargetMode mode, bool fixed_source,
                            std::span<const uint64_t> sample_seeds);

}  // namespace fairbat
