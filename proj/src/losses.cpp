#include "fairbat/losses.hpp"

#include <cmath>

#include "fairbat/rng.hpp"
#include "fairbat/util.hpp"

namespace fairbat {

namespace {

constexpr float kLogProbFloor = -27.631021115928547f;  // ln(1e-12)

Tensor slice_sample(const Tensor& x, int64_t i) {
  std::vector<int> shape = x.shape();
  int64_t per = x.numel() / shape[0];
  shape[0] = 1;
  auto d = x.data();
  return Tensor::from_data(
      shape, std::vector<float>(d.begin() + i * per, d.begin() + (i + 1) * per));
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& y) {
  const int b = logits.shape()[0];
  Tensor picked = gather_rows(log_softmax(logits), y);
  return scalar_mul(sum(picked), -1.0f / static_cast<float>(b));
}

Tensor kl_div(const Tensor& p_logits, const Tensor& q_logits) {
  if (p_logits.shape() != q_logits.shape())
    throw TensorError("kl_div: shape mismatch " + shape_str(p_logits.shape()) +
                      " vs " + shape_str(q_logits.shape()));
  const int b = p_logits.shape()[0];
  Tensor lp = log_softmax(p_logits);
  Tensor lq = clamp_min(log_softmax(q_logits), kLogProbFloor);
  Tensor contrib = mul(exp(lp), sub(lp, lq));
  return scalar_mul(sum(contrib), 1.0f / static_cast<float>(b));
}

Tensor kl_uniform(const Tensor& logits) {
  const int K = logits.shape().back();
  const int64_t rows = logits.numel() / K;
  Tensor lp = clamp_min(log_softmax(logits), kLogProbFloor);
  float inv = -1.0f / static_cast<float>(K * rows);
  return scalar_add(scalar_mul(sum(lp), inv),
                    -std::log(static_cast<float>(K)));
}

BoundaryBatch boundary_search_batch(const Model& model, const Batch& batch,
                                    const AttackConfig& cfg,
                                    std::span<const uint64_t> sample_seeds) {
  const int64_t m = static_cast<int64_t>(batch.y.size());
  BoundaryBatch out;
  out.x_clean = batch.x.clone();
  out.x_adv = batch.x.clone();
  out.steps_used.assign(m, 0);
  out.success.assign(m, false);
  int64_t per = batch.x.numel() / m;
  auto clean = out.x_clean.mutable_data();
  auto adv = out.x_adv.mutable_data();
  parallel_for(m, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      BoundaryPair pair = boundary_search(model, slice_sample(batch.x, i),
                                          batch.y[i], cfg, sample_seeds[i]);
      auto c = pair.x_clean.data();
      auto a = pair.x_adv.data();
      std::copy(c.begin(), c.end(), clean.begin() + i * per);
      std::copy(a.begin(), a.end(), adv.begin() + i * per);
      out.steps_used[i] = pair.steps_used;
      out.success[i] = pair.success;
    }
  });
  return out;
}

Tensor loss_pgd_at(const Model& model, const Batch& batch,
                   const AttackConfig& cfg,
                   std::span<const uint64_t> sample_seeds) {
  AttackConfig ce_cfg = cfg;
  ce_cfg.loss = AttackLoss::CrossEntropy;
  Tensor x_adv = pgd(model, batch.x, batch.y, ce_cfg, sample_seeds);
  return cross_entropy(logits(model, x_adv), batch.y);
}

Tensor loss_trades(const Model& model, const Batch& batch, float beta,
                   const AttackConfig& cfg,
                   std::span<const uint64_t> sample_seeds) {
  if (beta < 0.0f) throw Error("loss_trades: beta must be >= 0");
  Tensor lx = logits(model, batch.x);
  Tensor ce = cross_entropy(lx, batch.y);
  if (beta == 0.0f || cfg.eps == 0.0f) return ce;
  AttackConfig kl_cfg = cfg;
  kl_cfg.loss = AttackLoss::KlToClean;
  Tensor x_adv = pgd(model, batch.x, batch.y, kl_cfg, sample_seeds);
  Tensor kl = kl_div(lx, logits(model, x_adv));
  return add(ce, scalar_mul(kl, beta));
}

Tensor loss_source_class(const Model& model, const Tensor& x,
                         const Tensor& x_clean_phi, const Tensor& x_adv_phi,
                         const std::vector<int>& y, float beta) {
  Tensor ce = cross_entropy(logits(model, x_clean_phi), y);
  if (beta == 0.0f) return ce;
  Tensor kl = kl_div(logits(model, x), logits(model, x_adv_phi));
  return add(ce, scalar_mul(kl, beta));
}

Tensor loss_target_class(const Model& model, const Tensor& x_clean_phi,
                         const Tensor& x_adv_phi) {
  return add(kl_uniform(logits(model, x_clean_phi)),
             kl_uniform(logits(model, x_adv_phi)));
}

BatLossParts loss_bat_total(const Model& model, const Batch& batch, float beta,
                            float alpha, const AttackConfig& cfg,
                            TargetMode mode, bool fixed_source,
                            std::span<const uint64_t> sample_seeds) {
  if (beta < 0.0f || alpha < 0.0f)
    throw Error("loss_bat_total: beta and alpha must be >= 0");
  AttackConfig kl_cfg = cfg;
  kl_cfg.loss = AttackLoss::KlToClean;

  const bool need_boundary = !fixed_source || mode == TargetMode::BoundaryClean ||
                             mode == TargetMode::BoundaryAdv ||
                             mode == TargetMode::Both;
  const bool need_fixed = fixed_source || mode == TargetMode::FixedAdv;

  BoundaryBatch pairs;
  if (need_boundary) pairs = boundary_search_batch(model, batch, kl_cfg, sample_seeds);
  Tensor x_adv_fixed;
  if (need_fixed) {
    std::vector<uint64_t> fixed_seeds(sample_seeds.size());
    for (size_t i = 0; i < fixed_seeds.size(); ++i)
      fixed_seeds[i] = mix_seed(sample_seeds[i], 0xF17EDULL);
    if (kl_cfg.eps == 0.0f)
      x_adv_fixed = batch.x.clone();
    else
      x_adv_fixed = pgd(model, batch.x, batch.y, kl_cfg, fixed_seeds);
  }

  BatLossParts parts;
  Tensor source =
      fixed_source
          ? loss_source_class(model, batch.x, batch.x, x_adv_fixed, batch.y, beta)
          : loss_source_class(model, batch.x, pairs.x_clean, pairs.x_adv,
                              batch.y, beta);

  Tensor target;
  switch (mode) {
    case TargetMode::None:
      break;
    case TargetMode::BoundaryClean:
      target = kl_uniform(logits(model, pairs.x_clean));
      break;
    case TargetMode::BoundaryAdv:
      target = kl_uniform(logits(model, pairs.x_adv));
      break;
    case TargetMode::FixedAdv:
      target = kl_uniform(logits(model, x_adv_fixed));
      break;
    case TargetMode::Both:
      target = loss_target_class(model, pairs.x_clean, pairs.x_adv);
      break;
  }

  parts.source = source.item();
  if (!target.defined() || alpha == 0.0f) {
    parts.total = source;
    parts.target = target.defined() ? target.item() : 0.0;
  } else {
    parts.target = target.item();
    parts.total = add(source, scalar_mul(target, alpha));
  }
  return parts;
}

}  // namespace fairbat
