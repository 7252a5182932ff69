#include "fairbat/attack.hpp"

#include <algorithm>
#include <cmath>

#include "fairbat/ops.hpp"
#include "fairbat/rng.hpp"

namespace fairbat {

namespace {

AttackLoss loss_from_name(const std::string& s) {
  if (s == "cross_entropy") return AttackLoss::CrossEntropy;
  if (s == "kl_to_clean") return AttackLoss::KlToClean;
  throw Error("attack config: unknown loss '" + s + "'");
}

std::string loss_name(AttackLoss l) {
  return l == AttackLoss::CrossEntropy ? "cross_entropy" : "kl_to_clean";
}

// Gradient of the attack objective wrt the input. The objective is summed
// (not averaged) over the batch so per-sample gradients are independent of
// batch composition. clean_probs, when given, selects the KL objective:
// KL(p_clean || f(x~)) = const - sum p_clean * log_softmax(f(x~)).
std::vector<float> input_grad(const Model& detached, const Tensor& x_tilde,
                              const std::vector<int>& y,
                              const Tensor* clean_probs) {
  Tensor xt = x_tilde.detached(true);
  Tensor ls = log_softmax(logits(detached, xt));
  Tensor loss = clean_probs
                    ? scalar_mul(sum(mul(*clean_probs, ls)), -1.0f)
                    : scalar_mul(sum(gather_rows(ls, y)), -1.0f);
  backward(loss);
  auto g = xt.grad();
  return std::vector<float>(g.begin(), g.end());
}

void ascend(std::span<float> x_tilde, std::span<const float> grad,
            float step_size, bool sign_step) {
  for (size_t i = 0; i < x_tilde.size(); ++i) {
    float d = grad[i];
    if (sign_step) d = (d > 0.0f) ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
    x_tilde[i] += step_size * d;
  }
}

void project_inplace(std::span<float> x_tilde, std::span<const float> x,
                     float eps) {
  for (size_t i = 0; i < x_tilde.size(); ++i) {
    float lo = std::max(0.0f, x[i] - eps);
    float hi = std::min(1.0f, x[i] + eps);
    x_tilde[i] = std::clamp(x_tilde[i], lo, hi);
  }
}

// x~ <- project(x + xi * N(0,I)), one RNG stream per sample.
Tensor random_start(const Tensor& x, float xi, float eps,
                    std::span<const uint64_t> sample_seeds) {
  Tensor xt = x.clone();
  if (xi <= 0.0f) return xt;
  int64_t per = x.numel() / static_cast<int64_t>(sample_seeds.size());
  auto d = xt.mutable_data();
  for (size_t s = 0; s < sample_seeds.size(); ++s) {
    Rng rng(mix_seed(sample_seeds[s], 0x6e6f697365ULL));
    for (int64_t i = 0; i < per; ++i)
      d[s * per + i] += xi * static_cast<float>(rng.normal());
  }
  project_inplace(xt.mutable_data(), x.data(), eps);
  return xt;
}

std::vector<uint64_t> derive_seeds(uint64_t seed, int64_t n) {
  std::vector<uint64_t> seeds(n);
  for (int64_t i = 0; i < n; ++i)
    seeds[i] = mix_seed(seed, static_cast<uint64_t>(i));
  return seeds;
}

Tensor clean_probs_of(const Model& detached, const Tensor& x) {
  Tensor p = softmax(logits(detached, x));
  return p.detached(false);
}

}  // namespace

void AttackConfig::validate() const {
  if (eps < 0.0f) throw Error("attack config: eps must be >= 0");
  if (!(step_size > 0.0f)) throw Error("attack config: step size must be positive");
  if (max_steps < 1) throw Error("attack config: max_steps must be >= 1");
  if (random_start_scale < 0.0f)
    throw Error("attack config: random start scale must be >= 0");
  if (random_start_scale > eps)
    throw Error("attack config: random start scale exceeds eps");
}

nlohmann::json AttackConfig::to_json() const {
  return {{"eps", eps},
          {"step_size", step_size},
          {"max_steps", max_steps},
          {"random_start_scale", random_start_scale},
          {"loss", loss_name(loss)},
          {"sign_step", sign_step}};
}

AttackConfig AttackConfig::from_json(const nlohmann::json& j) {
  AttackConfig c;
  c.eps = j.value("eps", c.eps);
  c.step_size = j.value("step_size", c.step_size);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.random_start_scale = j.value("random_start_scale", c.random_start_scale);
  if (j.contains("loss")) c.loss = loss_from_name(j.at("loss").get<std::string>());
  c.sign_step = j.value("sign_step", c.sign_step);
  c.validate();
  return c;
}

AttackConfig AttackConfig::with_eps(float new_eps) const {
  AttackConfig c = *this;
  c.eps = new_eps;
  c.random_start_scale = std::min(c.random_start_scale, new_eps);
  return c;
}

Tensor project_linf(const Tensor& x_tilde, const Tensor& x, float eps) {
  if (eps < 0.0f) throw Error("project_linf: negative eps");
  if (x_tilde.shape() != x.shape())
    throw Error("project_linf: shape mismatch " + shape_str(x_tilde.shape()) +
                " vs " + shape_str(x.shape()));
  Tensor out = x_tilde.clone();
  project_inplace(out.mutable_data(), x.data(), eps);
  return out;
}

Tensor pgd(const Model& model, const Tensor& x, const std::vector<int>& y,
           const AttackConfig& cfg, std::span<const uint64_t> sample_seeds) {
  cfg.validate();
  if (x.shape().empty() || x.shape()[0] != static_cast<int>(y.size()) ||
      static_cast<int64_t>(sample_seeds.size()) != static_cast<int64_t>(y.size()))
    throw Error("pgd: batch/label/seed count mismatch");
  if (cfg.eps == 0.0f) return x.clone();

  Model detached = model.detached();
  Tensor clean_probs;
  if (cfg.loss == AttackLoss::KlToClean) clean_probs = clean_probs_of(detached, x);

  Tensor xt = random_start(x, cfg.random_start_scale, cfg.eps, sample_seeds);
  for (int step = 0; step < cfg.max_steps; ++step) {
    auto g = input_grad(detached, xt, y,
                        cfg.loss == AttackLoss::KlToClean ? &clean_probs : nullptr);
    ascend(xt.mutable_data(), g, cfg.step_size, cfg.sign_step);
    project_inplace(xt.mutable_data(), x.data(), cfg.eps);
  }
  return xt;
}

Tensor pgd(const Model& model, const Tensor& x, const std::vector<int>& y,
           const AttackConfig& cfg, uint64_t seed) {
  auto seeds = derive_seeds(seed, static_cast<int64_t>(y.size()));
  return pgd(model, x, y, cfg, seeds);
}

BoundaryPair boundary_search(const Model& model, const Tensor& x, int y,
                             const AttackConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (x.shape().empty() || x.shape()[0] != 1)
    throw Error("boundary_search: expected a single sample with batch dim 1");

  BoundaryPair pair;
  pair.x_clean = x.clone();
  pair.x_adv = x.clone();

  Model detached = model.detached();
  Tensor clean_probs = clean_probs_of(detached, x);
  std::vector<int> ys = {y};
  uint64_t seeds[1] = {seed};
  Tensor xt = random_start(x, cfg.eps == 0.0f ? 0.0f : cfg.random_start_scale,
                           cfg.eps, seeds);

  for (int step = 0; step < cfg.max_steps; ++step) {
    if (predict(logits(detached, xt))[0] != y) {
      pair.success = true;
      return pair;
    }
    pair.x_clean = xt.clone();
    auto g = input_grad(detached, xt, ys, &clean_probs);
    ascend(xt.mutable_data(), g, cfg.step_size, cfg.sign_step);
    project_inplace(xt.mutable_data(), x.data(), cfg.eps);
    pair.x_adv = xt.clone();
    pair.steps_used = step + 1;
  }
  // Loop exhausted: the budget ran out before a break, success stays false.
  return pair;
}

int attack_step_count(const Model& model, const Tensor& x, int y,
                      const AttackConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (x.shape().empty() || x.shape()[0] != 1)
    throw Error("attack_step_count: expected a single sample with batch dim 1");

  Model detached = model.detached();
  std::vector<int> ys = {y};
  uint64_t seeds[1] = {seed};
  Tensor xt = random_start(x, cfg.eps == 0.0f ? 0.0f : cfg.random_start_scale,
                           cfg.eps, seeds);
  for (int step = 0; step < cfg.max_steps; ++step) {
    if (predict(logits(detached, xt))[0] != y) return step;
    if (cfg.eps == 0.0f) break;  // nothing can move; report the cap
    auto g = input_grad(detached, xt, ys, nullptr);
    ascend(xt.mutable_data(), g, cfg.step_size, cfg.sign_step);
    project_inplace(xt.mutable_data(), x.data(), cfg.eps);
  }
  return cfg.max_steps;
}

}  // namespace fairbat
