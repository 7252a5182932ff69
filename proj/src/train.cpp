#include "fairbat/train.hpp"

#include <cmath>
#include <fstream>

#include "fairbat/optim.hpp"
#include "fairbat/rng.hpp"
#include "fairbat/util.hpp"

namespace fairbat {

namespace {

constexpr uint64_t kEvalTag = 0x6576616cULL;

std::vector<uint64_t> batch_seeds(uint64_t seed, int epoch,
                                  const std::vector<int64_t>& indices) {
  std::vector<uint64_t> seeds(indices.size());
  for (size_t i = 0; i < indices.size(); ++i)
    seeds[i] = mix_seed(seed, static_cast<uint64_t>(epoch),
                        static_cast<uint64_t>(indices[i]));
  return seeds;
}

std::vector<int64_t> iota_indices(int64_t lo, int64_t hi) {
  std::vector<int64_t> idx(hi - lo);
  for (int64_t i = lo; i < hi; ++i) idx[i - lo] = i;
  return idx;
}

}  // namespace

std::string method_name(TrainMethod m) {
  switch (m) {
    case TrainMethod::PgdAt: return "pgd_at";
    case TrainMethod::Trades: return "trades";
    case TrainMethod::Bat: return "bat";
    case TrainMethod::BatAblationFixedSteps: return "bat_ablation_fixed_steps";
  }
  throw Error("unreachable");
}

TrainMethod method_from_name(const std::string& s) {
  if (s == "pgd_at") return TrainMethod::PgdAt;
  if (s == "trades") return TrainMethod::Trades;
  if (s == "bat") return TrainMethod::Bat;
  if (s == "bat_ablation_fixed_steps") return TrainMethod::BatAblationFixedSteps;
  throw Error("train config: unknown method '" + s + "'");
}

std::string target_mode_name(TargetMode m) {
  switch (m) {
    case TargetMode::None: return "none";
    case TargetMode::BoundaryClean: return "boundary_clean";
    case TargetMode::BoundaryAdv: return "boundary_adv";
    case TargetMode::FixedAdv: return "fixed_adv";
    case TargetMode::Both: return "both";
  }
  throw Error("unreachable");
}

TargetMode target_mode_from_name(const std::string& s) {
  if (s == "none") return TargetMode::None;
  if (s == "boundary_clean") return TargetMode::BoundaryClean;
  if (s == "boundary_adv") return TargetMode::BoundaryAdv;
  if (s == "fixed_adv") return TargetMode::FixedAdv;
  if (s == "both") return TargetMode::Both;
  throw Error("train config: unknown target mode '" + s + "'");
}

void TrainConfig::validate() const {
  if (beta < 0.0f || alpha_target < 0.0f)
    throw Error("train config: beta and alpha must be >= 0");
  if (epochs < 0) throw Error("train config: epochs must be >= 0");
  if (batch_size < 1) throw Error("train config: batch size must be >= 1");
  attack.validate();
  eval_attack.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"method", method_name(method)},
          {"beta", beta},
          {"alpha_target", alpha_target},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"lr", lr},
          {"momentum", momentum},
          {"weight_decay", weight_decay},
          {"lr_step_decay", lr_step_decay},
          {"attack", attack.to_json()},
          {"eval_attack", eval_attack.to_json()},
          {"seed", seed},
          {"snapshot_interval", snapshot_interval},
          {"target_mode", target_mode_name(target_mode)}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("method")) c.method = method_from_name(j.at("method"));
  c.beta = j.value("beta", c.beta);
  c.alpha_target = j.value("alpha_target", c.alpha_target);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.lr_step_decay = j.value("lr_step_decay", c.lr_step_decay);
  if (j.contains("attack")) c.attack = AttackConfig::from_json(j.at("attack"));
  if (j.contains("eval_attack"))
    c.eval_attack = AttackConfig::from_json(j.at("eval_attack"));
  c.seed = j.value("seed", c.seed);
  c.snapshot_interval = j.value("snapshot_interval", c.snapshot_interval);
  if (j.contains("target_mode"))
    c.target_mode = target_mode_from_name(j.at("target_mode"));
  c.validate();
  return c;
}

void TrainHistory::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw Error("history: cannot open '" + path + "' for writing");
  f << "epoch,total_loss,source_loss,target_loss,clean_acc,robust_acc\n";
  char buf[256];
  for (const auto& r : epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,", r.epoch,
                  r.total_loss, r.source_loss, r.target_loss, r.clean_acc);
    f << buf;
    if (r.has_robust) {
      std::snprintf(buf, sizeof(buf), "%.17g", r.robust_acc);
      f << buf;
    }
    f << "\n";
  }
}

double clean_accuracy(const Model& model, const Dataset& ds) {
  Model detached = model.detached();
  const int64_t n = ds.size();
  std::vector<char> correct(n, 0);
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    constexpr int64_t kChunk = 256;
    for (int64_t start = lo; start < hi; start += kChunk) {
      int64_t end = std::min(hi, start + kChunk);
      Batch b = make_batch(ds, iota_indices(start, end));
      auto pred = predict(logits(detached, b.x));
      for (size_t i = 0; i < pred.size(); ++i)
        correct[start + i] = pred[i] == b.y[i];
    }
  });
  int64_t good = 0;
  for (char c : correct) good += c;
  return static_cast<double>(good) / static_cast<double>(n);
}

double robust_accuracy(const Model& model, const Dataset& ds,
                       const AttackConfig& eval_attack, uint64_t seed) {
  Model detached = model.detached();
  const int64_t n = ds.size();
  std::vector<char> correct(n, 0);
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    constexpr int64_t kChunk = 256;
    for (int64_t start = lo; start < hi; start += kChunk) {
      int64_t end = std::min(hi, start + kChunk);
      Batch b = make_batch(ds, iota_indices(start, end));
      auto seeds = batch_seeds(mix_seed(seed, kEvalTag), 0, b.indices);
      Tensor adv = pgd(detached, b.x, b.y, eval_attack, seeds);
      auto pred = predict(logits(detached, adv));
      for (size_t i = 0; i < pred.size(); ++i)
        correct[start + i] = pred[i] == b.y[i];
    }
  });
  int64_t good = 0;
  for (char c : correct) good += c;
  return static_cast<double>(good) / static_cast<double>(n);
}

std::pair<Model, TrainHistory> train(const TrainConfig& cfg,
                                     const ModelSpec& spec, const Dataset& ds) {
  cfg.validate();
  ds.validate();
  if (ds.n_classes != spec.n_classes)
    throw Error("train: dataset has " + std::to_string(ds.n_classes) +
                " classes but model expects " + std::to_string(spec.n_classes));
  if (ds.n_classes < 2) throw Error("train: need at least 2 classes");

  Model model = init_model(spec, cfg.seed);
  TrainHistory history;
  if (cfg.epochs == 0) return {std::move(model), std::move(history)};

  SgdOptimizer opt({cfg.lr, cfg.momentum, cfg.weight_decay});
  const int64_t n = ds.size();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.lr_step_decay) {
      float factor = 1.0f;
      if (epoch > cfg.epochs * 3 / 4) factor = 0.01f;
      else if (epoch > cfg.epochs / 2) factor = 0.1f;
      opt.set_lr(cfg.lr * factor);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    double total_sum = 0.0, source_sum = 0.0, target_sum = 0.0;
    for (const Batch& batch : batches(ds, cfg.batch_size, epoch, cfg.seed)) {
      auto seeds = batch_seeds(cfg.seed, epoch, batch.indices);
      const double m = static_cast<double>(batch.y.size());

      Tensor total;
      double source_val = 0.0, target_val = 0.0;
      switch (cfg.method) {
        case TrainMethod::PgdAt:
          total = loss_pgd_at(model, batch, cfg.attack, seeds);
          source_val = total.item();
          break;
        case TrainMethod::Trades:
          total = loss_trades(model, batch, cfg.beta, cfg.attack, seeds);
          source_val = total.item();
          break;
        case TrainMethod::Bat:
        case TrainMethod::BatAblationFixedSteps: {
          BatLossParts parts = loss_bat_total(
              model, batch, cfg.beta, cfg.alpha_target, cfg.attack,
              cfg.target_mode, cfg.method == TrainMethod::BatAblationFixedSteps,
              seeds);
          total = parts.total;
          source_val = parts.source;
          target_val = parts.target;
          break;
        }
      }

      double total_val = total.item();
      if (!std::isfinite(total_val))
        throw TrainError("non-finite loss at epoch " + std::to_string(epoch));
      backward(total);
      opt.step(model.params);

      total_sum += total_val * m;
      source_sum += source_val * m;
      target_sum += target_val * m;
    }

    rec.total_loss = total_sum / static_cast<double>(n);
    rec.source_loss = source_sum / static_cast<double>(n);
    rec.target_loss = target_sum / static_cast<double>(n);
    rec.clean_acc = clean_accuracy(model, ds);
    bool snapshot = (epoch == cfg.epochs) ||
                    (cfg.snapshot_interval > 0 && epoch % cfg.snapshot_interval == 0);
    if (snapshot) {
      rec.robust_acc = robust_accuracy(model, ds, cfg.eval_attack,
                                       mix_seed(cfg.seed, static_cast<uint64_t>(epoch)));
      rec.has_robust = true;
    }
    history.epochs.push_back(rec);
  }
  return {std::move(model), std::move(history)};
}

}  // namespace fairbat
