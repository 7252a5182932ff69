#include "fairbat/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fairbat/rng.hpp"
#include "fairbat/util.hpp"

namespace fairbat {

namespace {

constexpr uint64_t kEvalTag = 0x6576616cULL;

std::vector<int64_t> iota_indices(int64_t lo, int64_t hi) {
  std::vector<int64_t> idx(hi - lo);
  for (int64_t i = lo; i < hi; ++i) idx[i - lo] = i;
  return idx;
}

// Predictions on clean inputs (steps == 0) or after exactly `steps` PGD steps.
// Seeding matches across all analysis entry points, so e.g. the confusion
// matrix trace and the robust error rates see the same adversarial examples.
std::vector<int> attacked_predictions(const Model& model, const Dataset& ds,
                                      const AttackConfig& cfg, uint64_t seed,
                                      int steps) {
  Model detached = model.detached();
  const int64_t n = ds.size();
  std::vector<int> preds(n, -1);
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    constexpr int64_t kChunk = 256;
    for (int64_t start = lo; start < hi; start += kChunk) {
      int64_t end = std::min(hi, start + kChunk);
      Batch b = make_batch(ds, iota_indices(start, end));
      Tensor input = b.x;
      if (steps > 0) {
        AttackConfig step_cfg = cfg;
        step_cfg.max_steps = steps;
        std::vector<uint64_t> seeds(b.indices.size());
        for (size_t i = 0; i < seeds.size(); ++i)
          seeds[i] = mix_seed(mix_seed(seed, kEvalTag), 0,
                              static_cast<uint64_t>(b.indices[i]));
        input = pgd(detached, b.x, b.y, step_cfg, seeds);
      }
      auto p = predict(logits(detached, input));
      for (size_t i = 0; i < p.size(); ++i) preds[start + i] = p[i];
    }
  });
  return preds;
}

void aggregate(FairnessReport& r) {
  const auto& e = r.per_class;
  auto avg = [&](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  auto worst = [&](const std::vector<double>& v) {
    return *std::max_element(v.begin(), v.end());
  };
  r.avg_std = avg(e.std_err);
  r.worst_std = worst(e.std_err);
  r.avg_bndy = avg(e.bndy_err);
  r.worst_bndy = worst(e.bndy_err);
  r.avg_rob = avg(e.rob_err);
  r.worst_rob = worst(e.rob_err);
}

}  // namespace

ClassErrors ClassErrors::from_rates(std::vector<double> std_rates,
                                    std::vector<double> rob_rates,
                                    std::vector<int64_t> counts) {
  if (std_rates.size() != rob_rates.size() || std_rates.empty())
    throw Error("class errors: per-class rate lists must match and be non-empty");
  ClassErrors e;
  e.n_classes = static_cast<int>(std_rates.size());
  e.std_err = std::move(std_rates);
  e.rob_err = std::move(rob_rates);
  e.bndy_err.resize(e.n_classes);
  for (int c = 0; c < e.n_classes; ++c) e.bndy_err[c] = e.rob_err[c] - e.std_err[c];
  e.counts = counts.empty() ? std::vector<int64_t>(e.n_classes, 0) : std::move(counts);
  return e;
}

ClassErrors class_errors(const Model& model, const Dataset& ds,
                         const AttackConfig& eval_attack, uint64_t seed) {
  eval_attack.validate();
  ds.validate();
  const int K = ds.n_classes;
  auto counts = ds.class_counts();
  for (int c = 0; c < K; ++c)
    if (counts[c] == 0)
      throw Error("class_errors: class " + std::to_string(c) + " has no samples");

  auto clean = attacked_predictions(model, ds, eval_attack, seed, 0);
  auto adv = attacked_predictions(model, ds, eval_attack, seed,
                                  eval_attack.max_steps);
  std::vector<int64_t> std_wrong(K, 0), rob_wrong(K, 0);
  for (int64_t i = 0; i < ds.size(); ++i) {
    int y = ds.labels[i];
    if (clean[i] != y) std_wrong[y]++;
    if (adv[i] != y) rob_wrong[y]++;
  }
  std::vector<double> std_rates(K), rob_rates(K);
  for (int c = 0; c < K; ++c) {
    std_rates[c] = static_cast<double>(std_wrong[c]) / static_cast<double>(counts[c]);
    rob_rates[c] = static_cast<double>(rob_wrong[c]) / static_cast<double>(counts[c]);
  }
  return ClassErrors::from_rates(std::move(std_rates), std::move(rob_rates),
                                 std::move(counts));
}

FairnessReport fairness_report(const ClassErrors& errors,
                               const Diagnostics& diag) {
  if (errors.n_classes < 2)
    throw Error("fairness_report: need at least 2 classes");
  FairnessReport r;
  r.per_class = errors;
  r.diag = diag;
  aggregate(r);
  return r;
}

nlohmann::json FairnessReport::to_json() const {
  nlohmann::json j = {{"avg_std", avg_std},   {"worst_std", worst_std},
                      {"avg_bndy", avg_bndy}, {"worst_bndy", worst_bndy},
                      {"avg_rob", avg_rob},   {"worst_rob", worst_rob},
                      {"per_class",
                       {{"std_err", per_class.std_err},
                        {"rob_err", per_class.rob_err},
                        {"bndy_err", per_class.bndy_err},
                        {"counts", per_class.counts}}}};
  nlohmann::json d;
  if (!diag.avg_attack_steps.empty()) d["avg_attack_steps"] = diag.avg_attack_steps;
  if (!diag.target_dist.empty()) {
    d["target_dist"] = diag.target_dist;
    d["target_kl_uniform"] = diag.target_kl_uniform;
    d["target_successes"] = diag.target_successes;
  }
  j["diagnostics"] = d;
  return j;
}

void FairnessReport::write_json(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw Error("report: cannot open '" + path + "' for writing");
  f << to_json().dump(2) << "\n";
}

void FairnessReport::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw Error("report: cannot open '" + path + "' for writing");
  f << "class,std_err,rob_err,bndy_err\n";
  char buf[160];
  for (int c = 0; c < per_class.n_classes; ++c) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", c,
                  per_class.std_err[c], per_class.rob_err[c], per_class.bndy_err[c]);
    f << buf;
  }
  std::snprintf(buf, sizeof(buf), "AVG,%.9g,%.9g,%.9g\n", avg_std, avg_rob, avg_bndy);
  f << buf;
  std::snprintf(buf, sizeof(buf), "WORST,%.9g,%.9g,%.9g\n", worst_std, worst_rob,
                worst_bndy);
  f << buf;
}

std::vector<int64_t> ConfusionMatrix::row_sums() const {
  std::vector<int64_t> sums(n_classes, 0);
  for (int i = 0; i < n_classes; ++i)
    for (int j = 0; j < n_classes; ++j) sums[i] += at(i, j);
  return sums;
}

int64_t ConfusionMatrix::trace() const {
  int64_t t = 0;
  for (int i = 0; i < n_classes; ++i) t += at(i, i);
  return t;
}

void ConfusionMatrix::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw Error("confusion: cannot open '" + path + "' for writing");
  f << "true_class";
  for (int j = 0; j < n_classes; ++j) f << ",pred_" << j;
  f << "\n";
  for (int i = 0; i < n_classes; ++i) {
    f << i;
    for (int j = 0; j < n_classes; ++j) f << "," << at(i, j);
    f << "\n";
  }
}

ConfusionMatrix confusion_matrix(const Model& model, const Dataset& ds,
                                 const AttackConfig& eval_attack, uint64_t seed,
                                 std::optional<int> at_step) {
  eval_attack.validate();
  int steps = at_step.value_or(eval_attack.max_steps);
  if (steps < 0 || steps > eval_attack.max_steps)
    throw Error("confusion_matrix: at_step out of range [0," +
                std::to_string(eval_attack.max_steps) + "]");
  auto preds = attacked_predictions(model, ds, eval_attack, seed, steps);
  ConfusionMatrix m;
  m.n_classes = ds.n_classes;
  m.counts.assign(static_cast<size_t>(ds.n_classes) * ds.n_classes, 0);
  for (int64_t i = 0; i < ds.size(); ++i) m.at(ds.labels[i], preds[i])++;
  return m;
}

std::vector<double> avg_attack_steps(const Model& model, const Dataset& ds,
                                     const AttackConfig& longrun, uint64_t seed) {
  longrun.validate();
  ds.validate();
  const int64_t n = ds.size();
  std::vector<int> steps(n, 0);
  Model detached = model.detached();
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      Batch b = make_batch(ds, {i});
      steps[i] = attack_step_count(
          detached, b.x, b.y[0], longrun,
          mix_seed(mix_seed(seed, kEvalTag), 1, static_cast<uint64_t>(i)));
    }
  });
  std::vector<double> sums(ds.n_classes, 0.0);
  std::vector<int64_t> counts(ds.n_classes, 0);
  for (int64_t i = 0; i < n; ++i) {
    sums[ds.labels[i]] += steps[i];
    counts[ds.labels[i]]++;
  }
  for (int c = 0; c < ds.n_classes; ++c) {
    if (counts[c] == 0)
      throw Error("avg_attack_steps: class " + std::to_string(c) + " has no samples");
    sums[c] /= static_cast<double>(counts[c]);
  }
  return sums;
}

TargetDistribution target_distribution(const Model& model, const Dataset& ds,
                                       const AttackConfig& eval_attack,
                                       uint64_t seed) {
  eval_attack.validate();
  auto preds = attacked_predictions(model, ds, eval_attack, seed,
                                    eval_attack.max_steps);
  TargetDistribution td;
  td.raw_counts.assign(ds.n_classes, 0);
  for (int64_t i = 0; i < ds.size(); ++i) {
    if (preds[i] != ds.labels[i]) {
      td.raw_counts[preds[i]]++;
      td.successes++;
    }
  }
  if (td.successes == 0) throw Error("no adversarial targets");
  td.probs.resize(ds.n_classes);
  const int K = ds.n_classes;
  for (int c = 0; c < K; ++c)
    td.probs[c] = static_cast<double>(td.raw_counts[c]) /
                  static_cast<double>(td.successes);
  double kl = 0.0;
  for (int c = 0; c < K; ++c)
    if (td.probs[c] > 0.0) kl += td.probs[c] * std::log(K * td.probs[c]);
  td.kl_to_uniform = kl;
  return td;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 3)
    throw Error("spearman: need two equal-length lists of size >= 3");
  auto ranks = [](std::span<const double> v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (size_t k = i; k <= j; ++k) r[order[k]] = avg_rank;
      i = j + 1;
    }
    return r;
  };
  auto rx = ranks(xs), ry = ranks(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw Error("spearman: undefined for constant input");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace fairbat
