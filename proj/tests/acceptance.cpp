// End-to-end acceptance checks. Each criterion prints one [PASS]/[FAIL] line;
// the process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "fairbat/analysis.hpp"
#include "fairbat/experiment.hpp"
#include "fairbat/losses.hpp"
#include "fairbat/rng.hpp"
#include "fairbat/train.hpp"
#include "support/grad_check.hpp"

using namespace fairbat;

namespace {

int g_failures = 0;

void report(int number, const char* title, bool pass, const std::string& detail) {
  std::printf("[%s] %d. %s%s%s\n", pass ? "PASS" : "FAIL", number, title,
              detail.empty() ? "" : " — ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Aggregation identity against the published error-rate rows.

void criterion_metric_identity() {
  bool pass = true;
  auto check_row = [&](double std_avg, double bndy_avg, double rob_avg) {
    ClassErrors e = ClassErrors::from_rates(
        {std_avg - 0.01, std_avg + 0.01},
        {std_avg - 0.01 + bndy_avg + 0.02, std_avg + 0.01 + bndy_avg - 0.02});
    FairnessReport r = fairness_report(e);
    pass &= std::fabs(r.avg_std - std_avg) < 1e-9;
    pass &= std::fabs(r.avg_bndy - bndy_avg) < 1e-9;
    pass &= std::fabs(r.avg_rob - rob_avg) < 1e-9;
    pass &= std::fabs(r.avg_rob - (r.avg_std + r.avg_bndy)) < 1e-9;
  };
  check_row(0.1291, 0.3157, 0.4448);
  check_row(0.1343, 0.3947, 0.5290);
  report(1, "error aggregation identity (0.1291+0.3157=0.4448, 0.1343+0.3947=0.5290)",
         pass, "");
}

// ---------------------------------------------------------------------------
// 2. Finite-difference gradient suite.

void criterion_gradient_suite() {
  double worst = 0.0;
  int checked = 0;
  bool pass = true;
  for (uint64_t seed = 1; seed <= 50; ++seed) {
    auto r = gradcheck::check_random_graph(seed);
    worst = std::max(worst, r.max_rel_err);
    checked += r.checked;
    if (r.max_rel_err > 1e-4) pass = false;
  }
  report(2, "gradient suite: 50 random graphs vs finite differences", pass,
         fmt("%d entries, max rel err %.3g (limit 1e-4)", checked, worst));
}

// ---------------------------------------------------------------------------
// 3. Attack soundness over randomized cases.

void criterion_attack_soundness() {
  int violations = 0;
  int cases = 0, boundary_successes = 0;
  Rng rng(0xACCE55);
  auto linf_ok = [](std::span<const float> a, std::span<const float> b, float eps) {
    for (size_t i = 0; i < a.size(); ++i) {
      if (std::fabs(a[i] - b[i]) > eps + 1e-6f) return false;
      if (a[i] < 0.0f || a[i] > 1.0f) return false;
    }
    return true;
  };

  while (cases < 1000) {
    int d = 2 + static_cast<int>(rng.below(5));
    int k = 2 + static_cast<int>(rng.below(4));
    ModelSpec spec;
    spec.kind = ModelKind::Mlp;
    spec.input_shape = {d};
    spec.hidden = {4 + static_cast<int>(rng.below(8))};
    spec.n_classes = k;
    Model m = init_model(spec, rng.next_u64());

    AttackConfig cfg;
    cfg.eps = 0.01f + 0.3f * static_cast<float>(rng.uniform());
    cfg.step_size = cfg.eps * (0.1f + 0.4f * static_cast<float>(rng.uniform()));
    cfg.max_steps = 1 + static_cast<int>(rng.below(10));
    cfg.random_start_scale = std::min(0.001f, cfg.eps);
    cfg.sign_step = rng.below(4) != 0;  // exercise the raw-gradient switch too

    for (int rep = 0; rep < 4 && cases < 1000; ++rep, ++cases) {
      std::vector<float> vx(d);
      for (auto& v : vx) v = static_cast<float>(rng.uniform());
      Tensor x = Tensor::from_data({1, d}, vx);
      int y = static_cast<int>(rng.below(k));
      uint64_t seed = rng.next_u64();

      AttackConfig ce = cfg;
      ce.loss = AttackLoss::CrossEntropy;
      Tensor adv = pgd(m, x, {y}, ce, seed);
      if (!linf_ok(adv.data(), x.data(), cfg.eps)) ++violations;

      AttackConfig kl = cfg;
      kl.loss = AttackLoss::KlToClean;
      BoundaryPair pair = boundary_search(m, x, y, kl, seed);
      if (!linf_ok(pair.x_clean.data(), x.data(), cfg.eps)) ++violations;
      if (!linf_ok(pair.x_adv.data(), x.data(), cfg.eps)) ++violations;
      if (pair.success && pair.steps_used >= 1) {
        ++boundary_successes;
        if (predict(logits(m, pair.x_clean))[0] != y) ++violations;
        if (predict(logits(m, pair.x_adv))[0] == y) ++violations;
      }
    }
  }
  report(3, "attack soundness over 1000 randomized cases",
         violations == 0,
         fmt("%d violations, %d boundary pairs checked against the "
             "classification contract", violations, boundary_successes));
}

// ---------------------------------------------------------------------------
// 4. Reduction lattice: three degenerate configurations, one training run.

void criterion_reduction_lattice() {
  MixtureSpec mix;
  mix.dim = 2;
  mix.classes.push_back({{-1.0f, 0.5f}, 0.8f, 40});
  mix.classes.push_back({{1.0f, -0.5f}, 0.8f, 40});
  Dataset ds = gen_mixture(mix, 21);

  ModelSpec spec;
  spec.kind = ModelKind::Mlp;
  spec.input_shape = {2};
  spec.hidden = {12};
  spec.n_classes = 2;

  TrainConfig base;
  base.epochs = 5;
  base.batch_size = 16;
  base.seed = 77;
  base.attack.eps = 0.0f;
  base.attack.random_start_scale = 0.0f;
  base.eval_attack = base.attack;

  TrainConfig bat = base;
  bat.method = TrainMethod::Bat;
  bat.beta = 0.0f;
  bat.alpha_target = 0.0f;
  bat.target_mode = TargetMode::None;

  TrainConfig trades = base;
  trades.method = TrainMethod::Trades;
  trades.beta = 0.0f;

  TrainConfig clean = base;  // PGD-AT at eps=0 is plain CE training
  clean.method = TrainMethod::PgdAt;

  auto [m1, h1] = train(bat, spec, ds);
  auto [m2, h2] = train(trades, spec, ds);
  auto [m3, h3] = train(clean, spec, ds);

  bool pass = h1.epochs.size() == h2.epochs.size() &&
              h1.epochs.size() == h3.epochs.size();
  for (size_t i = 0; pass && i < h1.epochs.size(); ++i) {
    pass &= h1.epochs[i].total_loss == h2.epochs[i].total_loss;
    pass &= h1.epochs[i].total_loss == h3.epochs[i].total_loss;
    pass &= h1.epochs[i].clean_acc == h2.epochs[i].clean_acc;
    pass &= h1.epochs[i].clean_acc == h3.epochs[i].clean_acc;
    pass &= h1.epochs[i].robust_acc == h3.epochs[i].robust_acc;
  }
  for (size_t p = 0; pass && p < m1.params.size(); ++p) {
    auto a = m1.params[p].second.data();
    auto b = m2.params[p].second.data();
    auto c = m3.params[p].second.data();
    for (size_t i = 0; pass && i < a.size(); ++i)
      pass &= a[i] == b[i] && a[i] == c[i];
  }
  report(4, "reduction lattice: BAT(0,0,eps=0) == TRADES(0,eps=0) == clean CE",
         pass, "bit-identical histories and final parameters");
}

// ---------------------------------------------------------------------------
// Shared setup for the stress-mixture experiments (criteria 5 and 6).

ModelSpec stress_model() {
  ModelSpec spec;
  spec.kind = ModelKind::Mlp;
  spec.input_shape = {2};
  spec.hidden = {32};
  spec.n_classes = 5;
  return spec;
}

TrainConfig stress_config(TrainMethod method, uint64_t seed) {
  TrainConfig cfg;
  cfg.method = method;
  cfg.epochs = 15;
  cfg.batch_size = 64;
  cfg.seed = seed;
  cfg.attack.eps = 28.0f / 255.0f;
  cfg.attack.step_size = 7.0f / 255.0f;
  cfg.attack.max_steps = 10;
  cfg.eval_attack.eps = 28.0f / 255.0f;
  cfg.eval_attack.step_size = 3.5f / 255.0f;
  cfg.eval_attack.max_steps = 20;
  return cfg;
}

AttackConfig stress_eval_attack() {
  AttackConfig cfg;
  cfg.eps = 28.0f / 255.0f;
  cfg.step_size = 3.5f / 255.0f;
  cfg.max_steps = 20;
  return cfg;
}

struct StressRun {
  Model model;
  Dataset ds;
  ClassErrors errors;
};

StressRun run_stress(TrainMethod method, uint64_t seed) {
  StressRun r;
  r.ds = gen_mixture(fairness_stress_spec(), mix_seed(seed, 0x64617461ULL));
  auto [model, history] = train(stress_config(method, seed), stress_model(), r.ds);
  r.model = std::move(model);
  r.errors = class_errors(r.model, r.ds, stress_eval_attack(), mix_seed(seed, 0x65761ULL));
  return r;
}

// ---------------------------------------------------------------------------
// 5. Robust-fairness phenomenon on the stress mixture.

void criterion_phenomenon(const std::vector<StressRun>& pgd_runs) {
  AttackConfig longrun;
  longrun.eps = 28.0f / 255.0f;
  longrun.step_size = 0.4f / 255.0f;
  longrun.max_steps = 1000;
  longrun.random_start_scale = 0.0f;

  double spearman_sum = 0.0, kl_sum = 0.0, baseline_sum = 0.0;
  for (size_t i = 0; i < pgd_runs.size(); ++i) {
    const StressRun& r = pgd_runs[i];
    auto steps = avg_attack_steps(r.model, r.ds, longrun, 100 + i);
    std::vector<double> rob_acc(r.errors.n_classes);
    for (int c = 0; c < r.errors.n_classes; ++c)
      rob_acc[c] = 1.0 - r.errors.rob_err[c];
    spearman_sum += spearman(steps, rob_acc);

    TargetDistribution td =
        target_distribution(r.model, r.ds, stress_eval_attack(), 100 + i);
    kl_sum += td.kl_to_uniform;
    // Expected KL of the empirical distribution of n uniform draws over K
    // classes is about (K-1)/(2n).
    baseline_sum += static_cast<double>(r.errors.n_classes - 1) /
                    (2.0 * static_cast<double>(td.successes));
  }
  const double n = static_cast<double>(pgd_runs.size());
  double mean_spearman = spearman_sum / n;
  double mean_kl = kl_sum / n;
  double mean_baseline = baseline_sum / n;
  bool pass = mean_spearman > 0.5 && mean_kl > 3.0 * mean_baseline;
  report(5, "phenomenon: attack-step/robustness correlation and skewed targets",
         pass,
         fmt("spearman %.3f (> 0.5), target KL %.4f vs 3x noise floor %.4f",
             mean_spearman, mean_kl, 3.0 * mean_baseline));
}

// ---------------------------------------------------------------------------
// 6. Method effect: balanced training improves the worst class.

void criterion_method_effect(const std::vector<StressRun>& pgd_runs) {
  double pgd_worst = 0.0, pgd_avg = 0.0, bat_worst = 0.0, bat_avg = 0.0;
  const double n = static_cast<double>(pgd_runs.size());
  for (size_t i = 0; i < pgd_runs.size(); ++i) {
    FairnessReport rp = fairness_report(pgd_runs[i].errors);
    pgd_worst += rp.worst_rob / n;
    pgd_avg += rp.avg_rob / n;
    StressRun bat = run_stress(TrainMethod::Bat, 40 + i);
    FairnessReport rb = fairness_report(bat.errors);
    bat_worst += rb.worst_rob / n;
    bat_avg += rb.avg_rob / n;
  }
  bool pass = bat_worst <= pgd_worst - 0.02 && bat_avg <= pgd_avg + 0.01;
  report(6, "method effect: balanced training vs PGD-AT on the stress mixture",
         pass,
         fmt("worst rob err %.4f vs %.4f (need <= %.4f), avg rob err %.4f vs "
             "%.4f (need <= %.4f)",
             bat_worst, pgd_worst, pgd_worst - 0.02, bat_avg, pgd_avg,
             pgd_avg + 0.01));
}

// ---------------------------------------------------------------------------
// 7. Ablation wiring: every target mode and the fixed-step source variant.

void criterion_ablation_wiring() {
  namespace fs = std::filesystem;
  MixtureSpec mix;
  mix.dim = 2;
  mix.classes.push_back({{-1.0f, 0.0f}, 1.2f, 60});
  mix.classes.push_back({{1.0f, 0.0f}, 1.2f, 60});
  mix.classes.push_back({{0.0f, 1.5f}, 1.2f, 60});
  Dataset ds = gen_mixture(mix, 31);

  ModelSpec spec;
  spec.kind = ModelKind::Mlp;
  spec.input_shape = {2};
  spec.hidden = {16};
  spec.n_classes = 3;

  fs::path dir = fs::temp_directory_path() / "fairbat_acceptance_ablation";
  fs::create_directories(dir);

  struct Variant {
    const char* label;
    TrainMethod method;
    TargetMode mode;
  };
  std::vector<Variant> variants = {
      {"target_boundary_clean", TrainMethod::Bat, TargetMode::BoundaryClean},
      {"target_boundary_adv", TrainMethod::Bat, TargetMode::BoundaryAdv},
      {"target_fixed_adv", TrainMethod::Bat, TargetMode::FixedAdv},
      {"target_both", TrainMethod::Bat, TargetMode::Both},
      {"source_fixed_steps", TrainMethod::BatAblationFixedSteps, TargetMode::Both},
  };

  bool pass = true;
  std::set<std::string> first_lines;
  std::vector<double> final_losses;
  for (const auto& v : variants) {
    TrainConfig cfg;
    cfg.method = v.method;
    cfg.target_mode = v.mode;
    cfg.epochs = 3;
    cfg.batch_size = 32;
    cfg.seed = 7;
    cfg.attack.eps = 0.05f;
    cfg.attack.step_size = 0.0125f;
    cfg.attack.max_steps = 8;
    cfg.eval_attack = cfg.attack;
    auto [model, history] = train(cfg, spec, ds);
    if (history.epochs.size() != 3) pass = false;
    for (const auto& rec : history.epochs)
      if (!std::isfinite(rec.total_loss)) pass = false;
    history.write_csv((dir / (std::string(v.label) + ".csv")).string());
    if (!fs::exists(dir / (std::string(v.label) + ".csv"))) pass = false;
    final_losses.push_back(history.epochs.back().total_loss);
  }
  // The variants must genuinely differ: distinct final losses pairwise.
  for (size_t i = 0; i < final_losses.size(); ++i)
    for (size_t j = i + 1; j < final_losses.size(); ++j)
      if (final_losses[i] == final_losses[j]) pass = false;

  // The degenerate-pair (immediate break) path: a sample the model already
  // misclassifies yields pair (x, x) with zero steps, and the loss still runs.
  Model m = init_model(spec, 3);
  Batch batch = make_batch(ds, {0, 1, 2, 3, 4, 5, 6, 7});
  auto preds = predict(logits(m, batch.x));
  bool any_wrong = false;
  for (size_t i = 0; i < preds.size(); ++i) any_wrong |= preds[i] != batch.y[i];
  AttackConfig acfg;
  acfg.eps = 0.05f;
  acfg.step_size = 0.0125f;
  acfg.max_steps = 8;
  acfg.loss = AttackLoss::KlToClean;
  std::vector<uint64_t> seeds;
  for (int64_t i : batch.indices) seeds.push_back(mix_seed(7, i));
  BoundaryBatch pairs = boundary_search_batch(m, batch, acfg, seeds);
  bool degenerate_seen = false;
  for (size_t i = 0; i < pairs.success.size(); ++i)
    if (pairs.success[i] && pairs.steps_used[i] == 0) degenerate_seen = true;
  BatLossParts parts = loss_bat_total(m, batch, 6.0f, 1.0f, acfg,
                                      TargetMode::Both, false, seeds);
  pass &= any_wrong && degenerate_seen && std::isfinite(parts.total.item());

  report(7, "ablation wiring: 4 target modes + fixed-step source + degenerate pair",
         pass, fmt("%zu labeled histories in %s", variants.size(),
                   dir.string().c_str()));
}

// ---------------------------------------------------------------------------
// 8. Class-removal pipeline on a 10-class mixture.

void criterion_class_removal() {
  namespace fs = std::filesystem;
  MixtureSpec mix;
  mix.dim = 2;
  for (int k = 0; k < 10; ++k) {
    ClassSpec c;
    double angle = 2.0 * 3.14159265358979323846 * k / 10.0;
    c.mean = {static_cast<float>(3.0 * std::cos(angle)),
              static_cast<float>(3.0 * std::sin(angle))};
    c.sigma = 0.4f;
    c.count = 60;
    mix.classes.push_back(std::move(c));
  }

  fs::path dir = fs::temp_directory_path() / "fairbat_acceptance_removal";
  ExperimentConfig cfg;
  cfg.seed = 51;
  cfg.output_dir = dir.string();
  cfg.mixture = mix;
  cfg.exclude_classes = {2, 3, 4, 5};
  cfg.model.kind = ModelKind::Mlp;
  cfg.model.input_shape = {2};
  cfg.model.hidden = {16};
  cfg.model.n_classes = 10;  // pre-filter; the run adjusts to the survivors
  cfg.train.method = TrainMethod::Bat;
  cfg.train.epochs = 4;
  cfg.train.batch_size = 64;
  cfg.train.attack.eps = 0.03f;
  cfg.train.attack.step_size = 0.0075f;
  cfg.train.attack.max_steps = 8;
  cfg.train.eval_attack = cfg.train.attack;

  bool pass = true;
  RunResult run = run_experiment(cfg);
  pass &= fs::exists(dir / "checkpoint.fbm");
  pass &= run.model.spec.n_classes == 6;

  Dataset filtered = cfg.resolve_dataset();
  pass &= filtered.n_classes == 6;
  pass &= filtered.label_mapping == std::vector<int>{0, 1, 6, 7, 8, 9};

  ClassErrors e = class_errors(run.model, filtered, cfg.train.eval_attack, 4);
  FairnessReport rep = fairness_report(e);
  rep.write_csv((dir / "report.csv").string());
  rep.write_json((dir / "report.json").string());
  pass &= static_cast<int>(rep.per_class.std_err.size()) == 6;
  pass &= fs::exists(dir / "report.csv") && fs::exists(dir / "report.json");

  report(8, "class-removal pipeline: exclude {2,3,4,5} from 10 classes", pass,
         fmt("6 remapped classes, reports in %s", dir.string().c_str()));
}

}  // namespace

int main() {
  auto t0 = std::chrono::steady_clock::now();

  criterion_metric_identity();
  criterion_gradient_suite();
  criterion_attack_soundness();
  criterion_reduction_lattice();

  std::vector<StressRun> pgd_runs;
  for (uint64_t seed = 40; seed < 45; ++seed)
    pgd_runs.push_back(run_stress(TrainMethod::PgdAt, seed));
  criterion_phenomenon(pgd_runs);
  criterion_method_effect(pgd_runs);

  criterion_ablation_wiring();
  criterion_class_removal();

  auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0);
  std::printf("%d/8 criteria passed in %.1f s\n", 8 - g_failures, secs.count());
  return g_failures == 0 ? 0 : 1;
}
