#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairbat/analysis.hpp"
#include "fairbat/experiment.hpp"
#include "fairbat/rng.hpp"

namespace fs = std::filesystem;
using namespace fairbat;

namespace {

struct AttackFlags {
  double eps = 8.0 / 255.0;
  double step_size = 2.0 / 255.0;
  int steps = 20;
  double xi = 0.001;

  AttackConfig to_config() const {
    AttackConfig c;
    c.eps = static_cast<float>(eps);
    c.step_size = static_cast<float>(step_size);
    c.max_steps = steps;
    c.random_start_scale = static_cast<float>(std::min(xi, eps));
    c.loss = AttackLoss::CrossEntropy;
    c.validate();
    return c;
  }
};

void add_attack_flags(CLI::App* cmd, AttackFlags& f) {
  cmd->add_option("--eps", f.eps, "l-inf budget in [0,1] pixel units");
  cmd->add_option("--steps", f.steps, "number of PGD steps");
  cmd->add_option("--step-size", f.step_size, "PGD step size");
  cmd->add_option("--xi", f.xi, "random start scale");
}

int cmd_gen(const std::string& spec_path, const std::string& out_path,
            uint64_t seed) {
  if (!fs::exists(spec_path)) {
    std::fprintf(stderr, "spec not found: %s\n", spec_path.c_str());
    return 2;
  }
  std::ifstream f(spec_path);
  MixtureSpec spec = MixtureSpec::from_json(nlohmann::json::parse(f));
  Dataset ds = gen_mixture(spec, seed);
  save_dataset(ds, out_path);
  std::printf("N=%lld K=%d\n", static_cast<long long>(ds.size()), ds.n_classes);
  auto counts = ds.class_counts();
  for (int c = 0; c < ds.n_classes; ++c)
    std::printf("class %d: %lld\n", c, static_cast<long long>(counts[c]));
  return 0;
}

int cmd_train(const std::string& config_path) {
  if (!fs::exists(config_path)) {
    std::fprintf(stderr, "config not found: %s\n", config_path.c_str());
    return 2;
  }
  ExperimentConfig cfg = ExperimentConfig::load_file(config_path);
  try {
    RunResult r = run_experiment(cfg);
    std::printf("checkpoint: %s\n", r.checkpoint_path.c_str());
    std::printf("history: %s\n", r.history_path.c_str());
  } catch (const TrainError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 3;
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const AttackFlags& flags, const std::string& out_dir,
             uint64_t seed) {
  if (!fs::exists(ckpt_path) || !fs::exists(data_path)) {
    std::fprintf(stderr, "checkpoint or dataset not found\n");
    return 2;
  }
  Model model = load_checkpoint(ckpt_path);
  Dataset ds = load_dataset(data_path);
  if (model.spec.n_classes != ds.n_classes) {
    std::fprintf(stderr, "class count mismatch: model has %d, dataset has %d\n",
                 model.spec.n_classes, ds.n_classes);
    return 1;
  }
  AttackConfig cfg = flags.to_config();
  FairnessReport report = fairness_report(class_errors(model, ds, cfg, seed));
  fs::create_directories(out_dir);
  report.write_json(out_dir + "/report.json");
  report.write_csv(out_dir + "/report.csv");
  std::printf("Avg Std.  Worst Std.  Avg Bndy.  Worst Bndy.  Avg Rob.  Worst Rob.\n");
  std::printf("%8.4f %10.4f %10.4f %12.4f %9.4f %11.4f\n", report.avg_std,
              report.worst_std, report.avg_bndy, report.worst_bndy,
              report.avg_rob, report.worst_rob);
  return 0;
}

void write_diagnostics_csv(const std::string& path, int n_classes,
                           const std::vector<double>* avg_steps,
                           const std::vector<double>* target_mass) {
  std::ofstream f(path);
  f << "class,avg_attack_steps,target_mass\n";
  char buf[96];
  for (int c = 0; c < n_classes; ++c) {
    f << c << ",";
    if (avg_steps) {
      std::snprintf(buf, sizeof(buf), "%.9g", (*avg_steps)[c]);
      f << buf;
    }
    f << ",";
    if (target_mass) {
      std::snprintf(buf, sizeof(buf), "%.9g", (*target_mass)[c]);
      f << buf;
    }
    f << "\n";
  }
}

int cmd_analyze(const std::string& ckpt_path, const std::string& data_path,
                const std::string& mode, const AttackFlags& flags,
                int at_step, const std::string& out_dir, uint64_t seed) {
  if (!fs::exists(ckpt_path) || !fs::exists(data_path)) {
    std::fprintf(stderr, "checkpoint or dataset not found\n");
    return 2;
  }
  Model model = load_checkpoint(ckpt_path);
  Dataset ds = load_dataset(data_path);
  if (model.spec.n_classes != ds.n_classes) {
    std::fprintf(stderr, "class count mismatch: model has %d, dataset has %d\n",
                 model.spec.n_classes, ds.n_classes);
    return 1;
  }
  fs::create_directories(out_dir);
  AttackConfig cfg = flags.to_config();

  if (mode == "steps") {
    auto steps = avg_attack_steps(model, ds, cfg, seed);
    // Robust accuracy per class under the standard evaluation attack, for the
    // correlation the diagnostics are about.
    AttackConfig eval_cfg;
    eval_cfg.eps = cfg.eps;
    eval_cfg.max_steps = 20;
    eval_cfg.step_size = 2.0f / 255.0f;
    eval_cfg.random_start_scale = std::min(0.001f, cfg.eps);
    ClassErrors errors = class_errors(model, ds, eval_cfg, seed);
    std::vector<double> rob_acc(ds.n_classes);
    for (int c = 0; c < ds.n_classes; ++c) rob_acc[c] = 1.0 - errors.rob_err[c];
    write_diagnostics_csv(out_dir + "/diagnostics.csv", ds.n_classes, &steps,
                          nullptr);
    for (int c = 0; c < ds.n_classes; ++c)
      std::printf("class %d: avg_steps=%.4f rob_acc=%.4f\n", c, steps[c],
                  rob_acc[c]);
    if (ds.n_classes >= 3)
      std::printf("spearman=%.6f\n", spearman(steps, rob_acc));
    else
      std::printf("spearman undefined for fewer than 3 classes\n");
    return 0;
  }
  if (mode == "targets") {
    TargetDistribution td;
    try {
      td = target_distribution(model, ds, cfg, seed);
    } catch (const Error& e) {
      std::fprintf(stderr, "%s\n", e.what());
      return 1;
    }
    write_diagnostics_csv(out_dir + "/diagnostics.csv", ds.n_classes, nullptr,
                          &td.probs);
    std::printf("successes=%lld\n", static_cast<long long>(td.successes));
    std::printf("kl_to_uniform=%.6f\n", td.kl_to_uniform);
    return 0;
  }
  if (mode == "confusion") {
    std::optional<int> step;
    if (at_step >= 0) step = at_step;
    ConfusionMatrix m = confusion_matrix(model, ds, cfg, seed, step);
    m.write_csv(out_dir + "/confusion.csv");
    std::printf("confusion matrix written (trace=%lld of %lld)\n",
                static_cast<long long>(m.trace()),
                static_cast<long long>(ds.size()));
    return 0;
  }
  std::fprintf(stderr, "unknown mode '%s'\n", mode.c_str());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial training toolkit with robust-fairness diagnostics"};
  app.require_subcommand(1);

  std::string spec_path, out_path, config_path, ckpt_path, data_path;
  std::string out_dir = ".";
  std::string mode = "steps";
  uint64_t seed = 0;
  int at_step = -1;
  AttackFlags eval_flags;
  AttackFlags analyze_flags;
  analyze_flags.steps = 1000;
  analyze_flags.step_size = 0.4 / 255.0;
  analyze_flags.xi = 0.0;

  auto* gen = app.add_subcommand("gen", "Generate a mixture dataset (FTDS)");
  gen->add_option("spec", spec_path, "mixture spec JSON")->required();
  gen->add_option("out", out_path, "output FTDS path")->required();
  gen->add_option("--seed", seed, "generation seed");

  auto* train = app.add_subcommand("train", "Train per an experiment config");
  train->add_option("config", config_path, "experiment config JSON")->required();

  auto* eval = app.add_subcommand("eval", "Robust-fairness error report");
  eval->add_option("checkpoint", ckpt_path, "model checkpoint")->required();
  eval->add_option("dataset", data_path, "FTDS dataset")->required();
  add_attack_flags(eval, eval_flags);
  eval->add_option("--out-dir", out_dir, "report output directory");
  eval->add_option("--seed", seed, "evaluation seed");

  auto* analyze = app.add_subcommand("analyze", "Fairness diagnostics");
  analyze->add_option("checkpoint", ckpt_path, "model checkpoint")->required();
  analyze->add_option("dataset", data_path, "FTDS dataset")->required();
  analyze->add_option("--mode", mode, "steps | targets | confusion")->required();
  add_attack_flags(analyze, analyze_flags);
  analyze->add_option("--at-step", at_step, "confusion matrix attack step");
  analyze->add_option("--out-dir", out_dir, "output directory");
  analyze->add_option("--seed", seed, "evaluation seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(spec_path, out_path, seed);
    if (train->parsed()) return cmd_train(config_path);
    if (eval->parsed())
      return cmd_eval(ckpt_path, data_path, eval_flags, out_dir, seed);
    if (analyze->parsed()) {
      // Long-run defaults (1000 steps at 0.4/255) apply to the steps mode
      // only; targets/confusion default to the standard evaluation attack.
      if (mode != "steps") {
        if (analyze->count("--steps") == 0) analyze_flags.steps = 20;
        if (analyze->count("--step-size") == 0)
          analyze_flags.step_size = 2.0 / 255.0;
        if (analyze->count("--xi") == 0) analyze_flags.xi = 0.001;
      }
      return cmd_analyze(ckpt_path, data_path, mode, analyze_flags, at_step,
                         out_dir, seed);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
