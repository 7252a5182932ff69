#include "fairbat/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "fairbat/rng.hpp"

namespace fairbat {

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json ds;
  if (!dataset_path.empty()) ds["path"] = dataset_path;
  if (mixture) ds["mixture"] = mixture->to_json();
  if (!dataset_preset.empty()) ds["preset"] = dataset_preset;
  nlohmann::json j = {{"seed", seed},
                      {"output_dir", output_dir},
                      {"dataset", ds},
                      {"model", model.to_json()},
                      {"train", train.to_json()}};
  if (!exclude_classes.empty()) j["exclude_classes"] = exclude_classes;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.seed = j.value("seed", uint64_t{0});
  c.output_dir = j.value("output_dir", std::string{"out"});
  const auto& ds = j.at("dataset");
  int sources = 0;
  if (ds.contains("path")) {
    c.dataset_path = ds.at("path").get<std::string>();
    ++sources;
  }
  if (ds.contains("mixture")) {
    c.mixture = MixtureSpec::from_json(ds.at("mixture"));
    ++sources;
  }
  if (ds.contains("preset")) {
    c.dataset_preset = ds.at("preset").get<std::string>();
    ++sources;
  }
  if (sources != 1)
    throw Error("experiment config: dataset needs exactly one of path/mixture/preset");
  if (j.contains("exclude_classes"))
    c.exclude_classes = j.at("exclude_classes").get<std::vector<int>>();
  c.model = ModelSpec::from_json(j.at("model"));
  c.train = TrainConfig::from_json(j.at("train"));
  c.train.seed = c.seed;
  return c;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("experiment config: cannot open '" + path + "'");
  return from_json(nlohmann::json::parse(f));
}

Dataset ExperimentConfig::resolve_dataset() const {
  Dataset ds;
  if (!dataset_path.empty()) {
    ds = load_dataset(dataset_path);
  } else if (mixture) {
    ds = gen_mixture(*mixture, mix_seed(seed, 0x64617461ULL));
  } else if (dataset_preset == "fairness_stress") {
    ds = gen_mixture(fairness_stress_spec(), mix_seed(seed, 0x64617461ULL));
  } else {
    throw Error("experiment config: unknown dataset preset '" + dataset_preset + "'");
  }
  if (!exclude_classes.empty())
    ds = filter_classes(ds, std::set<int>(exclude_classes.begin(),
                                          exclude_classes.end()));
  return ds;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  Dataset ds = cfg.resolve_dataset();

  ModelSpec spec = cfg.model;
  if (!cfg.exclude_classes.empty()) spec.n_classes = ds.n_classes;

  auto [model, history] = train(cfg.train, spec, ds);

  RunResult r;
  r.checkpoint_path = cfg.output_dir + "/checkpoint.fbm";
  r.history_path = cfg.output_dir + "/history.csv";
  save_checkpoint(model, r.checkpoint_path);
  history.write_csv(r.history_path);
  {
    std::ofstream f(cfg.output_dir + "/config.json");
    nlohmann::json echo = cfg.to_json();
    echo["model"] = spec.to_json();  // reflects any class filtering
    f << echo.dump(2) << "\n";
  }
  r.model = std::move(model);
  r.history = std::move(history);
  return r;
}

}  // namespace fairbat
