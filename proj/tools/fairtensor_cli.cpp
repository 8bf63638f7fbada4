// Command-line front end: synth, train, evaluate, experiment, oracle.

#include "fairtensor/errors.hpp"
#include "fairtensor/harness.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fairtensor;

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::string models;
};

void add_common(CLI::App* cmd, Common& c, bool with_models) {
  cmd->add_option("--config", c.config, "JSON config file");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--seed", c.seed, "override base seed");
  if (with_models) cmd->add_option("--models", c.models, "comma-separated model list, e.g. OTC,FT");
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + " is not valid JSON: " + e.what());
  }
}

std::vector<ModelKind> parse_models(const std::string& list) {
  std::vector<ModelKind> out;
  std::stringstream in(list);
  std::string name;
  while (std::getline(in, name, ',')) {
    if (!name.empty()) out.push_back(parse_model_kind(name));
  }
  return out;
}

ExperimentConfig experiment_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment_config(c.config);
  if (c.config.empty()) cfg.synth = SynthConfig{};
  if (c.seed) cfg.base_seed = *c.seed;
  if (!c.models.empty()) cfg.models = parse_models(c.models);
  return cfg;
}

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

int cmd_synth(const Common& c) {
  SynthConfig cfg;
  std::optional<double> target;
  if (!c.config.empty()) {
    const json j = read_json(c.config);
    cfg = j.get<SynthConfig>();
    if (j.contains("target_positive_ratio")) target = j.at("target_positive_ratio").get<double>();
  }
  if (c.seed) cfg.seed = *c.seed;
  if (target) {
    cfg.bias_strength = calibrate_bias(cfg, *target);
    log_line("calibrated bias_strength " + std::to_string(cfg.bias_strength));
  }
  const SynthDataset data = synth_generate(cfg);
  write_synth(c.out, cfg, data);
  std::cout << "wrote " << data.observations.size() << " positives (" << data.positives_group0 << " group 0, "
            << data.positives_group1 << " group 1) to " << c.out << '\n';
  return 0;
}

int cmd_train(const Common& c) {
  ExperimentConfig cfg = experiment_config(c);
  if (cfg.models.size() != 1) throw ConfigError("train takes exactly one model (use --models)");
  const ModelKind kind = cfg.models.front();
  PreparedData data = prepare_data(cfg);
  const SensitiveMap* sensitive = data.sensitive ? &*data.sensitive : nullptr;
  if (needs_sensitive(kind) && !sensitive) throw ConfigError(std::string(to_string(kind)) + " requires a sensitive map");

  // Same seeding as run 1 of an experiment.
  const std::uint64_t seed = cfg.base_seed + 1;
  const SplitDataset split_data = split(negative_sample(data.positives, cfg.negative_probability, seed), cfg.train_fraction, seed);
  const TrainedModel model = train_model(kind, split_data.train, sensitive, cfg.config_for(kind, seed));
  for (const auto& w : model.warnings) log_line("warning: " + w);

  fs::create_directories(c.out);
  save_checkpoint(model, fs::path(c.out) / "checkpoint.json");
  std::ofstream(fs::path(c.out) / "split.json") << split_json(split_data, sensitive).dump() << '\n';
  std::cout << "trained " << to_string(kind) << " (" << model.loss_traces.front().size() - 1
            << " iterations); wrote checkpoint.json and split.json to " << c.out << '\n';
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& split_path, const Common& c, int k, int intervals,
                 const std::string& rank_scope, const std::string& fairness_scope) {
  const TrainedModel model = load_checkpoint(checkpoint);
  std::optional<SensitiveMap> sensitive;
  const SplitDataset split_data = split_from_json(read_json(split_path), &sensitive);
  if (!(split_data.test.dims() == model.dims)) throw ConfigError("checkpoint and split dimensions differ");

  EvaluationOptions options{k, intervals, rank_scope == "user" ? RankScope::User : RankScope::UserTopic,
                            fairness_scope == "full" ? FairnessScope::Full : FairnessScope::Test};
  MetricsReport report;
  report.k = k;
  report.intervals = intervals;
  report.config = {{"checkpoint", checkpoint}, {"split", split_path}, {"model_config", model.config},
                   {"rank_scope", rank_scope}, {"fairness_scope", fairness_scope}};
  MetricsRow row;
  try {
    row = evaluate_model(model, split_data, sensitive ? &*sensitive : nullptr, options);
  } catch (const Error& e) {
    row.error = e.what();
  }
  row.model = std::string(to_string(model.kind));
  row.run = "1";
  row.seed = split_data.seed;
  report.rows.push_back(row);
  write_report(report, c.out);
  std::cout << report.to_csv();
  return report.ok() ? 0 : 1;
}

int cmd_experiment(const Common& c) {
  const MetricsReport report = run_experiment(experiment_config(c), log_line);
  write_report(report, c.out);
  std::cout << report.to_csv();
  return report.ok() ? 0 : 1;
}

int cmd_oracle() {
  bool all = true;
  for (const OracleCheck& check : run_oracles()) {
    std::printf("[%s] %-28s %s\n", check.passed ? "PASS" : "FAIL", check.name.c_str(), check.detail.c_str());
    all = all && check.passed;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness-aware tensor and matrix factorization recommenders"};
  app.require_subcommand(1);

  Common synth_opts, train_opts, eval_opts, exp_opts;
  auto* synth = app.add_subcommand("synth", "write a synthetic biased dataset");
  add_common(synth, synth_opts, false);

  auto* train = app.add_subcommand("train", "train one model and write a checkpoint plus its split");
  add_common(train, train_opts, true);

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a split");
  add_common(evaluate, eval_opts, false);
  std::string checkpoint, split_path, rank_scope = "user_topic", fairness_scope = "test";
  int k = 15, intervals = 50;
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint.json from train")->required();
  evaluate->add_option("--split", split_path, "split.json from train")->required();
  evaluate->add_option("-k", k, "cutoff for P@k / R@k");
  evaluate->add_option("-T", intervals, "KS interval count");
  evaluate->add_option("--rank-scope", rank_scope)->check(CLI::IsMember({"user_topic", "user"}));
  evaluate->add_option("--fairness-scope", fairness_scope)->check(CLI::IsMember({"test", "full"}));

  auto* experiment = app.add_subcommand("experiment", "run the full protocol from a config");
  add_common(experiment, exp_opts, true);

  auto* oracle_cmd = app.add_subcommand("oracle", "run the built-in verification checks");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(synth_opts);
    if (*train) return cmd_train(train_opts);
    if (*evaluate) return cmd_evaluate(checkpoint, split_path, eval_opts, k, intervals, rank_scope, fairness_scope);
    if (*experiment) return cmd_experiment(exp_opts);
    if (*oracle_cmd) return cmd_oracle();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
