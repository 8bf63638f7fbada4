#pragma once

#include "fairtensor/data.hpp"
#include "fairtensor/metrics.hpp"
#include "fairtensor/models.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fairtensor {

/// Population of cells whose predictions feed MAD and KS.
enum class FairnessScope { Test, Full };
/// Ranking queries: one per (user, topic) pair, or one per user with scores
/// averaged over topics.
enum class RankScope { UserTopic, User };

struct ExperimentConfig {
  std::optional<std::string> interactions_csv;
  std::optional<std::string> sensitive_csv;
  std::optional<SynthConfig> synth;
  /// When set with `synth`, bias_strength is calibrated to this group-0 to
  /// group-1 positive ratio before generation.
  std::optional<double> synth_target_ratio;

  double negative_probability = 0.00113;
  double train_fraction = 0.7;
  int repeats = 3;
  int k = 15;
  int T = 50;
  std::vector<ModelKind> models{kAllModelKinds.begin(), kAllModelKinds.end()};
  TrainConfig train;
  /// Per-model partial TrainConfig objects layered over `train`.
  std::map<std::string, nlohmann::json> overrides;
  std::uint64_t base_seed = 0;
  FairnessScope fairness_scope = FairnessScope::Test;
  RankScope rank_scope = RankScope::UserTopic;

  TrainConfig config_for(ModelKind kind, std::uint64_t seed) const;
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Positives, optional group labels, and dataset statistics.
struct PreparedData {
  ObservationTensor positives;
  std::optional<SensitiveMap> sensitive;
  nlohmann::json stats;
};

/// Loads the CSV pair or generates the synthetic set. Fills in a calibrated
/// bias_strength when `synth_target_ratio` is given.
PreparedData prepare_data(ExperimentConfig& cfg);

struct EvaluationOptions {
  int k = 15;
  int T = 50;
  RankScope rank_scope = RankScope::UserTopic;
  FairnessScope fairness_scope = FairnessScope::Test;
};

/// Ranking and fairness metrics of one trained model on a split. Throws
/// UndefinedMetricError when a metric has no population.
MetricsRow evaluate_model(const TrainedModel& model, const SplitDataset& split, const SensitiveMap* sensitive,
                          const EvaluationOptions& options);

/// Runs every requested model for `repeats` runs (run r uses base_seed + r for
/// sampling, splitting and initialisation) and appends per-model means when repeats > 1.
/// Per-model failures become error rows. Models within a run train on up to
/// FAIRTENSOR_THREADS threads.
MetricsReport run_experiment(ExperimentConfig cfg, const std::function<void(const std::string&)>& log = {});

/// Writes report.csv and report.json.
void write_report(const MetricsReport& report, const std::filesystem::path& dir);

struct OracleCheck {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
};

// Built-in verification suite.
OracleCheck check_kernel_equivalence();
OracleCheck check_gradients();
OracleCheck check_als();
OracleCheck check_ft_invariants();
OracleCheck check_metric_cases();

std::vector<OracleCheck> run_oracles();

}  // namespace fairtensor
