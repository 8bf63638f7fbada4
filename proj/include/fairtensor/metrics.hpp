#pragma once

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fairtensor {

/// Ranked lists and held-out positives per query (a user, or a user-topic
/// pair). Queries with no positives are skipped; precision divides by k even
/// if a list is shorter. Throws UndefinedMetricError when no query has a
/// positive and std::invalid_argument on k < 1 or mismatched lengths.
double precision_at_k(std::span<const std::vector<int>> ranked, std::span<const std::vector<int>> positives, int k);
double recall_at_k(std::span<const std::vector<int>> ranked, std::span<const std::vector<int>> positives, int k);

/// Number of queries with at least one positive.
std::size_t eligible_queries(std::span<const std::vector<int>> positives);

/// Harmonic mean, 0 when p + r == 0.
double f1_at_k(double precision, double recall);

/// Predicted ratings of the two curator groups.
struct GroupedScores {
  std::vector<double> group0;
  std::vector<double> group1;
};

/// |mean(R0) - mean(R1)|.
double mad(const GroupedScores& scores);

/// Area between the two empirical CDFs, sampled at the right end of T equal
/// intervals over [min, max] of the pooled ratings:
///   | sum_i l * F0(lo + i*l) - sum_i l * F1(lo + i*l) |,  l = (hi - lo) / T.
/// The last boundary is hi itself. Zero when all ratings are equal.
double ks(const GroupedScores& scores, int intervals);

struct MetricsRow {
  std::string model;
  /// "1", "2", ... for individual runs and "mean" for the average.
  std::string run;
  std::optional<std::uint64_t> seed;
  double p_at_k = 0.0;
  double r_at_k = 0.0;
  double f1_at_k = 0.0;
  double mad = 0.0;
  double ks = 0.0;
  std::size_t eligible = 0;
  /// Empty on success; otherwise why the metrics are missing.
  std::string error;
};

struct MetricsReport {
  int k = 15;
  int intervals = 50;
  std::vector<MetricsRow> rows;
  /// Resolved experiment configuration.
  nlohmann::json config;

  /// Header `model,run,seed,p_at_k,r_at_k,f1_at_k,mad,ks`; failed rows carry
  /// "nan" metrics.
  std::string to_csv() const;
  nlohmann::json to_json() const;
  bool ok() const;
  const MetricsRow* find(const std::string& model, const std::string& run) const;
};

}  // namespace fairtensor
