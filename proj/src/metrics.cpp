#include "fairtensor/metrics.hpp"

#include "fairtensor/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace fairtensor {

namespace {

void check_lists(std::span<const std::vector<int>> ranked, std::span<const std::vector<int>> positives, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (ranked.size() != positives.size()) throw std::invalid_argument("ranked and positive lists differ in length");
}

std::size_t hits_at_k(const std::vector<int>& ranked, const std::vector<int>& positives, int k) {
  const std::unordered_set<int> pos(positives.begin(), positives.end());
  const std::size_t n = std::min(ranked.size(), static_cast<std::size_t>(k));
  return static_cast<std::size_t>(
      std::count_if(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), [&](int c) { return pos.count(c) > 0; }));
}

template <typename PerQuery>
double average_over_eligible(std::span<const std::vector<int>> ranked, std::span<const std::vector<int>> positives,
                             PerQuery per_query) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t q = 0; q < ranked.size(); ++q) {
    if (positives[q].empty()) continue;
    sum += per_query(ranked[q], positives[q]);
    ++n;
  }
  if (n == 0) throw UndefinedMetricError("no query has a held-out positive");
  return sum / static_cast<double>(n);
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void check_groups(const GroupedScores& s) {
  if (s.group0.empty() || s.group1.empty()) throw UndefinedMetricError("fairness metric needs both groups nonempty");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double precision_at_k(std::span<const std::vector<int>> ranked, std::span<const std::vector<int>> positives, int k) {
  check_lists(ranked, positives, k);
  return average_over_eligible(ranked, positives, [k](const auto& r, const auto& p) {
    return static_cast<double>(hits_at_k(r, p, k)) / static_cast<double>(k);
  });
}

double recall_at_k(std::span<const std::vector<int>> ranked, std::span<const std::vector<int>> positives, int k) {
  check_lists(ranked, positives, k);
  return average_over_eligible(ranked, positives, [k](const auto& r, const auto& p) {
    const std::size_t distinct = std::unordered_set<int>(p.begin(), p.end()).size();
    return static_cast<double>(hits_at_k(r, p, k)) / static_cast<double>(distinct);
  });
}

std::size_t eligible_queries(std::span<const std::vector<int>> positives) {
  return static_cast<std::size_t>(
      std::count_if(positives.begin(), positives.end(), [](const auto& p) { return !p.empty(); }));
}

double f1_at_k(double precision, double recall) {
  if (precision < 0.0 || recall < 0.0) throw std::invalid_argument("precision and recall must be >= 0");
  const double sum = precision + recall;
  return sum == 0.0 ? 0.0 : 2.0 * precision * recall / sum;
}

double mad(const GroupedScores& scores) {
  check_groups(scores);
  return std::abs(mean(scores.group0) - mean(scores.group1));
}

double ks(const GroupedScores& scores, int intervals) {
  if (intervals < 1) throw std::invalid_argument("interval count must be >= 1");
  check_groups(scores);
  std::vector<double> r0 = scores.group0;
  std::vector<double> r1 = scores.group1;
  std::sort(r0.begin(), r0.end());
  std::sort(r1.begin(), r1.end());
  const double lo = std::min(r0.front(), r1.front());
  const double hi = std::max(r0.back(), r1.back());
  if (hi == lo) return 0.0;
  const double width = (hi - lo) / intervals;

  auto cdf = [](const std::vector<double>& sorted, double x) {
    return static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin()) /
           static_cast<double>(sorted.size());
  };
  double area0 = 0.0;
  double area1 = 0.0;
  for (int i = 1; i <= intervals; ++i) {
    const double boundary = i == intervals ? hi : lo + i * width;
    area0 += width * cdf(r0, boundary);
    area1 += width * cdf(r1, boundary);
  }
  return std::abs(area0 - area1);
}

std::string MetricsReport::to_csv() const {
  std::string out = "model,run,seed,p_at_k,r_at_k,f1_at_k,mad,ks\n";
  for (const MetricsRow& row : rows) {
    const bool failed = !row.error.empty();
    auto cell = [&](double v) { return failed ? std::string("nan") : format_double(v); };
    out += row.model + ',' + row.run + ',' + (row.seed ? std::to_string(*row.seed) : std::string()) + ',' +
           cell(row.p_at_k) + ',' + cell(row.r_at_k) + ',' + cell(row.f1_at_k) + ',' + cell(row.mad) + ',' +
           cell(row.ks) + '\n';
  }
  return out;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const MetricsRow& row : rows) {
    nlohmann::json r{{"model", row.model}, {"run", row.run}, {"eligible_queries", row.eligible}};
    r["seed"] = row.seed ? nlohmann::json(*row.seed) : nlohmann::json(nullptr);
    if (row.error.empty()) {
      r["p_at_k"] = row.p_at_k;
      r["r_at_k"] = row.r_at_k;
      r["f1_at_k"] = row.f1_at_k;
      r["mad"] = row.mad;
      r["ks"] = row.ks;
    } else {
      r["error"] = row.error;
    }
    rows_json.push_back(std::move(r));
  }
  return {{"k", k}, {"T", intervals}, {"config", config}, {"rows", std::move(rows_json)}};
}

bool MetricsReport::ok() const {
  return std::all_of(rows.begin(), rows.end(), [](const MetricsRow& r) { return r.error.empty(); });
}

const MetricsRow* MetricsReport::find(const std::string& model, const std::string& run) const {
  auto it = std::find_if(rows.begin(), rows.end(), [&](const MetricsRow& r) { return r.model == model && r.run == run; });
  return it == rows.end() ? nullptr : &*it;
}

}  // namespace fairtensor
