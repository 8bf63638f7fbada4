#include "doctest.h"

#include "fairtensor/errors.hpp"
#include "fairtensor/metrics.hpp"
#include "fairtensor/oracles.hpp"
#include "fairtensor/rng.hpp"

#include <cmath>
#include <vector>

using namespace fairtensor;

namespace {

using Lists = std::vector<std::vector<int>>;

GroupedScores random_scores(Rng& rng, std::size_t max_size) {
  GroupedScores s;
  const std::size_t n0 = 1 + rng.below(max_size);
  const std::size_t n1 = 1 + rng.below(max_size);
  for (std::size_t n = 0; n < n0; ++n) s.group0.push_back(rng.uniform(-2.0, 3.0));
  for (std::size_t n = 0; n < n1; ++n) s.group1.push_back(rng.uniform(-2.0, 3.0));
  return s;
}

GroupedScores affine(const GroupedScores& s, double a, double b) {
  GroupedScores out = s;
  for (double& x : out.group0) x = a * x + b;
  for (double& x : out.group1) x = a * x + b;
  return out;
}

double range_of(const GroupedScores& s) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto* g : {&s.group0, &s.group1})
    for (double x : *g) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  return hi - lo;
}

}  // namespace

TEST_CASE("precision_at_k examples") {
  const Lists top{{0, 1}};
  CHECK(precision_at_k(top, Lists{{0, 1}}, 2) == 1.0);
  CHECK(precision_at_k(top, Lists{{2}}, 2) == 0.0);
  CHECK(precision_at_k(Lists{{0, 1}, {0, 1}}, Lists{{0, 1}, {1}}, 2) == 0.75);
}

TEST_CASE("recall_at_k examples") {
  CHECK(recall_at_k(Lists{{0, 2, 9}}, Lists{{0, 1, 2, 3}}, 3) == 0.5);
  CHECK(recall_at_k(Lists{{3, 1}}, Lists{{1, 3}}, 2) == 1.0);
  CHECK(recall_at_k(Lists{{0}, {5}}, Lists{{0}, {6}}, 1) == 0.5);
}

TEST_CASE("ranking metrics skip queries without positives") {
  const Lists ranked{{0, 1}, {2, 3}};
  CHECK(precision_at_k(ranked, Lists{{0}, {}}, 2) == 0.5);
  CHECK(eligible_queries(Lists{{0}, {}}) == 1);
  CHECK_THROWS_AS(precision_at_k(ranked, Lists{{}, {}}, 2), UndefinedMetricError);
  CHECK_THROWS_AS(recall_at_k(ranked, Lists{{}, {}}, 2), UndefinedMetricError);
  CHECK_THROWS_AS(precision_at_k(ranked, Lists{{0}}, 2), std::invalid_argument);
  CHECK_THROWS_AS(precision_at_k(ranked, Lists{{0}, {1}}, 0), std::invalid_argument);
}

TEST_CASE("ranking metrics stay in [0, 1]") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    Lists ranked(5), positives(5);
    for (int q = 0; q < 5; ++q) {
      for (int c = 0; c < 10; ++c) {
        if (rng.bernoulli(0.4)) ranked[static_cast<std::size_t>(q)].push_back(c);
        if (rng.bernoulli(0.3)) positives[static_cast<std::size_t>(q)].push_back(c);
      }
    }
    positives[0].push_back(0);
    const int k = 1 + static_cast<int>(rng.below(8));
    const double p = precision_at_k(ranked, positives, k);
    const double r = recall_at_k(ranked, positives, k);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    const double f = f1_at_k(p, r);
    CHECK(f <= std::max(p, r) + 1e-15);
    CHECK(f >= std::min(p, r) - 1e-15);
  }
}

TEST_CASE("f1_at_k examples") {
  CHECK(f1_at_k(0.5, 0.5) == 0.5);
  CHECK(f1_at_k(0.0, 0.0) == 0.0);
  CHECK(f1_at_k(0.0958, 0.4384) == doctest::Approx(0.15724).epsilon(1e-4));
  CHECK(std::abs(f1_at_k(0.0958, 0.4384) - 0.1572) <= 5e-4);
}

TEST_CASE("mad examples") {
  CHECK(mad({{1, 2, 3}, {2, 3, 4}}) == 1.0);
  CHECK(mad({{1, 5}, {1, 5}}) == 0.0);
  CHECK(mad({{0, 0}, {1}}) == 1.0);
  CHECK_THROWS_AS(mad({{}, {1}}), UndefinedMetricError);
}

TEST_CASE("ks examples") {
  CHECK(ks({{0.3, 0.7}, {0.3, 0.7}}, 50) == 0.0);
  CHECK(ks({{0, 0}, {1, 1}}, 50) == doctest::Approx(0.98).epsilon(1e-12));
  CHECK(ks({{0, 1}, {1, 1}}, 50) == doctest::Approx(0.49).epsilon(1e-12));
  CHECK(ks({{2, 2}, {2}}, 50) == 0.0);
  CHECK_THROWS_AS(ks({{1}, {}}, 50), UndefinedMetricError);
  CHECK_THROWS_AS(ks({{1}, {2}}, 0), std::invalid_argument);
}

TEST_CASE("mad and ks are symmetric under group swap and shift invariant") {
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const GroupedScores s = random_scores(rng, 20);
    const GroupedScores swapped{s.group1, s.group0};
    CHECK(mad(swapped) == doctest::Approx(mad(s)).epsilon(1e-12));
    CHECK(ks(swapped, 50) == doctest::Approx(ks(s, 50)).epsilon(1e-12));
    const double shift = rng.uniform(-10.0, 10.0);
    const GroupedScores moved = affine(s, 1.0, shift);
    CHECK(mad(moved) == doctest::Approx(mad(s)).scale(1.0).epsilon(1e-9));
    CHECK(ks(moved, 50) == doctest::Approx(ks(s, 50)).scale(1.0).epsilon(1e-9));
  }
}

TEST_CASE("ks scales with a positive rescaling of all scores") {
  // Widths and range rescale together, so the area scales by the factor.
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const GroupedScores s = random_scores(rng, 20);
    const double a = rng.uniform(0.1, 10.0);
    CHECK(ks(affine(s, a, rng.uniform(-1.0, 1.0)), 50) == doctest::Approx(a * ks(s, 50)).scale(1.0).epsilon(1e-9));
    CHECK(mad(affine(s, a, 0.0)) == doctest::Approx(a * mad(s)).scale(1.0).epsilon(1e-9));
  }
}

TEST_CASE("ks is zero for identical multisets and bounded by the range") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    GroupedScores s = random_scores(rng, 15);
    CHECK(ks(s, 50) <= range_of(s) + 1e-12);
    GroupedScores same{s.group0, s.group0};
    std::reverse(same.group1.begin(), same.group1.end());
    CHECK(ks(same, 50) == 0.0);
  }
}

TEST_CASE("ks agrees with the exact ECDF area within one interval width") {
  Rng rng(13);
  for (int trial = 0; trial < 500; ++trial) {
    const GroupedScores s = random_scores(rng, 6);
    const double exact = std::abs(oracle::ecdf_signed_area(s.group0, s.group1));
    const double width = range_of(s) / 50.0;
    CHECK(std::abs(ks(s, 50) - exact) <= width + 1e-12);
  }
}

TEST_CASE("report CSV layout") {
  MetricsReport report;
  MetricsRow ok{"OTC", "1", 1, 0.25, 0.5, 1.0 / 3.0, 0.1, 0.2, 4, ""};
  MetricsRow bad{"FT", "mean", std::nullopt, 0, 0, 0, 0, 0, 0, "no sensitive map"};
  report.rows = {ok, bad};
  CHECK(report.to_csv() ==
        "model,run,seed,p_at_k,r_at_k,f1_at_k,mad,ks\n"
        "OTC,1,1,0.25,0.5,0.33333333333333331,0.10000000000000001,0.20000000000000001\n"
        "FT,mean,,nan,nan,nan,nan,nan\n");
  CHECK_FALSE(report.ok());
  CHECK(report.find("OTC", "1") != nullptr);
  CHECK(report.find("OTC", "2") == nullptr);
  const auto j = report.to_json();
  CHECK(j.at("rows").at(1).at("error") == "no sensitive map");
  CHECK(j.at("rows").at(0).at("f1_at_k").get<double>() == 1.0 / 3.0);
}
