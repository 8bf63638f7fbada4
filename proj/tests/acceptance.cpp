// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "fairtensor/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include <unistd.h>

using namespace fairtensor;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool passed, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", passed ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!passed) ++failures;
}

template <typename F>
double timed(F&& f) {
  const auto start = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string secs(double s) {
  std::ostringstream out;
  out << s << " s";
  return out.str();
}

void oracle_criterion(int id, const std::string& name, const std::function<OracleCheck()>& run, double limit) {
  OracleCheck check;
  const double t = timed([&] { check = run(); });
  const std::string budget = std::isfinite(limit) ? " (limit " + secs(limit) + ")" : "";
  report(id, name, check.passed && t < limit, check.detail + "; " + secs(t) + budget);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// N=589, M=252, K=10, 16,867 positives, positives split 11,612 : 5,255.
ExperimentConfig full_scale_config() {
  ExperimentConfig cfg;
  cfg.synth = SynthConfig{};
  cfg.synth_target_ratio = 11612.0 / 5255.0;
  cfg.repeats = 3;
  cfg.k = 15;
  cfg.T = 50;
  cfg.train.rank = 20;
  return cfg;
}

double mean_of(const MetricsReport& r, const char* model, double MetricsRow::*field) {
  const MetricsRow* row = r.find(model, "mean");
  return row && row->error.empty() ? row->*field : NAN;
}

}  // namespace

int main() {
  oracle_criterion(1, "kernel oracle equivalence", check_kernel_equivalence, 1.0);
  oracle_criterion(2, "gradient correctness", check_gradients, 10.0);
  oracle_criterion(3, "ALS monotonicity and recovery", check_als, 30.0);
  oracle_criterion(4, "FT structural invariants", check_ft_invariants, INFINITY);
  oracle_criterion(5, "metric hand cases", check_metric_cases, INFINITY);

  const fs::path out = fs::temp_directory_path() / ("fairtensor_acceptance_" + std::to_string(::getpid()));
  MetricsReport first;
  const double t6 = timed([&] {
    first = run_experiment(full_scale_config());
    write_report(first, out / "a");
  });
  {
    const double ks_ft = mean_of(first, "FT", &MetricsRow::ks);
    const double ks_rtc = mean_of(first, "RTC", &MetricsRow::ks);
    const double ks_otc = mean_of(first, "OTC", &MetricsRow::ks);
    const double ks_fm = mean_of(first, "FM", &MetricsRow::ks);
    const double ks_omc = mean_of(first, "OMC", &MetricsRow::ks);
    const double mad_ft = mean_of(first, "FT", &MetricsRow::mad);
    const double mad_otc = mean_of(first, "OTC", &MetricsRow::mad);
    const double f1_ft = mean_of(first, "FT", &MetricsRow::f1_at_k);
    const double f1_otc = mean_of(first, "OTC", &MetricsRow::f1_at_k);
    const bool ordering = ks_ft < ks_rtc && ks_rtc < ks_otc;
    const bool matrix = ks_fm < ks_omc;
    const bool mad_ok = mad_ft < mad_otc;
    const bool quality = f1_ft >= 0.75 * f1_otc;
    std::ostringstream d;
    d << "KS FT " << ks_ft << " < RTC " << ks_rtc << " < OTC " << ks_otc << (ordering ? "" : " (violated)")
      << "; KS FM " << ks_fm << " < OMC " << ks_omc << (matrix ? "" : " (violated)") << "; MAD FT " << mad_ft
      << " < OTC " << mad_otc << (mad_ok ? "" : " (violated)") << "; F1@15 FT " << f1_ft << " >= 0.75 x OTC "
      << f1_otc << (quality ? "" : " (violated)") << "; " << secs(t6) << " (limit 900 s)";
    report(6, "fairness ordering on full-scale data", first.ok() && ordering && matrix && mad_ok && quality && t6 < 900.0,
           d.str());
  }

  {
    write_report(run_experiment(full_scale_config()), out / "b");
    const bool same = slurp(out / "a" / "report.csv") == slurp(out / "b" / "report.csv") &&
                      slurp(out / "a" / "report.json") == slurp(out / "b" / "report.json") &&
                      !slurp(out / "a" / "report.csv").empty();
    const SynthDataset reference = synth_generate(SynthConfig{});
    const double unobserved = 589.0 * 252.0 * 10.0 - static_cast<double>(reference.observations.size());
    const double p = 0.00113;
    const double sigma = std::sqrt(unobserved * p * (1 - p));
    const double negatives = static_cast<double>(negative_sample(reference.observations, p, 1).count_value(0.0));
    const bool count_ok = std::abs(negatives - 1658.0) < 3 * sigma;
    std::ostringstream d;
    d << "report files " << (same ? "byte-identical" : "DIFFER") << " across two executions; " << negatives
      << " negatives vs 1658 +- " << 3 * sigma;
    report(7, "protocol reproducibility", same && count_ok, d.str());
  }
  fs::remove_all(out);

  const std::string cmd = std::string("\"") + FAIRTENSOR_CLI + "\" oracle > /dev/null";
  const int status = std::system(cmd.c_str());
  report(8, "oracle subcommand", status == 0, "exit status " + std::to_string(status));

  std::printf("%s: %d of 8 criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
