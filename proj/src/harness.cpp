#include "fairtensor/harness.hpp"

#include "fairtensor/errors.hpp"
#include "fairtensor/oracles.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace fairtensor {

using nlohmann::json;

namespace {

std::string to_string(FairnessScope s) { return s == FairnessScope::Test ? "test" : "full"; }
std::string to_string(RankScope s) { return s == RankScope::UserTopic ? "user_topic" : "user"; }

FairnessScope parse_fairness_scope(const std::string& s) {
  if (s == "test") return FairnessScope::Test;
  if (s == "full") return FairnessScope::Full;
  throw ConfigError("fairness_scope must be 'test' or 'full'");
}

RankScope parse_rank_scope(const std::string& s) {
  if (s == "user_topic") return RankScope::UserTopic;
  if (s == "user") return RankScope::User;
  throw ConfigError("rank_scope must be 'user_topic' or 'user'");
}

}  // namespace

TrainConfig ExperimentConfig::config_for(ModelKind kind, std::uint64_t seed) const {
  TrainConfig out = train;
  if (auto it = overrides.find(std::string(fairtensor::to_string(kind))); it != overrides.end()) {
    from_json(it->second, out);
  }
  out.seed = seed;
  return out;
}

void ExperimentConfig::validate() const {
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (models.empty()) throw ConfigError("models must be nonempty");
  if (k < 1 || T < 1) throw ConfigError("k and T must be >= 1");
  if (synth.has_value() == interactions_csv.has_value()) {
    throw ConfigError("exactly one of 'synth' or 'interactions_csv' must be given");
  }
  if (sensitive_csv && !interactions_csv) throw ConfigError("sensitive_csv requires interactions_csv");
  for (const auto& [name, _] : overrides) parse_model_kind(name);
}

void to_json(json& j, const ExperimentConfig& cfg) {
  j = json::object();
  if (cfg.interactions_csv) j["interactions_csv"] = *cfg.interactions_csv;
  if (cfg.sensitive_csv) j["sensitive_csv"] = *cfg.sensitive_csv;
  if (cfg.synth) {
    j["synth"] = *cfg.synth;
    if (cfg.synth_target_ratio) j["synth"]["target_positive_ratio"] = *cfg.synth_target_ratio;
  }
  j["negative_probability"] = cfg.negative_probability;
  j["train_fraction"] = cfg.train_fraction;
  j["repeats"] = cfg.repeats;
  j["k"] = cfg.k;
  j["T"] = cfg.T;
  json models = json::array();
  for (ModelKind m : cfg.models) models.push_back(std::string(fairtensor::to_string(m)));
  j["models"] = std::move(models);
  j["train"] = cfg.train;
  j["overrides"] = cfg.overrides;
  j["base_seed"] = cfg.base_seed;
  j["fairness_scope"] = to_string(cfg.fairness_scope);
  j["rank_scope"] = to_string(cfg.rank_scope);
}

void from_json(const json& j, ExperimentConfig& cfg) {
  try {
    if (j.contains("interactions_csv")) cfg.interactions_csv = j.at("interactions_csv").get<std::string>();
    if (j.contains("sensitive_csv")) cfg.sensitive_csv = j.at("sensitive_csv").get<std::string>();
    if (j.contains("synth")) {
      cfg.synth = j.at("synth").get<SynthConfig>();
      if (j.at("synth").contains("target_positive_ratio")) {
        cfg.synth_target_ratio = j.at("synth").at("target_positive_ratio").get<double>();
      }
    }
    cfg.negative_probability = j.value("negative_probability", cfg.negative_probability);
    cfg.train_fraction = j.value("train_fraction", cfg.train_fraction);
    cfg.repeats = j.value("repeats", cfg.repeats);
    cfg.k = j.value("k", cfg.k);
    cfg.T = j.value("T", cfg.T);
    if (j.contains("models")) {
      cfg.models.clear();
      for (const auto& m : j.at("models")) cfg.models.push_back(parse_model_kind(m.get<std::string>()));
    }
    if (j.contains("train")) from_json(j.at("train"), cfg.train);
    if (j.contains("overrides")) cfg.overrides = j.at("overrides").get<std::map<std::string, json>>();
    cfg.base_seed = j.value("base_seed", cfg.base_seed);
    if (j.contains("fairness_scope")) cfg.fairness_scope = parse_fairness_scope(j.at("fairness_scope").get<std::string>());
    if (j.contains("rank_scope")) cfg.rank_scope = parse_rank_scope(j.at("rank_scope").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg = j.get<ExperimentConfig>();
  // Relative CSV paths resolve against the config file's directory.
  const auto base = path.parent_path();
  for (auto* p : {&cfg.interactions_csv, &cfg.sensitive_csv}) {
    if (*p && std::filesystem::path(**p).is_relative()) *p = (base / **p).lexically_normal().string();
  }
  return cfg;
}

PreparedData prepare_data(ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.synth) {
    if (cfg.synth_target_ratio) cfg.synth->bias_strength = calibrate_bias(*cfg.synth, *cfg.synth_target_ratio);
    SynthDataset data = synth_generate(*cfg.synth);
    json stats{{"positives", data.observations.size()},
               {"sparsity", data.observations.sparsity()},
               {"positives_group0", data.positives_group0},
               {"positives_group1", data.positives_group1}};
    return {std::move(data.observations), std::move(data.groups), std::move(stats)};
  }
  const InteractionData interactions = load_interactions(*cfg.interactions_csv);
  PreparedData out{interactions.positives(), std::nullopt, {}};
  if (cfg.sensitive_csv) out.sensitive = load_sensitive(*cfg.sensitive_csv, interactions.curators);
  out.stats = {{"positives", out.positives.size()}, {"sparsity", out.positives.sparsity()}};
  return out;
}

namespace {

// Positive curators per (user, topic) pair, key i * K + k.
std::vector<std::vector<int>> positives_by_pair(const ObservationTensor& obs) {
  const Dims d = obs.dims();
  std::vector<std::vector<int>> out(static_cast<std::size_t>(d.users) * static_cast<std::size_t>(d.topics));
  for (const Entry& e : obs.entries()) {
    if (e.value > 0.0) out[static_cast<std::size_t>(e.i) * static_cast<std::size_t>(d.topics) + static_cast<std::size_t>(e.k)].push_back(e.j);
  }
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

}  // namespace

MetricsRow evaluate_model(const TrainedModel& model, const SplitDataset& split, const SensitiveMap* sensitive,
                          const EvaluationOptions& options) {
  const Dims d = split.test.dims();
  const auto train_pos = positives_by_pair(split.train);
  const auto test_pos = positives_by_pair(split.test);

  std::vector<std::vector<int>> ranked;
  std::vector<std::vector<int>> relevant;
  if (options.rank_scope == RankScope::UserTopic) {
    for (int i = 0; i < d.users; ++i) {
      for (int k = 0; k < d.topics; ++k) {
        const std::size_t key = static_cast<std::size_t>(i) * static_cast<std::size_t>(d.topics) + static_cast<std::size_t>(k);
        if (test_pos[key].empty()) continue;
        ranked.push_back(top_k(model, i, k, options.k, train_pos[key]));
        relevant.push_back(test_pos[key]);
      }
    }
  } else {
    for (int i = 0; i < d.users; ++i) {
      std::vector<bool> held(static_cast<std::size_t>(d.curators), false);
      std::vector<bool> seen(static_cast<std::size_t>(d.curators), false);
      for (int k = 0; k < d.topics; ++k) {
        const std::size_t key = static_cast<std::size_t>(i) * static_cast<std::size_t>(d.topics) + static_cast<std::size_t>(k);
        for (int j : test_pos[key]) held[static_cast<std::size_t>(j)] = true;
        for (int j : train_pos[key]) seen[static_cast<std::size_t>(j)] = true;
      }
      std::vector<int> positives;
      for (int j = 0; j < d.curators; ++j)
        if (held[static_cast<std::size_t>(j)] && !seen[static_cast<std::size_t>(j)]) positives.push_back(j);
      if (positives.empty()) continue;
      std::vector<std::pair<double, int>> scored;
      for (int j = 0; j < d.curators; ++j) {
        if (seen[static_cast<std::size_t>(j)]) continue;
        double s = 0.0;
        for (int k = 0; k < d.topics; ++k) s += predict(model, i, j, k);
        scored.emplace_back(s / d.topics, j);
      }
      const auto n = static_cast<std::ptrdiff_t>(std::min<std::size_t>(static_cast<std::size_t>(options.k), scored.size()));
      std::partial_sort(scored.begin(), scored.begin() + n, scored.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      std::vector<int> list;
      for (std::ptrdiff_t r = 0; r < n; ++r) list.push_back(scored[static_cast<std::size_t>(r)].second);
      ranked.push_back(std::move(list));
      relevant.push_back(std::move(positives));
    }
  }

  MetricsRow row;
  row.model = std::string(to_string(model.kind));
  row.eligible = eligible_queries(relevant);
  row.p_at_k = precision_at_k(ranked, relevant, options.k);
  row.r_at_k = recall_at_k(ranked, relevant, options.k);
  row.f1_at_k = f1_at_k(row.p_at_k, row.r_at_k);

  if (!sensitive) throw UndefinedMetricError("no sensitive map: MAD and KS need curator groups");
  GroupedScores scores;
  auto add = [&](int i, int j, int k) {
    (sensitive->group(j) == 0 ? scores.group0 : scores.group1).push_back(predict(model, i, j, k));
  };
  if (options.fairness_scope == FairnessScope::Test) {
    for (const Entry& e : split.test.entries()) add(e.i, e.j, e.k);
  } else {
    for (int i = 0; i < d.users; ++i)
      for (int j = 0; j < d.curators; ++j)
        for (int k = 0; k < d.topics; ++k) add(i, j, k);
  }
  row.mad = mad(scores);
  row.ks = ks(scores, options.T);
  return row;
}

namespace {

unsigned thread_cap() {
  if (const char* env = std::getenv("FAIRTENSOR_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

MetricsRow mean_row(const std::string& model, const std::vector<const MetricsRow*>& runs) {
  MetricsRow mean;
  mean.model = model;
  mean.run = "mean";
  for (const MetricsRow* r : runs) {
    if (!r->error.empty()) {
      mean.error = "run " + r->run + " failed: " + r->error;
      return mean;
    }
  }
  const auto n = static_cast<double>(runs.size());
  for (const MetricsRow* r : runs) {
    mean.p_at_k += r->p_at_k / n;
    mean.r_at_k += r->r_at_k / n;
    mean.f1_at_k += r->f1_at_k / n;
    mean.mad += r->mad / n;
    mean.ks += r->ks / n;
    mean.eligible += r->eligible;
  }
  mean.eligible /= runs.size();
  return mean;
}

}  // namespace

MetricsReport run_experiment(ExperimentConfig cfg, const std::function<void(const std::string&)>& log) {
  auto note = [&](const std::string& msg) {
    if (log) log(msg);
  };
  PreparedData data = prepare_data(cfg);
  for (ModelKind m : cfg.models) {
    if (needs_sensitive(m) && !data.sensitive) {
      throw ConfigError(std::string(to_string(m)) + " requires a sensitive map (sensitive_csv)");
    }
  }
  std::vector<ModelKind> models = cfg.models;
  std::sort(models.begin(), models.end(), [](ModelKind a, ModelKind b) { return to_string(a) < to_string(b); });
  models.erase(std::unique(models.begin(), models.end()), models.end());

  MetricsReport report;
  report.k = cfg.k;
  report.intervals = cfg.T;
  report.config = cfg;
  report.config["data_stats"] = data.stats;
  const EvaluationOptions options{cfg.k, cfg.T, cfg.rank_scope, cfg.fairness_scope};
  const SensitiveMap* sensitive = data.sensitive ? &*data.sensitive : nullptr;

  // rows_by_model[m][run]
  std::vector<std::vector<MetricsRow>> rows_by_model(models.size());
  for (int run = 1; run <= cfg.repeats; ++run) {
    const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(run);
    const ObservationTensor sampled = negative_sample(data.positives, cfg.negative_probability, seed);
    const SplitDataset split_data = split(sampled, cfg.train_fraction, seed);
    note("run " + std::to_string(run) + ": " + std::to_string(sampled.size() - data.positives.size()) +
         " negatives, " + std::to_string(split_data.train.size()) + " train / " +
         std::to_string(split_data.test.size()) + " test");

    std::vector<MetricsRow> run_rows(models.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
      for (std::size_t m = next++; m < models.size(); m = next++) {
        MetricsRow row;
        const auto start = std::chrono::steady_clock::now();
        try {
          const TrainedModel trained = train_model(models[m], split_data.train, sensitive, cfg.config_for(models[m], seed));
          row = evaluate_model(trained, split_data, sensitive, options);
        } catch (const std::exception& e) {
          row = MetricsRow{};
          row.error = e.what();
        }
        row.model = std::string(to_string(models[m]));
        row.run = std::to_string(run);
        row.seed = seed;
        run_rows[m] = std::move(row);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::lock_guard<std::mutex> lock(log_mutex);
        std::ostringstream msg;
        msg << "  " << run_rows[m].model << " run " << run << ": ";
        if (run_rows[m].error.empty()) {
          msg << "F1@" << cfg.k << "=" << run_rows[m].f1_at_k << " MAD=" << run_rows[m].mad << " KS=" << run_rows[m].ks;
        } else {
          msg << "error: " << run_rows[m].error;
        }
        msg << " (" << secs << " s)";
        note(msg.str());
      }
    };
    const unsigned n_threads = std::min<unsigned>(thread_cap(), static_cast<unsigned>(models.size()));
    if (n_threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    for (std::size_t m = 0; m < models.size(); ++m) rows_by_model[m].push_back(std::move(run_rows[m]));
  }

  for (std::size_t m = 0; m < models.size(); ++m) {
    std::vector<const MetricsRow*> runs;
    for (const MetricsRow& r : rows_by_model[m]) {
      report.rows.push_back(r);
      runs.push_back(&r);
    }
    // A single run is its own mean.
    if (cfg.repeats > 1) report.rows.push_back(mean_row(std::string(to_string(models[m])), runs));
  }
  return report;
}

void write_report(const MetricsReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "report.csv") << report.to_csv();
  std::ofstream(dir / "report.json") << report.to_json().dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Oracle suite

namespace {

ObservationTensor full_observation(const Dims& d, const std::vector<double>& dense) {
  std::vector<Entry> entries;
  std::size_t n = 0;
  for (int i = 0; i < d.users; ++i)
    for (int j = 0; j < d.curators; ++j)
      for (int k = 0; k < d.topics; ++k) entries.push_back({i, j, k, dense[n++]});
  return ObservationTensor(d, std::move(entries));
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

}  // namespace

OracleCheck check_kernel_equivalence() {
  OracleCheck check{"kernel_loss_equivalence", false, 0.0, 1e-10, {}};
  Rng rng(101);
  int cases = 0;
  for (int n = 1; n <= 4; ++n) {
    for (int m = 1; m <= 4; ++m) {
      for (int k = 1; k <= 4; ++k) {
        for (int rank = 1; rank <= 3; ++rank) {
          const Dims d{n, m, k};
          const FactorModel model = oracle::random_model(d, rank, rng);
          std::vector<double> dense(d.cells());
          for (double& x : dense) x = rng.uniform(-1.0, 1.0);
          const double lambda = rng.uniform(0.0, 0.5);
          const double got = masked_loss(model, full_observation(d, dense), lambda);
          const double want = oracle::dense_loss(model, dense, lambda);
          check.measured = std::max(check.measured, std::abs(got - want) / std::max(std::abs(want), 1e-300));
          ++cases;
        }
      }
    }
  }
  check.passed = check.measured <= check.threshold;
  check.detail = std::to_string(cases) + " shapes, max relative error " + fmt(check.measured);
  return check;
}

OracleCheck check_gradients() {
  OracleCheck check{"gradient_finite_differences", false, 0.0, 1e-5, {}};
  constexpr double kStep = 1e-6;
  Rng rng(202);
  double worst_loss = 0.0;
  double worst_parity = 0.0;
  double worst_ortho = 0.0;
  bool frozen_exact = true;
  for (int instance = 0; instance < 20; ++instance) {
    const Dims d{1 + static_cast<int>(rng.below(5)), 2 + static_cast<int>(rng.below(4)), 1 + static_cast<int>(rng.below(5))};
    const int rank = 3 + static_cast<int>(rng.below(2));
    const FactorModel model = oracle::random_model(d, rank, rng);

    std::vector<int> groups(static_cast<std::size_t>(d.curators));
    for (auto& g : groups) g = static_cast<int>(rng.below(2));
    groups[0] = 0;
    groups[1] = 1;
    const SensitiveMap sensitive(groups);

    std::vector<Entry> entries;
    for (int i = 0; i < d.users; ++i)
      for (int j = 0; j < d.curators; ++j)
        for (int k = 0; k < d.topics; ++k)
          if ((i == 0 && k == 0 && j < 2) || rng.bernoulli(0.5)) entries.push_back({i, j, k, rng.uniform() < 0.5 ? 0.0 : 1.0});
    const ObservationTensor obs(d, std::move(entries));
    const double lambda = rng.uniform(0.0, 0.3);

    TrainableColumns trainable = all_trainable(rank);
    trainable[1].erase(trainable[1].begin() + static_cast<std::ptrdiff_t>(rng.below(static_cast<std::uint64_t>(rank))));
    const Gradient analytic = masked_gradient(model, obs, lambda, trainable);
    Gradient numeric = oracle::finite_difference([&](const FactorModel& m) { return masked_loss(m, obs, lambda); }, model, kStep);
    detail::mask_columns(numeric, trainable);
    worst_loss = std::max(worst_loss, oracle::relative_error(analytic, numeric));
    for (int c = 0; c < rank; ++c) {
      if (std::find(trainable[1].begin(), trainable[1].end(), c) == trainable[1].end() && !analytic[1].col(c).isZero(0.0)) {
        frozen_exact = false;
      }
    }

    const double gamma = rng.uniform(0.5, 10.0);
    const Gradient parity = parity_gradient(model, obs, sensitive, gamma);
    const Gradient parity_fd = oracle::finite_difference(
        [&](const FactorModel& m) { return parity_penalty(m, obs, sensitive, gamma); }, model, kStep);
    worst_parity = std::max(worst_parity, oracle::relative_error(parity, parity_fd));

    const double mu = rng.uniform(0.5, 10.0);
    const Matrix s = sensitive.features();
    const ColumnSet free_cols = all_columns(rank - 2);
    const Matrix ortho = orthogonality_gradient(model[1], s, free_cols, mu);
    const Matrix ortho_fd = oracle::finite_difference(
        [&](const Matrix& u2) { return orthogonality_penalty(u2, s, free_cols, mu); }, model[1], kStep);
    worst_ortho = std::max(worst_ortho, oracle::relative_error(ortho, ortho_fd));
  }
  check.measured = std::max({worst_loss, worst_parity, worst_ortho});
  check.passed = check.measured < check.threshold && frozen_exact;
  check.detail = "20 instances; masked_loss " + fmt(worst_loss) + ", parity " + fmt(worst_parity) + ", orthogonality " +
                 fmt(worst_ortho) + (frozen_exact ? ", frozen columns exactly zero" : ", FROZEN COLUMNS NONZERO");
  return check;
}

OracleCheck check_als() {
  OracleCheck check{"als_monotone_recovery", false, 0.0, 1e-3, {}};
  Rng rng(303);
  const Dims d{6, 6, 4};
  const FactorModel truth = oracle::random_model(d, 2, rng, 0.0, 1.0);
  const ObservationTensor obs = full_observation(d, oracle::dense_reconstruction(truth));
  TrainConfig cfg;
  cfg.rank = 2;
  cfg.lambda = 1e-6;
  cfg.max_iters = 3000;
  cfg.tol = 1e-14;
  cfg.seed = 5;
  const TrainedModel model = train_otc(obs, cfg);
  const auto& trace = model.loss_traces.at(0);
  double worst_increase = 0.0;
  for (std::size_t n = 1; n < trace.size(); ++n) worst_increase = std::max(worst_increase, trace[n] - trace[n - 1]);
  const double rmse = std::sqrt(2.0 * data_loss(model.factors[0], obs) / static_cast<double>(obs.size()));
  check.measured = rmse;
  check.passed = rmse < check.threshold && worst_increase <= 1e-9;
  check.detail = "RMSE " + fmt(rmse) + " after " + std::to_string(trace.size() - 1) + " sweeps, largest loss increase " +
                 fmt(worst_increase);
  return check;
}

OracleCheck check_ft_invariants() {
  OracleCheck check{"ft_structural_invariants", false, 0.0, 1e-9, {}};
  SynthConfig synth;
  synth.users = 40;
  synth.curators = 16;
  synth.topics = 3;
  synth.true_rank = 3;
  synth.bias_strength = 0.2;
  synth.target_sparsity = 0.08;
  synth.seed = 11;
  const SynthDataset data = synth_generate(synth);
  const ObservationTensor obs = negative_sample(data.observations, 0.05, 12);
  TrainConfig cfg;
  cfg.rank = 6;
  cfg.max_iters = 200;
  cfg.seed = 13;
  const TrainedModel model = train_ft(obs, data.groups, cfg);
  const FactorModel& f = model.factors[0];
  const Matrix s = data.groups.features();

  const bool s_exact = f[1].col(cfg.rank - 2) == s.col(0) && f[1].col(cfg.rank - 1) == s.col(1) &&
                       f.sensitive_cols == ColumnSet{cfg.rank - 2, cfg.rank - 1};
  Matrix free_block(f[1].rows(), cfg.rank - 2);
  for (int c = 0; c < cfg.rank - 2; ++c) free_block.col(c) = f[1].col(c);
  const double ratio = (s.transpose() * free_block).norm() / std::max(free_block.norm(), 1e-300);

  TrainedModel tampered = model;
  Rng rng(14);
  for (int m = 0; m < 3; ++m)
    for (int c : f.sensitive_cols)
      for (Eigen::Index r = 0; r < tampered.factors[0][m].rows(); ++r) tampered.factors[0][m](r, c) = rng.uniform(-5.0, 5.0);
  bool unchanged = true;
  for (int i = 0; i < synth.users; ++i)
    for (int j = 0; j < synth.curators; ++j)
      for (int k = 0; k < synth.topics; ++k) unchanged = unchanged && predict(model, i, j, k) == predict(tampered, i, j, k);

  check.measured = ratio;
  check.passed = s_exact && ratio <= check.threshold && unchanged;
  check.detail = std::string("S columns ") + (s_exact ? "exact" : "MODIFIED") + ", |S^T U2_free|/|U2_free| = " + fmt(ratio) +
                 ", predictions " + (unchanged ? "bit-identical" : "CHANGED") + " after overwriting sensitive columns";
  return check;
}

OracleCheck check_metric_cases() {
  OracleCheck check{"metric_hand_cases", false, 0.0, 1e-12, {}};
  std::vector<std::string> failures;
  double worst = 0.0;
  auto expect = [&](const std::string& name, double got, double want, double tol) {
    const double err = std::abs(got - want);
    worst = std::max(worst, tol == 1e-12 ? err : 0.0);
    if (!(err <= tol)) failures.push_back(name + " got " + std::to_string(got) + " want " + std::to_string(want));
  };
  expect("mad {1,2,3} vs {2,3,4}", mad({{1, 2, 3}, {2, 3, 4}}), 1.0, 1e-12);
  expect("mad equal", mad({{0.3, 0.7}, {0.3, 0.7}}), 0.0, 1e-12);
  expect("mad {0,0} vs {1}", mad({{0, 0}, {1}}), 1.0, 1e-12);
  expect("ks equal", ks({{0.1, 0.5, 0.9}, {0.1, 0.5, 0.9}}, 50), 0.0, 1e-12);
  expect("ks {0,0} vs {1,1}", ks({{0, 0}, {1, 1}}, 50), 0.98, 1e-12);
  expect("ks {0,1} vs {1,1}", ks({{0, 1}, {1, 1}}, 50), 0.49, 1e-12);

  const std::vector<std::vector<int>> top_ab{{0, 1}};
  expect("precision all hits", precision_at_k(top_ab, std::vector<std::vector<int>>{{0, 1}}, 2), 1.0, 1e-12);
  expect("precision no hits", precision_at_k(top_ab, std::vector<std::vector<int>>{{2}}, 2), 0.0, 1e-12);
  expect("precision mean", precision_at_k(std::vector<std::vector<int>>{{0, 1}, {0, 1}},
                                          std::vector<std::vector<int>>{{0, 1}, {1}}, 2), 0.75, 1e-12);
  expect("recall half", recall_at_k(top_ab, std::vector<std::vector<int>>{{0, 1, 2, 3}}, 2), 0.5, 1e-12);
  expect("recall full", recall_at_k(top_ab, std::vector<std::vector<int>>{{0, 1}}, 2), 1.0, 1e-12);
  expect("recall mean", recall_at_k(std::vector<std::vector<int>>{{0}, {0}}, std::vector<std::vector<int>>{{0}, {1}}, 1), 0.5, 1e-12);
  expect("f1 equal", f1_at_k(0.5, 0.5), 0.5, 1e-12);
  expect("f1 zero", f1_at_k(0.0, 0.0), 0.0, 1e-12);
  expect("f1 table row", f1_at_k(0.0958, 0.4384), 0.1572, 5e-4);

  // KS against exact ECDF integration; the right-endpoint sum is within one
  // interval width of the exact area.
  Rng rng(404);
  for (int trial = 0; trial < 200; ++trial) {
    GroupedScores s;
    const auto n0 = 1 + rng.below(6);
    const auto n1 = 1 + rng.below(6);
    for (std::uint64_t n = 0; n < n0; ++n) s.group0.push_back(rng.uniform(-2.0, 2.0));
    for (std::uint64_t n = 0; n < n1; ++n) s.group1.push_back(rng.uniform(-2.0, 2.0));
    const double lo = std::min(*std::min_element(s.group0.begin(), s.group0.end()), *std::min_element(s.group1.begin(), s.group1.end()));
    const double hi = std::max(*std::max_element(s.group0.begin(), s.group0.end()), *std::max_element(s.group1.begin(), s.group1.end()));
    const double exact = std::abs(oracle::ecdf_signed_area(s.group0, s.group1));
    if (std::abs(ks(s, 50) - exact) > (hi - lo) / 50.0 + 1e-12) failures.push_back("ks brute-force trial " + std::to_string(trial));
  }

  check.measured = worst;
  check.passed = failures.empty();
  check.detail = failures.empty() ? "all hand cases and 200 brute-force KS cases agree" : failures.front();
  return check;
}

std::vector<OracleCheck> run_oracles() {
  return {check_kernel_equivalence(), check_gradients(), check_als(), check_ft_invariants(), check_metric_cases()};
}

}  // namespace fairtensor
