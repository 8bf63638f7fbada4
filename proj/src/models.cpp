#include "fairtensor/models.hpp"

#include "fairtensor/errors.hpp"
#include "fairtensor/rng.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fairtensor {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::OMC: return "OMC";
    case ModelKind::OTC: return "OTC";
    case ModelKind::RMC: return "RMC";
    case ModelKind::RTC: return "RTC";
    case ModelKind::FM: return "FM";
    case ModelKind::FT: return "FT";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  for (ModelKind k : kAllModelKinds) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown model '" + std::string(name) + "'");
}

bool is_matrix_kind(ModelKind kind) {
  return kind == ModelKind::OMC || kind == ModelKind::RMC || kind == ModelKind::FM;
}

bool needs_sensitive(ModelKind kind) { return kind != ModelKind::OMC && kind != ModelKind::OTC; }

bool is_isolating_kind(ModelKind kind) { return kind == ModelKind::FM || kind == ModelKind::FT; }

int TrainConfig::total_columns(ModelKind kind) const {
  return is_isolating_kind(kind) && extra_sensitive_cols ? rank + 2 : rank;
}

void TrainConfig::validate(ModelKind kind) const {
  if (rank < 1) throw ConfigError("rank must be >= 1");
  if (is_isolating_kind(kind) && total_columns(kind) < 3) {
    throw ConfigError("FT/FM need at least one free column besides the two sensitive ones");
  }
  for (double w : {lambda, parity_weight, ortho_weight}) {
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("weights must be finite and >= 0");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (max_iters < 0) throw ConfigError("max_iters must be >= 0");
  if (!(tol >= 0.0)) throw ConfigError("tol must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = nlohmann::json{{"rank", cfg.rank},
                     {"lambda", cfg.lambda},
                     {"parity_weight", cfg.parity_weight},
                     {"ortho_weight", cfg.ortho_weight},
                     {"learning_rate", cfg.learning_rate},
                     {"max_iters", cfg.max_iters},
                     {"tol", cfg.tol},
                     {"seed", cfg.seed},
                     {"extra_sensitive_cols", cfg.extra_sensitive_cols}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  cfg.rank = j.value("rank", cfg.rank);
  cfg.lambda = j.value("lambda", cfg.lambda);
  cfg.parity_weight = j.value("parity_weight", cfg.parity_weight);
  cfg.ortho_weight = j.value("ortho_weight", cfg.ortho_weight);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.max_iters = j.value("max_iters", cfg.max_iters);
  cfg.tol = j.value("tol", cfg.tol);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.extra_sensitive_cols = j.value("extra_sensitive_cols", cfg.extra_sensitive_cols);
}

const FactorModel& TrainedModel::slice_for(int topic) const {
  if (topic < 0 || topic >= dims.topics) throw std::out_of_range("topic index out of range");
  return is_matrix_kind(kind) ? factors.at(static_cast<std::size_t>(topic)) : factors.at(0);
}

// ---------------------------------------------------------------------------
// Fairness terms

namespace {

struct GroupCells {
  std::size_t n0 = 0;
  std::size_t n1 = 0;
};

GroupCells count_group_cells(const ObservationTensor& obs, const SensitiveMap& sensitive) {
  if (sensitive.size() != obs.dims().curators) {
    throw ConfigError("sensitive map covers " + std::to_string(sensitive.size()) + " curators, tensor has " +
                      std::to_string(obs.dims().curators));
  }
  GroupCells c;
  for (const Entry& e : obs.entries()) (sensitive.group(e.j) == 0 ? c.n0 : c.n1)++;
  if (c.n0 == 0 || c.n1 == 0) throw ConfigError("parity term undefined: a group has no training cells");
  return c;
}

}  // namespace

double parity_gap(const FactorModel& model, const ObservationTensor& obs, const SensitiveMap& sensitive) {
  check_dimensions(model, obs.dims());
  const GroupCells c = count_group_cells(obs, sensitive);
  const std::vector<double> pred = detail::predict_entries(model, obs);
  const auto entries = obs.entries();
  double s0 = 0.0;
  double s1 = 0.0;
  for (std::size_t n = 0; n < entries.size(); ++n) (sensitive.group(entries[n].j) == 0 ? s0 : s1) += pred[n];
  return s0 / static_cast<double>(c.n0) - s1 / static_cast<double>(c.n1);
}

double parity_penalty(const FactorModel& model, const ObservationTensor& obs, const SensitiveMap& sensitive,
                      double weight) {
  const double gap = parity_gap(model, obs, sensitive);
  return 0.5 * weight * gap * gap;
}

namespace {

// d penalty / d prediction_e for every observed cell.
std::vector<double> parity_coefficients(const FactorModel& model, const ObservationTensor& obs,
                                        const SensitiveMap& sensitive, double weight) {
  const GroupCells c = count_group_cells(obs, sensitive);
  const double gap = parity_gap(model, obs, sensitive);
  const double c0 = weight * gap / static_cast<double>(c.n0);
  const double c1 = -weight * gap / static_cast<double>(c.n1);
  std::vector<double> coeff;
  coeff.reserve(obs.size());
  for (const Entry& e : obs.entries()) coeff.push_back(sensitive.group(e.j) == 0 ? c0 : c1);
  return coeff;
}

}  // namespace

Gradient parity_gradient(const FactorModel& model, const ObservationTensor& obs, const SensitiveMap& sensitive,
                         double weight) {
  const std::vector<double> coeff = parity_coefficients(model, obs, sensitive, weight);
  Gradient grad = zero_gradient(model);
  detail::accumulate_entry_gradient(model, obs, coeff, grad);
  return grad;
}

namespace {

Matrix free_block(const Matrix& curators, const ColumnSet& free_cols) {
  Matrix block(curators.rows(), static_cast<Eigen::Index>(free_cols.size()));
  for (std::size_t c = 0; c < free_cols.size(); ++c) block.col(static_cast<Eigen::Index>(c)) = curators.col(free_cols[c]);
  return block;
}

void check_features(const Matrix& curators, const Matrix& features) {
  if (features.rows() != curators.rows()) throw std::invalid_argument("feature matrix row count mismatch");
}

}  // namespace

double orthogonality_penalty(const Matrix& curators, const Matrix& features, const ColumnSet& free_cols,
                             double weight) {
  check_features(curators, features);
  return 0.5 * weight * (features.transpose() * free_block(curators, free_cols)).squaredNorm();
}

Matrix orthogonality_gradient(const Matrix& curators, const Matrix& features, const ColumnSet& free_cols,
                              double weight) {
  check_features(curators, features);
  const Matrix block_grad = weight * features * (features.transpose() * free_block(curators, free_cols));
  Matrix grad = Matrix::Zero(curators.rows(), curators.cols());
  for (std::size_t c = 0; c < free_cols.size(); ++c) grad.col(free_cols[c]) = block_grad.col(static_cast<Eigen::Index>(c));
  return grad;
}

void project_out_features(Matrix& curators, const Matrix& features, const ColumnSet& free_cols) {
  check_features(curators, features);
  // Drop empty groups so S^T S stays invertible.
  std::vector<Eigen::Index> used;
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    if (features.col(c).squaredNorm() > 0.0) used.push_back(c);
  }
  if (used.empty()) return;
  Matrix s(features.rows(), static_cast<Eigen::Index>(used.size()));
  for (std::size_t c = 0; c < used.size(); ++c) s.col(static_cast<Eigen::Index>(c)) = features.col(used[c]);
  const Eigen::LDLT<Eigen::MatrixXd> gram(s.transpose() * s);
  for (int c : free_cols) {
    const Eigen::VectorXd x = curators.col(c);
    const Eigen::VectorXd coeff = gram.solve(s.transpose() * x);
    curators.col(c) = x - s * coeff;
  }
}

// ---------------------------------------------------------------------------
// Optimisers

namespace {

constexpr int kTensorModes[] = {0, 1, 2};
constexpr int kMatrixModes[] = {0, 1};

}  // namespace

FactorModel initial_factors(const Dims& dims, int cols, std::uint64_t seed, bool matrix) {
  Rng rng(seed);
  auto draw = [&](int rows) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(0.0, 0.1);
    return m;
  };
  Matrix u = draw(dims.users);
  Matrix v = draw(dims.curators);
  Matrix w = matrix ? Matrix::Ones(1, cols) : draw(dims.topics);
  return FactorModel(std::move(u), std::move(v), std::move(w));
}

std::uint64_t topic_seed(std::uint64_t seed, int topic) {
  return seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(topic + 1);
}

namespace {

// Objective shared by the gradient-descent variants: data term, ridge over
// `ridge_modes`, and the optional parity and orthogonality penalties.
struct Objective {
  Objective(const ObservationTensor& o, double l, std::span<const int> modes) : obs(o), lambda(l), ridge_modes(modes) {}

  const ObservationTensor& obs;
  double lambda = 0.0;
  std::span<const int> ridge_modes;
  const SensitiveMap* parity_groups = nullptr;
  double parity_weight = 0.0;
  const Matrix* features = nullptr;
  ColumnSet free_cols;
  double ortho_weight = 0.0;

  double value(const FactorModel& m) const {
    double f = data_loss(m, obs) + ridge_penalty(m, lambda, ridge_modes);
    if (parity_groups) f += parity_penalty(m, obs, *parity_groups, parity_weight);
    if (features) f += orthogonality_penalty(m[1], *features, free_cols, ortho_weight);
    return f;
  }

  Gradient gradient(const FactorModel& m, const TrainableColumns& trainable) const {
    const std::vector<double> pred = detail::predict_entries(m, obs);
    const auto entries = obs.entries();
    std::vector<double> coeff(entries.size());
    for (std::size_t n = 0; n < entries.size(); ++n) coeff[n] = pred[n] - entries[n].value;
    if (parity_groups) {
      const std::vector<double> pc = parity_coefficients(m, obs, *parity_groups, parity_weight);
      for (std::size_t n = 0; n < coeff.size(); ++n) coeff[n] += pc[n];
    }
    Gradient g = zero_gradient(m);
    detail::accumulate_entry_gradient(m, obs, coeff, g);
    for (int mode : ridge_modes) g[static_cast<std::size_t>(mode)] += lambda * m[mode];
    if (features) g[1] += orthogonality_gradient(m[1], *features, free_cols, ortho_weight);
    detail::mask_columns(g, trainable);
    return g;
  }
};

bool converged(double previous, double current, double tol) {
  const double scale = std::max(std::abs(previous), 1e-300);
  return std::abs(previous - current) / scale < tol;
}

// Full-batch gradient descent. The step starts at `learning_rate`, is halved
// until the Armijo condition holds and grows by 1.5x after each accepted step.
// Columns outside `trainable` have zero gradient and therefore never change.
std::vector<double> gradient_descent(FactorModel& model, const Objective& objective,
                                     const TrainableColumns& trainable, const TrainConfig& cfg) {
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 60;
  std::vector<double> trace{objective.value(model)};
  double step = cfg.learning_rate;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const double f = trace.back();
    const Gradient g = objective.gradient(model, trainable);
    double g2 = 0.0;
    for (const Matrix& gm : g) g2 += gm.squaredNorm();
    if (g2 == 0.0) break;

    FactorModel trial = model;
    double f_trial = f;
    bool accepted = false;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      for (std::size_t m = 0; m < 3; ++m) trial.factors[m] = model.factors[m] - step * g[m];
      f_trial = objective.value(trial);
      if (std::isfinite(f_trial) && f_trial <= f - kArmijo * step * g2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    model = std::move(trial);
    trace.push_back(f_trial);
    step *= 1.5;
    if (converged(f, f_trial, cfg.tol)) break;
  }
  return trace;
}

// Observed-entry indices grouped by the row they touch in `mode`.
std::vector<std::vector<std::size_t>> rows_of(const ObservationTensor& obs, int mode) {
  std::vector<std::vector<std::size_t>> rows(static_cast<std::size_t>(obs.dims()[mode]));
  const auto entries = obs.entries();
  for (std::size_t n = 0; n < entries.size(); ++n) rows[static_cast<std::size_t>(entries[n].index(mode))].push_back(n);
  return rows;
}

// Alternating least squares over `modes`, each row solved exactly from its
// ridge-regularised normal equations. The right-hand sides are the sparse
// MTTKRP of the observed values.
std::vector<double> alternating_least_squares(FactorModel& model, const ObservationTensor& obs, double lambda,
                                              std::span<const int> modes, const TrainConfig& cfg) {
  const int rank = model.rank();
  std::array<std::vector<std::vector<std::size_t>>, 3> rows;
  for (int mode : modes) rows[static_cast<std::size_t>(mode)] = rows_of(obs, mode);
  const auto entries = obs.entries();

  auto objective = [&] { return data_loss(model, obs) + ridge_penalty(model, lambda, modes); };
  std::vector<double> trace{objective()};
  const Eigen::MatrixXd ridge = lambda * Eigen::MatrixXd::Identity(rank, rank);
  for (int it = 0; it < cfg.max_iters; ++it) {
    for (int mode : modes) {
      const int a = (mode + 1) % 3;
      const int b = (mode + 2) % 3;
      const Matrix rhs = mttkrp(obs, model, mode);
      Matrix& target = model[mode];
      for (Eigen::Index row = 0; row < target.rows(); ++row) {
        Eigen::MatrixXd gram = ridge;
        for (std::size_t n : rows[static_cast<std::size_t>(mode)][static_cast<std::size_t>(row)]) {
          const Entry& e = entries[n];
          const RowVector h = model[a].row(e.index(a)).cwiseProduct(model[b].row(e.index(b)));
          gram.noalias() += h.transpose() * h;
        }
        target.row(row) = gram.llt().solve(rhs.row(row).transpose()).transpose();
      }
    }
    trace.push_back(objective());
    if (converged(trace[trace.size() - 2], trace.back(), cfg.tol)) break;
  }
  return trace;
}

double effective_lambda(const TrainConfig& cfg, std::vector<std::string>& warnings) {
  if (cfg.lambda > 0.0) return cfg.lambda;
  warnings.emplace_back("lambda=0 given to ALS; using 1e-8 to keep normal equations nonsingular");
  return 1e-8;
}

ObservationTensor topic_slice(const ObservationTensor& obs, int topic) {
  std::vector<Entry> entries;
  for (const Entry& e : obs.entries()) {
    if (e.k == topic) entries.push_back({e.i, e.j, 0, e.value});
  }
  return ObservationTensor({obs.dims().users, obs.dims().curators, 1}, std::move(entries));
}

void check_train_inputs(const ObservationTensor& train, const SensitiveMap* sensitive, ModelKind kind,
                        const TrainConfig& cfg) {
  cfg.validate(kind);
  if (train.empty()) throw std::invalid_argument("training set is empty");
  if (needs_sensitive(kind)) {
    if (!sensitive) throw ConfigError(std::string(to_string(kind)) + " needs a sensitive map");
    if (sensitive->size() != train.dims().curators) {
      throw ConfigError("sensitive map does not cover every curator");
    }
  }
}

// Isolating fit on one factor model whose curator mode carries S in the last
// two columns; `matrix` freezes the topic row at ones.
std::vector<double> fit_isolating(FactorModel& model, const ObservationTensor& obs, const SensitiveMap& sensitive,
                                  const TrainConfig& cfg, bool matrix) {
  const int cols = model.rank();
  const Matrix s = sensitive.features();
  model.sensitive_cols = {cols - 2, cols - 1};
  model[1].col(cols - 2) = s.col(0);
  model[1].col(cols - 1) = s.col(1);
  const ColumnSet free_cols = model.non_sensitive_cols();

  TrainableColumns trainable{all_columns(cols), free_cols, matrix ? ColumnSet{} : all_columns(cols)};
  Objective objective(obs, cfg.lambda, matrix ? std::span<const int>(kMatrixModes) : std::span<const int>(kTensorModes));
  objective.features = &s;
  objective.free_cols = free_cols;
  objective.ortho_weight = cfg.ortho_weight;

  std::vector<double> trace;
  if (!obs.empty()) trace = gradient_descent(model, objective, trainable, cfg);
  assert(model[1].col(cols - 2) == s.col(0) && model[1].col(cols - 1) == s.col(1));
  project_out_features(model[1], s, free_cols);
  return trace;
}

}  // namespace

TrainedModel train_otc(const ObservationTensor& train, const TrainConfig& cfg) {
  check_train_inputs(train, nullptr, ModelKind::OTC, cfg);
  TrainedModel out{ModelKind::OTC, train.dims(), cfg, {}, {}, {}};
  FactorModel model = initial_factors(train.dims(), cfg.rank, cfg.seed, false);
  const double lambda = effective_lambda(cfg, out.warnings);
  out.loss_traces.push_back(alternating_least_squares(model, train, lambda, kTensorModes, cfg));
  out.factors.push_back(std::move(model));
  return out;
}

TrainedModel train_cp_gd(const ObservationTensor& train, const TrainConfig& cfg) {
  check_train_inputs(train, nullptr, ModelKind::OTC, cfg);
  TrainedModel out{ModelKind::RTC, train.dims(), cfg, {}, {}, {}};
  FactorModel model = initial_factors(train.dims(), cfg.rank, cfg.seed, false);
  const Objective objective(train, cfg.lambda, kTensorModes);
  out.loss_traces.push_back(gradient_descent(model, objective, all_trainable(cfg.rank), cfg));
  out.factors.push_back(std::move(model));
  return out;
}

TrainedModel train_rtc(const ObservationTensor& train, const SensitiveMap& sensitive, const TrainConfig& cfg) {
  check_train_inputs(train, &sensitive, ModelKind::RTC, cfg);
  TrainedModel out{ModelKind::RTC, train.dims(), cfg, {}, {}, {}};
  FactorModel model = initial_factors(train.dims(), cfg.rank, cfg.seed, false);
  Objective objective(train, cfg.lambda, kTensorModes);
  objective.parity_groups = &sensitive;
  objective.parity_weight = cfg.parity_weight;
  // Surface an empty group before descent starts.
  count_group_cells(train, sensitive);
  out.loss_traces.push_back(gradient_descent(model, objective, all_trainable(cfg.rank), cfg));
  out.factors.push_back(std::move(model));
  return out;
}

TrainedModel train_ft(const ObservationTensor& train, const SensitiveMap& sensitive, const TrainConfig& cfg) {
  check_train_inputs(train, &sensitive, ModelKind::FT, cfg);
  TrainedModel out{ModelKind::FT, train.dims(), cfg, {}, {}, {}};
  FactorModel model = initial_factors(train.dims(), cfg.total_columns(ModelKind::FT), cfg.seed, false);
  out.loss_traces.push_back(fit_isolating(model, train, sensitive, cfg, false));
  out.factors.push_back(std::move(model));
  return out;
}

TrainedModel train_matrix(ModelKind kind, const ObservationTensor& train, const SensitiveMap* sensitive,
                          const TrainConfig& cfg) {
  if (!is_matrix_kind(kind)) throw std::invalid_argument("train_matrix expects OMC, RMC or FM");
  check_train_inputs(train, sensitive, kind, cfg);
  const Dims dims = train.dims();
  const int cols = cfg.total_columns(kind);
  TrainedModel out{kind, dims, cfg, {}, {}, {}};
  const double als_lambda = kind == ModelKind::OMC ? effective_lambda(cfg, out.warnings) : cfg.lambda;

  for (int topic = 0; topic < dims.topics; ++topic) {
    const ObservationTensor slice = topic_slice(train, topic);
    FactorModel model = initial_factors(slice.dims(), cols, topic_seed(cfg.seed, topic), true);
    std::vector<double> trace;
    if (kind == ModelKind::FM) {
      if (slice.empty()) {
        model[0].setZero();
        model[1].setZero();
      }
      trace = fit_isolating(model, slice, *sensitive, cfg, true);
    } else if (slice.empty()) {
      model[0].setZero();
      model[1].setZero();
    } else if (kind == ModelKind::OMC) {
      trace = alternating_least_squares(model, slice, als_lambda, kMatrixModes, cfg);
    } else {
      Objective objective(slice, cfg.lambda, kMatrixModes);
      objective.parity_groups = sensitive;
      objective.parity_weight = cfg.parity_weight;
      count_group_cells(slice, *sensitive);
      trace = gradient_descent(model, objective, {all_columns(cols), all_columns(cols), ColumnSet{}}, cfg);
    }
    out.loss_traces.push_back(std::move(trace));
    out.factors.push_back(std::move(model));
  }
  return out;
}

TrainedModel train_model(ModelKind kind, const ObservationTensor& train, const SensitiveMap* sensitive,
                         const TrainConfig& cfg) {
  if (is_matrix_kind(kind)) return train_matrix(kind, train, sensitive, cfg);
  if (needs_sensitive(kind) && !sensitive) throw ConfigError(std::string(to_string(kind)) + " needs a sensitive map");
  switch (kind) {
    case ModelKind::OTC: return train_otc(train, cfg);
    case ModelKind::RTC: return train_rtc(train, *sensitive, cfg);
    case ModelKind::FT: return train_ft(train, *sensitive, cfg);
    default: break;
  }
  throw std::logic_error("unreachable model kind");
}

double predict(const TrainedModel& model, int i, int j, int k) {
  if (i < 0 || i >= model.dims.users || j < 0 || j >= model.dims.curators) {
    throw std::out_of_range("prediction index out of range");
  }
  const FactorModel& f = model.slice_for(k);
  const int topic_row = is_matrix_kind(model.kind) ? 0 : k;
  if (is_isolating_kind(model.kind)) return cp_entry(f, i, j, topic_row, f.non_sensitive_cols());
  return cp_entry(f, i, j, topic_row);
}

std::vector<int> top_k(const TrainedModel& model, int user, int topic, int k_items, std::span<const int> exclude) {
  if (k_items < 1) throw std::invalid_argument("k_items must be >= 1");
  const FactorModel& f = model.slice_for(topic);
  if (user < 0 || user >= model.dims.users) throw std::out_of_range("user index out of range");
  const int topic_row = is_matrix_kind(model.kind) ? 0 : topic;
  const ColumnSet cols = is_isolating_kind(model.kind) ? f.non_sensitive_cols() : all_columns(f.rank());

  std::vector<bool> skip(static_cast<std::size_t>(model.dims.curators), false);
  for (int j : exclude) {
    if (j >= 0 && j < model.dims.curators) skip[static_cast<std::size_t>(j)] = true;
  }
  std::vector<std::pair<double, int>> scored;
  scored.reserve(skip.size());
  for (int j = 0; j < model.dims.curators; ++j) {
    if (!skip[static_cast<std::size_t>(j)]) scored.emplace_back(cp_entry(f, user, j, topic_row, cols), j);
  }
  const auto n = static_cast<std::ptrdiff_t>(std::min<std::size_t>(static_cast<std::size_t>(k_items), scored.size()));
  std::partial_sort(scored.begin(), scored.begin() + n, scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::ptrdiff_t r = 0; r < n; ++r) out.push_back(scored[static_cast<std::size_t>(r)].second);
  return out;
}

}  // namespace fairtensor
