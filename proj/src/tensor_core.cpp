#include "fairtensor/tensor_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fairtensor {

namespace {

void check_index(int value, int bound, const char* what) {
  if (value < 0 || value >= bound) {
    throw std::out_of_range(std::string(what) + " index " + std::to_string(value) +
                            " outside [0, " + std::to_string(bound) + ")");
  }
}

}  // namespace

ObservationTensor::ObservationTensor(Dims dims, std::vector<Entry> entries)
    : dims_(dims), entries_(std::move(entries)) {
  if (dims_.users <= 0 || dims_.curators <= 0 || dims_.topics <= 0) {
    throw std::invalid_argument("tensor dimensions must be positive");
  }
  for (const Entry& e : entries_) {
    check_index(e.i, dims_.users, "user");
    check_index(e.j, dims_.curators, "curator");
    check_index(e.k, dims_.topics, "topic");
    if (!std::isfinite(e.value)) throw std::invalid_argument("non-finite observation value");
  }
  std::sort(entries_.begin(), entries_.end(), key_less);
  auto dup = std::adjacent_find(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
    return !key_less(a, b) && !key_less(b, a);
  });
  if (dup != entries_.end()) {
    throw std::invalid_argument("duplicate observation (" + std::to_string(dup->i) + "," +
                                std::to_string(dup->j) + "," + std::to_string(dup->k) + ")");
  }
}

double ObservationTensor::sparsity() const {
  return static_cast<double>(entries_.size()) / static_cast<double>(dims_.cells());
}

bool ObservationTensor::contains(int i, int j, int k) const {
  return std::binary_search(entries_.begin(), entries_.end(), Entry{i, j, k, 0.0}, key_less);
}

std::size_t ObservationTensor::count_value(double value) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.value == value; }));
}

ColumnSet all_columns(int rank) {
  ColumnSet cols(static_cast<std::size_t>(rank));
  std::iota(cols.begin(), cols.end(), 0);
  return cols;
}

FactorModel::FactorModel(Matrix users, Matrix curators, Matrix topics, ColumnSet sensitive)
    : factors{std::move(users), std::move(curators), std::move(topics)},
      sensitive_cols(std::move(sensitive)) {
  validate();
}

Dims FactorModel::dims() const {
  return Dims{static_cast<int>(factors[0].rows()), static_cast<int>(factors[1].rows()),
              static_cast<int>(factors[2].rows())};
}

ColumnSet FactorModel::non_sensitive_cols() const {
  ColumnSet cols;
  for (int r = 0; r < rank(); ++r) {
    if (std::find(sensitive_cols.begin(), sensitive_cols.end(), r) == sensitive_cols.end()) {
      cols.push_back(r);
    }
  }
  return cols;
}

void FactorModel::validate() const {
  if (factors[1].cols() != factors[0].cols() || factors[2].cols() != factors[0].cols()) {
    throw std::invalid_argument("factor matrices must share the same column count");
  }
  if (sensitive_cols.empty()) return;
  if (sensitive_cols.size() != 2 || sensitive_cols[0] == sensitive_cols[1]) {
    throw std::invalid_argument("sensitive_cols must hold exactly two distinct columns");
  }
  for (int c : sensitive_cols) check_index(c, rank(), "sensitive column");
}

double cp_entry(const FactorModel& model, int i, int j, int k, std::span<const int> cols) {
  check_index(i, static_cast<int>(model[0].rows()), "user");
  check_index(j, static_cast<int>(model[1].rows()), "curator");
  check_index(k, static_cast<int>(model[2].rows()), "topic");
  if (cols.empty()) throw std::invalid_argument("cp_entry needs at least one column");
  double sum = 0.0;
  for (int r : cols) {
    check_index(r, model.rank(), "column");
    sum += model[0](i, r) * model[1](j, r) * model[2](k, r);
  }
  return sum;
}

double cp_entry(const FactorModel& model, int i, int j, int k) {
  const ColumnSet cols = all_columns(model.rank());
  return cp_entry(model, i, j, k, cols);
}

Matrix khatri_rao(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("khatri_rao: column counts differ");
  Matrix out(a.rows() * b.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index s = 0; s < b.rows(); ++s) {
      out.row(r * b.rows() + s) = a.row(r).cwiseProduct(b.row(s));
    }
  }
  return out;
}

void check_dimensions(const FactorModel& model, const Dims& dims) {
  model.validate();
  if (!(model.dims() == dims)) {
    throw std::invalid_argument("model dimensions do not match observation dimensions");
  }
}

Matrix mttkrp(const ObservationTensor& obs, const FactorModel& model, int mode) {
  check_dimensions(model, obs.dims());
  if (mode < 0 || mode > 2) throw std::invalid_argument("mttkrp: mode must be 0, 1 or 2");
  const int a = (mode + 1) % 3;
  const int b = (mode + 2) % 3;
  Matrix out = Matrix::Zero(model[mode].rows(), model.rank());
  for (const Entry& e : obs.entries()) {
    out.row(e.index(mode)) += e.value * model[a].row(e.index(a)).cwiseProduct(model[b].row(e.index(b)));
  }
  return out;
}

namespace detail {

std::vector<double> predict_entries(const FactorModel& model, const ObservationTensor& obs) {
  std::vector<double> out;
  out.reserve(obs.size());
  for (const Entry& e : obs.entries()) {
    out.push_back((model[0].row(e.i).cwiseProduct(model[1].row(e.j)))
                      .cwiseProduct(model[2].row(e.k))
                      .sum());
  }
  return out;
}

void accumulate_entry_gradient(const FactorModel& model, const ObservationTensor& obs,
                               std::span<const double> coeff, Gradient& grad) {
  const auto entries = obs.entries();
  for (std::size_t n = 0; n < entries.size(); ++n) {
    const Entry& e = entries[n];
    const double c = coeff[n];
    if (c == 0.0) continue;
    const auto u = model[0].row(e.i);
    const auto v = model[1].row(e.j);
    const auto w = model[2].row(e.k);
    grad[0].row(e.i) += c * v.cwiseProduct(w);
    grad[1].row(e.j) += c * u.cwiseProduct(w);
    grad[2].row(e.k) += c * u.cwiseProduct(v);
  }
}

void mask_columns(Gradient& grad, const TrainableColumns& trainable) {
  for (std::size_t m = 0; m < 3; ++m) {
    const Eigen::Index rank = grad[m].cols();
    std::vector<bool> keep(static_cast<std::size_t>(rank), false);
    for (int c : trainable[m]) {
      check_index(c, static_cast<int>(rank), "trainable column");
      keep[static_cast<std::size_t>(c)] = true;
    }
    for (Eigen::Index r = 0; r < rank; ++r) {
      if (!keep[static_cast<std::size_t>(r)]) grad[m].col(r).setZero();
    }
  }
}

}  // namespace detail

double data_loss(const FactorModel& model, const ObservationTensor& obs) {
  check_dimensions(model, obs.dims());
  const std::vector<double> pred = detail::predict_entries(model, obs);
  const auto entries = obs.entries();
  double sum = 0.0;
  for (std::size_t n = 0; n < entries.size(); ++n) {
    const double r = entries[n].value - pred[n];
    sum += r * r;
  }
  return 0.5 * sum;
}

double ridge_penalty(const FactorModel& model, double lambda, std::span<const int> modes) {
  double sq = 0.0;
  for (int m : modes) sq += model[m].squaredNorm();
  return 0.5 * lambda * sq;
}

double masked_loss(const FactorModel& model, const ObservationTensor& obs, double lambda) {
  static constexpr int kAllModes[] = {0, 1, 2};
  return data_loss(model, obs) + ridge_penalty(model, lambda, kAllModes);
}

TrainableColumns all_trainable(int rank) {
  return {all_columns(rank), all_columns(rank), all_columns(rank)};
}

Gradient zero_gradient(const FactorModel& model) {
  return {Matrix::Zero(model[0].rows(), model.rank()), Matrix::Zero(model[1].rows(), model.rank()),
          Matrix::Zero(model[2].rows(), model.rank())};
}

Gradient masked_gradient(const FactorModel& model, const ObservationTensor& obs, double lambda,
                         const TrainableColumns& trainable) {
  check_dimensions(model, obs.dims());
  const std::vector<double> pred = detail::predict_entries(model, obs);
  const auto entries = obs.entries();
  std::vector<double> residual(entries.size());
  for (std::size_t n = 0; n < entries.size(); ++n) residual[n] = pred[n] - entries[n].value;

  Gradient grad = zero_gradient(model);
  detail::accumulate_entry_gradient(model, obs, residual, grad);
  for (std::size_t m = 0; m < 3; ++m) grad[m] += lambda * model.factors[m];
  detail::mask_columns(grad, trainable);
  return grad;
}

Gradient masked_gradient(const FactorModel& model, const ObservationTensor& obs, double lambda) {
  return masked_gradient(model, obs, lambda, all_trainable(model.rank()));
}

}  // namespace fairtensor
