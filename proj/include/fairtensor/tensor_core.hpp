#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace fairtensor {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

/// Mode sizes of a user x curator x topic tensor.
struct Dims {
  int users = 0;
  int curators = 0;
  int topics = 0;

  int operator[](int mode) const { return mode == 0 ? users : mode == 1 ? curators : topics; }
  std::size_t cells() const {
    return static_cast<std::size_t>(users) * static_cast<std::size_t>(curators) *
           static_cast<std::size_t>(topics);
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// One observed cell. Positives carry 1.0, sampled negatives 0.0; any finite
/// value is accepted so the kernels can be checked on real-valued tensors.
struct Entry {
  int i = 0;
  int j = 0;
  int k = 0;
  double value = 0.0;

  int index(int mode) const { return mode == 0 ? i : mode == 1 ? j : k; }
  friend bool operator==(const Entry&, const Entry&) = default;
};

inline bool key_less(const Entry& a, const Entry& b) {
  if (a.i != b.i) return a.i < b.i;
  if (a.j != b.j) return a.j < b.j;
  return a.k < b.k;
}

/// Sparse coordinate tensor of observed cells. Entries are kept sorted by
/// (i, j, k) and keys are unique, so every kernel iterates in the same order.
class ObservationTensor {
 public:
  ObservationTensor() = default;
  /// Throws std::out_of_range on an index outside `dims` and
  /// std::invalid_argument on duplicate keys or non-finite values.
  ObservationTensor(Dims dims, std::vector<Entry> entries);

  const Dims& dims() const { return dims_; }
  std::span<const Entry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// |entries| / (N*M*K).
  double sparsity() const;

  bool contains(int i, int j, int k) const;
  std::size_t count_value(double value) const;

 private:
  Dims dims_;
  std::vector<Entry> entries_;
};

/// Column indices (0-based) into the rank dimension.
using ColumnSet = std::vector<int>;

ColumnSet all_columns(int rank);

/// CP factor matrices for the user, curator and topic modes.
struct FactorModel {
  std::array<Matrix, 3> factors;
  /// Empty, or the two columns that hold the one-hot group features.
  ColumnSet sensitive_cols;

  FactorModel() = default;
  FactorModel(Matrix users, Matrix curators, Matrix topics, ColumnSet sensitive = {});

  int rank() const { return static_cast<int>(factors[0].cols()); }
  Dims dims() const;
  Matrix& operator[](int mode) { return factors[static_cast<std::size_t>(mode)]; }
  const Matrix& operator[](int mode) const { return factors[static_cast<std::size_t>(mode)]; }

  /// Columns not listed in sensitive_cols, ascending.
  ColumnSet non_sensitive_cols() const;

  /// Throws std::invalid_argument when the invariants are broken.
  void validate() const;
};

/// Sum over r in `cols` of U1[i,r] * U2[j,r] * U3[k,r].
double cp_entry(const FactorModel& model, int i, int j, int k, std::span<const int> cols);
double cp_entry(const FactorModel& model, int i, int j, int k);

/// Column-wise Kronecker product; row (a*J + b) holds A[a,:] .* B[b,:].
Matrix khatri_rao(const Matrix& a, const Matrix& b);

/// Sparse MTTKRP for `mode`: row n accumulates value * (Hadamard product of
/// the other two factor rows) over the observed cells whose mode index is n.
Matrix mttkrp(const ObservationTensor& obs, const FactorModel& model, int mode);

/// 1/2 sum over observed cells of (value - prediction)^2.
double data_loss(const FactorModel& model, const ObservationTensor& obs);

/// lambda/2 * sum of squared Frobenius norms over the listed modes.
double ridge_penalty(const FactorModel& model, double lambda, std::span<const int> modes);

/// Observed-cell data term plus lambda/2 * (|U1|^2 + |U2|^2 + |U3|^2).
double masked_loss(const FactorModel& model, const ObservationTensor& obs, double lambda);

using Gradient = std::array<Matrix, 3>;
using TrainableColumns = std::array<ColumnSet, 3>;

TrainableColumns all_trainable(int rank);

/// Gradient of masked_loss. Columns not listed for a mode are exactly zero.
Gradient masked_gradient(const FactorModel& model, const ObservationTensor& obs, double lambda,
                         const TrainableColumns& trainable);
Gradient masked_gradient(const FactorModel& model, const ObservationTensor& obs, double lambda);

Gradient zero_gradient(const FactorModel& model);

/// Throws std::invalid_argument unless the model's mode sizes match `dims`.
void check_dimensions(const FactorModel& model, const Dims& dims);

namespace detail {

/// Adds sum_e coeff[e] * d prediction_e / d factors to `grad`, for every mode.
void accumulate_entry_gradient(const FactorModel& model, const ObservationTensor& obs,
                               std::span<const double> coeff, Gradient& grad);

/// Predictions over all columns for every observed cell, in entry order.
std::vector<double> predict_entries(const FactorModel& model, const ObservationTensor& obs);

void mask_columns(Gradient& grad, const TrainableColumns& trainable);

}  // namespace detail

}  // namespace fairtensor
