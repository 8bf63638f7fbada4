#pragma once

#include "fairtensor/data.hpp"
#include "fairtensor/tensor_core.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fairtensor {

enum class ModelKind { OMC, OTC, RMC, RTC, FM, FT };

inline constexpr std::array<ModelKind, 6> kAllModelKinds = {ModelKind::OMC, ModelKind::OTC, ModelKind::RMC,
                                                            ModelKind::RTC, ModelKind::FM,  ModelKind::FT};

std::string_view to_string(ModelKind kind);
/// Accepts the upper-case names ("OTC", ...); throws ConfigError otherwise.
ModelKind parse_model_kind(std::string_view name);

/// OMC, RMC and FM factor each topic slice independently.
bool is_matrix_kind(ModelKind kind);
/// RMC, RTC, FM and FT need curator group labels.
bool needs_sensitive(ModelKind kind);
/// FM and FT reconstruct from the non-sensitive columns only.
bool is_isolating_kind(ModelKind kind);

struct TrainConfig {
  int rank = 20;
  double lambda = 0.01;
  /// Statistical-parity penalty weight (RTC, RMC).
  double parity_weight = 100.0;
  /// Orthogonality penalty weight between free and sensitive curator columns (FT, FM).
  double ortho_weight = 100.0;
  /// Initial step of the line-searched gradient descent.
  double learning_rate = 0.005;
  int max_iters = 500;
  double tol = 1e-5;
  std::uint64_t seed = 0;
  /// If set, FT/FM use rank + 2 columns instead of reserving two of `rank`.
  bool extra_sensitive_cols = false;

  /// Column count of the factor matrices for `kind`.
  int total_columns(ModelKind kind) const;
  void validate(ModelKind kind) const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
/// Missing fields keep their defaults.
void from_json(const nlohmann::json& j, TrainConfig& cfg);

struct TrainedModel {
  ModelKind kind = ModelKind::OTC;
  Dims dims;
  TrainConfig config;
  /// Tensor kinds: one N x M x K model. Matrix kinds: one model per topic,
  /// each with a single all-ones topic row.
  std::vector<FactorModel> factors;
  /// Objective value after initialisation and after every iteration, one
  /// trace per factor model.
  std::vector<std::vector<double>> loss_traces;
  std::vector<std::string> warnings;

  const FactorModel& slice_for(int topic) const;
};

/// Starting point of every trainer: entries uniform in [0, 0.1) drawn for the
/// user, curator and (unless `matrix`) topic factors in that order. Matrix
/// slices get a single all-ones topic row.
FactorModel initial_factors(const Dims& dims, int cols, std::uint64_t seed, bool matrix);

/// Seed of topic slice `topic` for the matrix kinds.
std::uint64_t topic_seed(std::uint64_t seed, int topic);

/// Alternating least squares, one exact ridge solve per factor row.
TrainedModel train_otc(const ObservationTensor& train, const TrainConfig& cfg);

/// Gradient descent on masked_loss alone; RTC with the parity term removed.
TrainedModel train_cp_gd(const ObservationTensor& train, const TrainConfig& cfg);

/// Gradient descent on masked_loss + parity_weight/2 * (mean0 - mean1)^2.
TrainedModel train_rtc(const ObservationTensor& train, const SensitiveMap& sensitive, const TrainConfig& cfg);

/// Curator factor carries S in its last two columns (frozen); descent on
/// masked_loss + ortho_weight/2 * |S^T U2_free|^2, then U2_free is projected
/// onto the orthogonal complement of span(S).
TrainedModel train_ft(const ObservationTensor& train, const SensitiveMap& sensitive, const TrainConfig& cfg);

/// Per-topic matrix analogue of OTC (OMC), RTC (RMC) or FT (FM).
TrainedModel train_matrix(ModelKind kind, const ObservationTensor& train, const SensitiveMap* sensitive,
                          const TrainConfig& cfg);

TrainedModel train_model(ModelKind kind, const ObservationTensor& train, const SensitiveMap* sensitive,
                         const TrainConfig& cfg);

/// Full reconstruction for OTC/RTC/OMC/RMC; non-sensitive columns for FT/FM.
double predict(const TrainedModel& model, int i, int j, int k);

/// Curators by descending score (ties: ascending index), skipping `exclude`.
std::vector<int> top_k(const TrainedModel& model, int user, int topic, int k_items, std::span<const int> exclude);

// Fairness terms. The gradients are exposed so they can be checked against
// finite differences.

/// Mean prediction over `obs` cells of group-0 curators minus that of group 1.
/// Throws ConfigError if either group has no cells.
double parity_gap(const FactorModel& model, const ObservationTensor& obs, const SensitiveMap& sensitive);
double parity_penalty(const FactorModel& model, const ObservationTensor& obs, const SensitiveMap& sensitive,
                      double weight);
Gradient parity_gradient(const FactorModel& model, const ObservationTensor& obs, const SensitiveMap& sensitive,
                         double weight);

/// weight/2 * |S^T curators[:, free_cols]|_F^2.
double orthogonality_penalty(const Matrix& curators, const Matrix& features, const ColumnSet& free_cols,
                             double weight);
/// M x R gradient; only `free_cols` are nonzero.
Matrix orthogonality_gradient(const Matrix& curators, const Matrix& features, const ColumnSet& free_cols,
                              double weight);
/// curators[:, free_cols] <- (I - S (S^T S)^-1 S^T) curators[:, free_cols].
void project_out_features(Matrix& curators, const Matrix& features, const ColumnSet& free_cols);

// Checkpoints: JSON with kind, dimensions, config and row-major factor data.
nlohmann::json checkpoint_json(const TrainedModel& model);
TrainedModel model_from_checkpoint(const nlohmann::json& j);
void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace fairtensor
