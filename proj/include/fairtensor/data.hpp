#pragma once

#include "fairtensor/tensor_core.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace fairtensor {

/// One positive implicit-feedback link.
struct InteractionRecord {
  std::string user_id;
  std::string curator_id;
  std::string topic_id;
};

/// External string id <-> dense index, in first-appearance order.
class IdIndex {
 public:
  int intern(const std::string& id);
  /// -1 when unknown.
  int find(const std::string& id) const;
  const std::string& id(int index) const { return ids_.at(static_cast<std::size_t>(index)); }
  int size() const { return static_cast<int>(ids_.size()); }
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, int> index_;
};

struct InteractionData {
  std::vector<InteractionRecord> records;
  IdIndex users;
  IdIndex curators;
  IdIndex topics;

  Dims dims() const { return {users.size(), curators.size(), topics.size()}; }
  /// Every record as a rating-1.0 cell.
  ObservationTensor positives() const;
};

/// Reads `user_id,curator_id,topic_id` rows. Duplicate triples collapse to one.
/// Throws ParseError (with line number) or EmptyDatasetError.
InteractionData load_interactions(const std::filesystem::path& path);

/// Binary curator group labels; S[j] is (1,0) for group 0 and (0,1) for group 1.
class SensitiveMap {
 public:
  SensitiveMap() = default;
  /// Throws std::invalid_argument if any label is not 0 or 1.
  explicit SensitiveMap(std::vector<int> groups);

  int size() const { return static_cast<int>(groups_.size()); }
  int group(int curator) const { return groups_.at(static_cast<std::size_t>(curator)); }
  const std::vector<int>& groups() const { return groups_; }
  int count(int group) const;
  /// M x 2 one-hot feature matrix [s0 s1].
  Matrix features() const;

 private:
  std::vector<int> groups_;
};

/// Reads `curator_id,group` rows against the curator index of a loaded
/// interaction file. Every indexed curator must be labelled (ConfigError
/// otherwise); rows naming unknown curators are ignored.
SensitiveMap load_sensitive(const std::filesystem::path& path, const IdIndex& curators);

/// Adds each unobserved cell independently with `probability` as a rating-0.0
/// entry. Cells are visited in (i, j, k) order so the result depends only on
/// the seed.
ObservationTensor negative_sample(const ObservationTensor& positives, double probability,
                                  std::uint64_t seed);

struct SplitDataset {
  ObservationTensor train;
  ObservationTensor test;
  std::uint64_t seed = 0;
};

/// Uniform random partition with floor(train_fraction * n) cells in train.
/// Throws SplitError for fewer than two entries.
SplitDataset split(const ObservationTensor& obs, double train_fraction, std::uint64_t seed);

/// Split file: dims, seed, optional curator groups and both entry lists as
/// [i, j, k, value] rows.
nlohmann::json split_json(const SplitDataset& split, const SensitiveMap* sensitive);
SplitDataset split_from_json(const nlohmann::json& j, std::optional<SensitiveMap>* sensitive = nullptr);

struct SynthConfig {
  int users = 589;
  int curators = 252;
  int topics = 10;
  int true_rank = 5;
  double group_ratio = 0.5;
  double bias_strength = 0.0;
  double target_sparsity = 16867.0 / (589.0 * 252.0 * 10.0);
  std::uint64_t seed = 7;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& cfg);
void from_json(const nlohmann::json& j, SynthConfig& cfg);

struct SynthDataset {
  ObservationTensor observations;
  SensitiveMap groups;
  FactorModel truth;
  std::size_t positives_group0 = 0;
  std::size_t positives_group1 = 0;

  /// positives_group0 / positives_group1 (infinity when group 1 has none).
  double positive_ratio() const;
};

/// Ground-truth factors are uniform in [0,1); group-0 curator cells get
/// `bias_strength` added to their true score, and the highest-scoring cells
/// (ties by ascending key) become positives until the target sparsity is met.
SynthDataset synth_generate(const SynthConfig& cfg);

/// Bisection on bias_strength over [0, true_rank] so that the group-0 to
/// group-1 positive ratio approaches `target_ratio`.
double calibrate_bias(SynthConfig cfg, double target_ratio, int iterations = 40);

/// Writes interactions.csv, sensitive.csv and synth.json into `dir`.
void write_synth(const std::filesystem::path& dir, const SynthConfig& cfg, const SynthDataset& data);

/// Synthetic ids are "u<i>", "c<j>", "t<k>".
InteractionData synth_interactions(const SynthDataset& data);

}  // namespace fairtensor
