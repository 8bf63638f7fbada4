#include "fairtensor/data.hpp"

#include "fairtensor/errors.hpp"
#include "fairtensor/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

namespace fairtensor {

namespace {

std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

void expect_header(const std::string& line, const std::vector<std::string>& expected) {
  if (split_csv_line(line) != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw ParseError("expected header '" + want + "'", 1);
  }
}

}  // namespace

int IdIndex::intern(const std::string& id) {
  auto [it, inserted] = index_.try_emplace(id, static_cast<int>(ids_.size()));
  if (inserted) ids_.push_back(id);
  return it->second;
}

int IdIndex::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? -1 : it->second;
}

ObservationTensor InteractionData::positives() const {
  std::vector<Entry> entries;
  entries.reserve(records.size());
  for (const auto& r : records) {
    entries.push_back({users.find(r.user_id), curators.find(r.curator_id), topics.find(r.topic_id), 1.0});
  }
  return ObservationTensor(dims(), std::move(entries));
}

InteractionData load_interactions(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  InteractionData data;
  std::string line;
  if (!std::getline(in, line) || is_blank(line)) throw EmptyDatasetError(path.string() + " is empty");
  expect_header(line, {"user_id", "curator_id", "topic_id"});

  std::set<std::tuple<int, int, int>> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 3) {
      throw ParseError("expected 3 fields, got " + std::to_string(fields.size()), line_no);
    }
    for (const auto& f : fields) {
      if (f.empty()) throw ParseError("empty id", line_no);
    }
    const int i = data.users.intern(fields[0]);
    const int j = data.curators.intern(fields[1]);
    const int k = data.topics.intern(fields[2]);
    if (seen.emplace(i, j, k).second) data.records.push_back({fields[0], fields[1], fields[2]});
  }
  if (data.records.empty()) throw EmptyDatasetError(path.string() + " has no interactions");
  return data;
}

SensitiveMap::SensitiveMap(std::vector<int> groups) : groups_(std::move(groups)) {
  for (int g : groups_) {
    if (g != 0 && g != 1) throw std::invalid_argument("group labels must be 0 or 1");
  }
}

int SensitiveMap::count(int group) const {
  return static_cast<int>(std::count(groups_.begin(), groups_.end(), group));
}

Matrix SensitiveMap::features() const {
  Matrix s = Matrix::Zero(size(), 2);
  for (int j = 0; j < size(); ++j) s(j, groups_[static_cast<std::size_t>(j)]) = 1.0;
  return s;
}

SensitiveMap load_sensitive(const std::filesystem::path& path, const IdIndex& curators) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || is_blank(line)) throw EmptyDatasetError(path.string() + " is empty");
  expect_header(line, {"curator_id", "group"});

  std::vector<int> groups(static_cast<std::size_t>(curators.size()), -1);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 2 || fields[0].empty()) throw ParseError("expected curator_id,group", line_no);
    if (fields[1] != "0" && fields[1] != "1") throw ParseError("group must be 0 or 1", line_no);
    const int j = curators.find(fields[0]);
    if (j >= 0) groups[static_cast<std::size_t>(j)] = fields[1] == "1" ? 1 : 0;
  }
  for (int j = 0; j < curators.size(); ++j) {
    if (groups[static_cast<std::size_t>(j)] < 0) {
      throw ConfigError("curator '" + curators.id(j) + "' has no group in " + path.string());
    }
  }
  return SensitiveMap(std::move(groups));
}

ObservationTensor negative_sample(const ObservationTensor& positives, double probability,
                                  std::uint64_t seed) {
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw std::invalid_argument("negative sampling probability must lie in [0, 1]");
  }
  const Dims d = positives.dims();
  std::vector<Entry> out(positives.entries().begin(), positives.entries().end());
  if (probability == 0.0) return ObservationTensor(d, std::move(out));

  Rng rng(seed);
  const auto pos = positives.entries();
  std::size_t cursor = 0;
  for (int i = 0; i < d.users; ++i) {
    for (int j = 0; j < d.curators; ++j) {
      for (int k = 0; k < d.topics; ++k) {
        if (cursor < pos.size() && pos[cursor].i == i && pos[cursor].j == j && pos[cursor].k == k) {
          ++cursor;
          continue;
        }
        if (rng.bernoulli(probability)) out.push_back({i, j, k, 0.0});
      }
    }
  }
  return ObservationTensor(d, std::move(out));
}

SplitDataset split(const ObservationTensor& obs, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie in (0, 1)");
  }
  if (obs.size() < 2) throw SplitError("need at least two entries to split");
  std::vector<Entry> shuffled(obs.entries().begin(), obs.entries().end());
  Rng rng(seed);
  rng.shuffle(shuffled);
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(obs.size())));
  std::vector<Entry> train(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<Entry> test(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train), shuffled.end());
  return {ObservationTensor(obs.dims(), std::move(train)), ObservationTensor(obs.dims(), std::move(test)),
          seed};
}

namespace {

nlohmann::json entries_json(const ObservationTensor& obs) {
  nlohmann::json rows = nlohmann::json::array();
  for (const Entry& e : obs.entries()) rows.push_back({e.i, e.j, e.k, e.value});
  return rows;
}

ObservationTensor entries_from_json(const Dims& dims, const nlohmann::json& rows) {
  std::vector<Entry> entries;
  entries.reserve(rows.size());
  for (const auto& r : rows) {
    if (!r.is_array() || r.size() != 4) throw Error("split entries must be [i, j, k, value]");
    entries.push_back({r[0].get<int>(), r[1].get<int>(), r[2].get<int>(), r[3].get<double>()});
  }
  return ObservationTensor(dims, std::move(entries));
}

}  // namespace

nlohmann::json split_json(const SplitDataset& split, const SensitiveMap* sensitive) {
  const Dims d = split.train.dims();
  nlohmann::json j{{"dims", {{"N", d.users}, {"M", d.curators}, {"K", d.topics}}},
                   {"seed", split.seed},
                   {"train", entries_json(split.train)},
                   {"test", entries_json(split.test)}};
  j["groups"] = sensitive ? nlohmann::json(sensitive->groups()) : nlohmann::json(nullptr);
  return j;
}

SplitDataset split_from_json(const nlohmann::json& j, std::optional<SensitiveMap>* sensitive) {
  try {
    const auto& d = j.at("dims");
    const Dims dims{d.at("N").get<int>(), d.at("M").get<int>(), d.at("K").get<int>()};
    SplitDataset out{entries_from_json(dims, j.at("train")), entries_from_json(dims, j.at("test")),
                     j.at("seed").get<std::uint64_t>()};
    if (sensitive) {
      if (j.contains("groups") && !j.at("groups").is_null()) {
        *sensitive = SensitiveMap(j.at("groups").get<std::vector<int>>());
      } else {
        sensitive->reset();
      }
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed split file: ") + e.what());
  }
}

void SynthConfig::validate() const {
  if (users <= 0 || curators <= 0 || topics <= 0 || true_rank <= 0) {
    throw ConfigError("synthetic dimensions and rank must be positive");
  }
  if (!(group_ratio > 0.0 && group_ratio <= 1.0)) throw ConfigError("group_ratio must lie in (0, 1]");
  if (!(bias_strength >= 0.0) || !std::isfinite(bias_strength)) {
    throw ConfigError("bias_strength must be finite and >= 0");
  }
  if (!(target_sparsity > 0.0 && target_sparsity <= 1.0)) {
    throw ConfigError("target_sparsity must lie in (0, 1]");
  }
}

void to_json(nlohmann::json& j, const SynthConfig& cfg) {
  j = nlohmann::json{{"N", cfg.users},
                     {"M", cfg.curators},
                     {"K", cfg.topics},
                     {"true_rank", cfg.true_rank},
                     {"group_ratio", cfg.group_ratio},
                     {"bias_strength", cfg.bias_strength},
                     {"target_sparsity", cfg.target_sparsity},
                     {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& cfg) {
  cfg.users = j.value("N", cfg.users);
  cfg.curators = j.value("M", cfg.curators);
  cfg.topics = j.value("K", cfg.topics);
  cfg.true_rank = j.value("true_rank", cfg.true_rank);
  cfg.group_ratio = j.value("group_ratio", cfg.group_ratio);
  cfg.bias_strength = j.value("bias_strength", cfg.bias_strength);
  cfg.target_sparsity = j.value("target_sparsity", cfg.target_sparsity);
  cfg.seed = j.value("seed", cfg.seed);
}

double SynthDataset::positive_ratio() const {
  if (positives_group1 == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(positives_group0) / static_cast<double>(positives_group1);
}

namespace {

struct SynthBase {
  FactorModel truth;
  SensitiveMap groups;
  std::vector<double> scores;  // unbiased, row-major (i, j, k)
  std::size_t n_positive = 0;
};

SynthBase synth_base(const SynthConfig& cfg) {
  cfg.validate();
  const auto cells = static_cast<std::size_t>(cfg.users) * static_cast<std::size_t>(cfg.curators) *
                     static_cast<std::size_t>(cfg.topics);
  const auto n_positive = static_cast<std::size_t>(std::llround(cfg.target_sparsity * static_cast<double>(cells)));
  if (n_positive < 1) throw ConfigError("target_sparsity yields no positive cells");

  Rng rng(cfg.seed);
  auto draw = [&](int rows) {
    Matrix m(rows, cfg.true_rank);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform();
    return m;
  };
  Matrix u = draw(cfg.users);
  Matrix v = draw(cfg.curators);
  Matrix w = draw(cfg.topics);

  std::vector<int> order(static_cast<std::size_t>(cfg.curators));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const auto n_group0 = static_cast<std::size_t>(std::llround(cfg.group_ratio * cfg.curators));
  std::vector<int> groups(order.size(), 1);
  for (std::size_t n = 0; n < n_group0 && n < order.size(); ++n) groups[static_cast<std::size_t>(order[n])] = 0;

  SynthBase base{FactorModel(std::move(u), std::move(v), std::move(w)), SensitiveMap(std::move(groups)), {},
                 n_positive};
  base.scores.resize(cells);
  std::size_t n = 0;
  for (int i = 0; i < cfg.users; ++i) {
    for (int j = 0; j < cfg.curators; ++j) {
      const RowVector uv = base.truth[0].row(i).cwiseProduct(base.truth[1].row(j));
      for (int k = 0; k < cfg.topics; ++k) base.scores[n++] = uv.dot(base.truth[2].row(k));
    }
  }
  return base;
}

// Indices of the n_positive highest biased scores, ties broken by lower index.
std::vector<std::size_t> top_cells(const SynthBase& base, const SynthConfig& cfg, double bias) {
  const std::size_t per_curator = static_cast<std::size_t>(cfg.topics);
  auto biased = [&](std::size_t cell) {
    const int j = static_cast<int>((cell / per_curator) % static_cast<std::size_t>(cfg.curators));
    return base.scores[cell] + (base.groups.group(j) == 0 ? bias : 0.0);
  };
  std::vector<double> score(base.scores.size());
  for (std::size_t c = 0; c < score.size(); ++c) score[c] = biased(c);
  std::vector<std::size_t> idx(score.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t n = std::min(base.n_positive, idx.size());
  auto better = [&](std::size_t a, std::size_t b) {
    return score[a] != score[b] ? score[a] > score[b] : a < b;
  };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n - 1), idx.end(), better);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::pair<std::size_t, std::size_t> group_counts(const SynthBase& base, const SynthConfig& cfg,
                                                 const std::vector<std::size_t>& cells) {
  std::size_t g0 = 0;
  for (std::size_t c : cells) {
    const int j = static_cast<int>((c / static_cast<std::size_t>(cfg.topics)) % static_cast<std::size_t>(cfg.curators));
    if (base.groups.group(j) == 0) ++g0;
  }
  return {g0, cells.size() - g0};
}

}  // namespace

SynthDataset synth_generate(const SynthConfig& cfg) {
  SynthBase base = synth_base(cfg);
  const std::vector<std::size_t> cells = top_cells(base, cfg, cfg.bias_strength);
  const int per_user = cfg.curators * cfg.topics;
  std::vector<Entry> entries;
  entries.reserve(cells.size());
  for (std::size_t c : cells) {
    const auto cell = static_cast<int>(c);
    entries.push_back({cell / per_user, (cell % per_user) / cfg.topics, cell % cfg.topics, 1.0});
  }
  const auto [g0, g1] = group_counts(base, cfg, cells);
  return {ObservationTensor({cfg.users, cfg.curators, cfg.topics}, std::move(entries)), base.groups,
          std::move(base.truth), g0, g1};
}

double calibrate_bias(SynthConfig cfg, double target_ratio, int iterations) {
  if (!(target_ratio > 0.0)) throw ConfigError("target ratio must be positive");
  const SynthBase base = synth_base(cfg);
  auto ratio = [&](double bias) {
    const auto [g0, g1] = group_counts(base, cfg, top_cells(base, cfg, bias));
    return g1 == 0 ? std::numeric_limits<double>::infinity() : static_cast<double>(g0) / static_cast<double>(g1);
  };
  double lo = 0.0;
  double hi = static_cast<double>(cfg.true_rank);
  if (ratio(lo) >= target_ratio) return lo;
  for (int it = 0; it < iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    (ratio(mid) < target_ratio ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

InteractionData synth_interactions(const SynthDataset& data) {
  InteractionData out;
  const Dims d = data.observations.dims();
  for (int i = 0; i < d.users; ++i) out.users.intern("u" + std::to_string(i));
  for (int j = 0; j < d.curators; ++j) out.curators.intern("c" + std::to_string(j));
  for (int k = 0; k < d.topics; ++k) out.topics.intern("t" + std::to_string(k));
  for (const Entry& e : data.observations.entries()) {
    out.records.push_back({out.users.id(e.i), out.curators.id(e.j), out.topics.id(e.k)});
  }
  return out;
}

void write_synth(const std::filesystem::path& dir, const SynthConfig& cfg, const SynthDataset& data) {
  std::filesystem::create_directories(dir);
  const InteractionData ids = synth_interactions(data);
  {
    std::ofstream out(dir / "interactions.csv");
    out << "user_id,curator_id,topic_id\n";
    for (const auto& r : ids.records) out << r.user_id << ',' << r.curator_id << ',' << r.topic_id << '\n';
  }
  {
    std::ofstream out(dir / "sensitive.csv");
    out << "curator_id,group\n";
    for (int j = 0; j < data.groups.size(); ++j) out << ids.curators.id(j) << ',' << data.groups.group(j) << '\n';
  }
  nlohmann::json sidecar;
  sidecar["config"] = cfg;
  sidecar["stats"] = {{"positives", data.observations.size()},
                      {"sparsity", data.observations.sparsity()},
                      {"positives_group0", data.positives_group0},
                      {"positives_group1", data.positives_group1},
                      {"curators_group0", data.groups.count(0)},
                      {"curators_group1", data.groups.count(1)}};
  if (data.positives_group1 > 0) sidecar["stats"]["positive_ratio"] = data.positive_ratio();
  std::ofstream(dir / "synth.json") << sidecar.dump(2) << '\n';
}

}  // namespace fairtensor
