#include "fairtensor/errors.hpp"
#include "fairtensor/models.hpp"

#include <fstream>

namespace fairtensor {

namespace {

using nlohmann::json;

json matrix_json(const Matrix& m) {
  // nlohmann/json prints the shortest decimal that round-trips, which never
  // needs more than 17 significant digits.
  std::vector<double> data(m.data(), m.data() + m.size());
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw Error("checkpoint matrix shape mismatch");
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

}  // namespace

nlohmann::json checkpoint_json(const TrainedModel& model) {
  json factors = json::array();
  for (const FactorModel& f : model.factors) {
    factors.push_back({{"users", matrix_json(f[0])},
                       {"curators", matrix_json(f[1])},
                       {"topics", matrix_json(f[2])},
                       {"sensitive_cols", f.sensitive_cols}});
  }
  return json{{"format", "fairtensor-checkpoint"},
              {"version", 1},
              {"kind", std::string(to_string(model.kind))},
              {"dims", {{"N", model.dims.users}, {"M", model.dims.curators}, {"K", model.dims.topics}}},
              {"config", model.config},
              {"factors", std::move(factors)},
              {"loss_traces", model.loss_traces},
              {"warnings", model.warnings}};
}

TrainedModel model_from_checkpoint(const nlohmann::json& j) {
  try {
    TrainedModel model;
    model.kind = parse_model_kind(j.at("kind").get<std::string>());
    const json& d = j.at("dims");
    model.dims = {d.at("N").get<int>(), d.at("M").get<int>(), d.at("K").get<int>()};
    model.config = j.at("config").get<TrainConfig>();
    for (const json& f : j.at("factors")) {
      model.factors.emplace_back(matrix_from_json(f.at("users")), matrix_from_json(f.at("curators")),
                                 matrix_from_json(f.at("topics")), f.at("sensitive_cols").get<ColumnSet>());
    }
    model.loss_traces = j.value("loss_traces", std::vector<std::vector<double>>{});
    model.warnings = j.value("warnings", std::vector<std::string>{});
    const std::size_t expected = is_matrix_kind(model.kind) ? static_cast<std::size_t>(model.dims.topics) : 1;
    if (model.factors.size() != expected) throw Error("checkpoint has the wrong number of factor models");
    return model;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << checkpoint_json(model).dump() << '\n';
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return model_from_checkpoint(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace fairtensor
