#include "doctest.h"

#include "fairtensor/oracles.hpp"
#include "fairtensor/tensor_core.hpp"

#include <cmath>
#include <stdexcept>

using namespace fairtensor;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> values) {
  Matrix m(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : values) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

ObservationTensor full_tensor(const Dims& d, const std::vector<double>& dense) {
  std::vector<Entry> entries;
  std::size_t n = 0;
  for (int i = 0; i < d.users; ++i)
    for (int j = 0; j < d.curators; ++j)
      for (int k = 0; k < d.topics; ++k) entries.push_back({i, j, k, dense[n++]});
  return ObservationTensor(d, std::move(entries));
}

ObservationTensor random_partial(const Dims& d, Rng& rng, double keep) {
  std::vector<Entry> entries;
  for (int i = 0; i < d.users; ++i)
    for (int j = 0; j < d.curators; ++j)
      for (int k = 0; k < d.topics; ++k)
        if (rng.bernoulli(keep) || entries.empty()) entries.push_back({i, j, k, rng.uniform(-1.0, 1.0)});
  return ObservationTensor(d, std::move(entries));
}

}  // namespace

TEST_CASE("observation tensor keeps sorted unique keys") {
  const ObservationTensor t({2, 2, 2}, {{1, 0, 1, 1.0}, {0, 1, 0, 0.0}, {0, 0, 1, 1.0}});
  REQUIRE(t.size() == 3);
  CHECK(t.entries()[0] == Entry{0, 0, 1, 1.0});
  CHECK(t.entries()[2] == Entry{1, 0, 1, 1.0});
  CHECK(t.sparsity() == doctest::Approx(3.0 / 8.0));
  CHECK(t.contains(0, 1, 0));
  CHECK_FALSE(t.contains(1, 1, 1));
  CHECK(t.count_value(1.0) == 2);

  CHECK_THROWS_AS(ObservationTensor({2, 2, 2}, {{0, 0, 0, 1.0}, {0, 0, 0, 0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(ObservationTensor({2, 2, 2}, {{0, 2, 0, 1.0}}), std::out_of_range);
  CHECK_THROWS_AS(ObservationTensor({2, 2, 2}, {{0, 0, 0, NAN}}), std::invalid_argument);
}

TEST_CASE("factor model invariants") {
  CHECK_THROWS_AS(FactorModel(Matrix::Zero(2, 2), Matrix::Zero(2, 3), Matrix::Zero(2, 2)), std::invalid_argument);
  CHECK_THROWS_AS(FactorModel(Matrix::Zero(2, 3), Matrix::Zero(2, 3), Matrix::Zero(2, 3), {1}), std::invalid_argument);
  CHECK_THROWS_AS(FactorModel(Matrix::Zero(2, 3), Matrix::Zero(2, 3), Matrix::Zero(2, 3), {1, 3}), std::out_of_range);
  const FactorModel m(Matrix::Zero(2, 4), Matrix::Zero(3, 4), Matrix::Zero(1, 4), {2, 3});
  CHECK(m.non_sensitive_cols() == ColumnSet{0, 1});
  CHECK(m.dims() == Dims{2, 3, 1});
}

TEST_CASE("cp_entry examples") {
  const FactorModel one(rows({{2}}), rows({{3}}), rows({{4}}));
  CHECK(cp_entry(one, 0, 0, 0, ColumnSet{0}) == 24.0);

  const FactorModel ones(rows({{1, 1}}), rows({{1, 1}}), rows({{1, 1}}));
  CHECK(cp_entry(ones, 0, 0, 0, ColumnSet{0}) == 1.0);
  CHECK(cp_entry(ones, 0, 0, 0, ColumnSet{0, 1}) == 2.0);

  const FactorModel three(rows({{1, 2, 0}}), rows({{0.5, 1, 7}}), rows({{2, 0.25, 0}}));
  CHECK(cp_entry(three, 0, 0, 0) == doctest::Approx(1.5));

  CHECK_THROWS_AS(cp_entry(three, 1, 0, 0), std::out_of_range);
  CHECK_THROWS_AS(cp_entry(three, 0, 0, -1), std::out_of_range);
  CHECK_THROWS_AS(cp_entry(three, 0, 0, 0, ColumnSet{}), std::invalid_argument);
}

TEST_CASE("cp_entry is additive over column partitions") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int rank = 1 + static_cast<int>(rng.below(6));
    const FactorModel m = oracle::random_model({3, 3, 3}, rank, rng);
    ColumnSet left, right;
    for (int r = 0; r < rank; ++r) (rng.bernoulli(0.5) ? left : right).push_back(r);
    const int i = static_cast<int>(rng.below(3)), j = static_cast<int>(rng.below(3)), k = static_cast<int>(rng.below(3));
    double parts = 0.0;
    if (!left.empty()) parts += cp_entry(m, i, j, k, left);
    if (!right.empty()) parts += cp_entry(m, i, j, k, right);
    CHECK(cp_entry(m, i, j, k) == doctest::Approx(parts).epsilon(1e-12));
  }
}

TEST_CASE("khatri_rao examples") {
  CHECK(khatri_rao(rows({{1}}), rows({{5}})) == rows({{5}}));
  CHECK(khatri_rao(rows({{1}, {2}}), rows({{3}, {4}})) == rows({{3}, {4}, {6}, {8}}));
  const Matrix eye = Matrix::Identity(2, 2);
  CHECK(khatri_rao(eye, eye) == rows({{1, 0}, {0, 0}, {0, 0}, {0, 1}}));
  CHECK_THROWS_AS(khatri_rao(Matrix::Zero(2, 2), Matrix::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("sparse MTTKRP agrees with the dense unfolding times Khatri-Rao") {
  Rng rng(2);
  const Dims d{3, 4, 2};
  const FactorModel m = oracle::random_model(d, 3, rng);
  std::vector<double> dense(d.cells());
  for (double& x : dense) x = rng.uniform(-1.0, 1.0);
  const ObservationTensor obs = full_tensor(d, dense);

  // Mode-0 unfolding with column index j * K + k matches khatri_rao(U2, U3).
  Matrix unfold(d.users, d.curators * d.topics);
  for (int i = 0; i < d.users; ++i)
    for (int c = 0; c < d.curators * d.topics; ++c) unfold(i, c) = dense[static_cast<std::size_t>(i * d.curators * d.topics + c)];
  const Matrix expected = unfold * khatri_rao(m[1], m[2]);
  CHECK((mttkrp(obs, m, 0) - expected).norm() < 1e-12);
}

TEST_CASE("masked_loss examples") {
  const ObservationTensor single({1, 1, 1}, {{0, 0, 0, 1.0}});
  const FactorModel zero(Matrix::Zero(1, 1), Matrix::Zero(1, 1), Matrix::Zero(1, 1));
  CHECK(masked_loss(zero, single, 0.0) == 0.5);

  const FactorModel exact(rows({{1}}), rows({{2}}), rows({{0.5}}));
  CHECK(masked_loss(exact, single, 0.0) == 0.0);

  // prediction 1*1*0.5 = 0.5, squared norms 1.5 + 1 + 0.5 = 3
  const ObservationTensor two({1, 1, 1}, {{0, 0, 0, 2.0}});
  const FactorModel m(rows({{1, std::sqrt(0.5)}}), rows({{1, 0}}), rows({{0.5, 0.5}}));
  CHECK(masked_loss(m, two, 1.0) == doctest::Approx(2.625).epsilon(1e-14));

  CHECK_THROWS_AS(masked_loss(zero, ObservationTensor({2, 1, 1}, {{1, 0, 0, 1.0}}), 0.0), std::invalid_argument);
}

TEST_CASE("masked_loss equals dense brute force on fully observed tensors") {
  Rng rng(3);
  for (int n = 1; n <= 4; ++n)
    for (int m = 1; m <= 4; ++m)
      for (int k = 1; k <= 4; ++k) {
        const Dims d{n, m, k};
        const int rank = 1 + static_cast<int>(rng.below(3));
        const FactorModel f = oracle::random_model(d, rank, rng);
        std::vector<double> dense(d.cells());
        for (double& x : dense) x = rng.uniform(-2.0, 2.0);
        const double lambda = rng.uniform(0.0, 1.0);
        CHECK(masked_loss(f, full_tensor(d, dense), lambda) ==
              doctest::Approx(oracle::dense_loss(f, dense, lambda)).epsilon(1e-10));
      }
}

TEST_CASE("masked_gradient trivial cases") {
  const ObservationTensor single({1, 1, 1}, {{0, 0, 0, 1.0}});
  const FactorModel zero(Matrix::Zero(1, 2), Matrix::Zero(1, 2), Matrix::Zero(1, 2));
  for (const Matrix& g : masked_gradient(zero, single, 0.3)) CHECK(g.isZero(0.0));

  const FactorModel exact(rows({{1}}), rows({{2}}), rows({{0.5}}));
  for (const Matrix& g : masked_gradient(exact, single, 0.0)) CHECK(g.isZero(0.0));
}

TEST_CASE("masked_gradient matches central finite differences") {
  Rng rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    const Dims d{1 + static_cast<int>(rng.below(5)), 1 + static_cast<int>(rng.below(5)), 1 + static_cast<int>(rng.below(5))};
    const int rank = 1 + static_cast<int>(rng.below(4));
    const FactorModel m = oracle::random_model(d, rank, rng);
    const ObservationTensor obs = random_partial(d, rng, 0.6);
    const double lambda = rng.uniform(0.0, 0.5);
    const Gradient analytic = masked_gradient(m, obs, lambda);
    const Gradient numeric = oracle::finite_difference([&](const FactorModel& x) { return masked_loss(x, obs, lambda); }, m, 1e-6);
    CHECK(oracle::relative_error(analytic, numeric) < 1e-5);
  }
}

TEST_CASE("frozen columns get an exactly zero gradient") {
  Rng rng(5);
  const Dims d{4, 5, 3};
  const FactorModel m = oracle::random_model(d, 4, rng);
  const ObservationTensor obs = random_partial(d, rng, 0.5);
  TrainableColumns trainable{ColumnSet{0, 1, 2, 3}, ColumnSet{0, 1}, ColumnSet{}};
  const Gradient g = masked_gradient(m, obs, 0.1, trainable);
  CHECK(g[1].col(2).isZero(0.0));
  CHECK(g[1].col(3).isZero(0.0));
  CHECK(g[2].isZero(0.0));
  const Gradient full = masked_gradient(m, obs, 0.1);
  CHECK(g[0] == full[0]);
  CHECK(g[1].leftCols(2) == full[1].leftCols(2));
}
