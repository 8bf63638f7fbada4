#include "fairtensor/oracles.hpp"

#include <algorithm>
#include <cmath>

namespace fairtensor::oracle {

std::vector<double> dense_reconstruction(const FactorModel& model) {
  const Dims d = model.dims();
  std::vector<double> out;
  out.reserve(d.cells());
  for (int i = 0; i < d.users; ++i) {
    for (int j = 0; j < d.curators; ++j) {
      for (int k = 0; k < d.topics; ++k) {
        double x = 0.0;
        for (int r = 0; r < model.rank(); ++r) x += model[0](i, r) * model[1](j, r) * model[2](k, r);
        out.push_back(x);
      }
    }
  }
  return out;
}

double dense_loss(const FactorModel& model, const std::vector<double>& dense, double lambda) {
  const std::vector<double> approx = dense_reconstruction(model);
  double fit = 0.0;
  for (std::size_t n = 0; n < dense.size(); ++n) fit += (dense[n] - approx[n]) * (dense[n] - approx[n]);
  double norms = 0.0;
  for (int m = 0; m < 3; ++m) {
    for (Eigen::Index r = 0; r < model[m].rows(); ++r)
      for (Eigen::Index c = 0; c < model[m].cols(); ++c) norms += model[m](r, c) * model[m](r, c);
  }
  return 0.5 * fit + 0.5 * lambda * norms;
}

Gradient finite_difference(const std::function<double(const FactorModel&)>& f, const FactorModel& at, double step) {
  Gradient g = zero_gradient(at);
  FactorModel probe = at;
  for (int m = 0; m < 3; ++m) {
    for (Eigen::Index r = 0; r < at[m].rows(); ++r) {
      for (Eigen::Index c = 0; c < at[m].cols(); ++c) {
        const double x = at[m](r, c);
        probe[m](r, c) = x + step;
        const double up = f(probe);
        probe[m](r, c) = x - step;
        const double down = f(probe);
        probe[m](r, c) = x;
        g[static_cast<std::size_t>(m)](r, c) = (up - down) / (2.0 * step);
      }
    }
  }
  return g;
}

Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& at, double step) {
  Matrix g = Matrix::Zero(at.rows(), at.cols());
  Matrix probe = at;
  for (Eigen::Index r = 0; r < at.rows(); ++r) {
    for (Eigen::Index c = 0; c < at.cols(); ++c) {
      const double x = at(r, c);
      probe(r, c) = x + step;
      const double up = f(probe);
      probe(r, c) = x - step;
      const double down = f(probe);
      probe(r, c) = x;
      g(r, c) = (up - down) / (2.0 * step);
    }
  }
  return g;
}

double relative_error(const Matrix& a, const Matrix& b, double floor) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

double relative_error(const Gradient& a, const Gradient& b, double floor) {
  double diff = 0.0;
  double ref = 0.0;
  for (std::size_t m = 0; m < 3; ++m) {
    diff += (a[m] - b[m]).squaredNorm();
    ref += b[m].squaredNorm();
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), floor);
}

double ecdf_signed_area(std::vector<double> group0, std::vector<double> group1) {
  std::sort(group0.begin(), group0.end());
  std::sort(group1.begin(), group1.end());
  std::vector<double> points = group0;
  points.insert(points.end(), group1.begin(), group1.end());
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());

  auto cdf = [](const std::vector<double>& s, double x) {
    return static_cast<double>(std::upper_bound(s.begin(), s.end(), x) - s.begin()) / static_cast<double>(s.size());
  };
  // Both CDFs are constant on [points[n], points[n+1]).
  double area = 0.0;
  for (std::size_t n = 0; n + 1 < points.size(); ++n) {
    area += (points[n + 1] - points[n]) * (cdf(group0, points[n]) - cdf(group1, points[n]));
  }
  return area;
}

FactorModel random_model(const Dims& dims, int rank, Rng& rng, double lo, double hi) {
  auto draw = [&](int rows) {
    Matrix m(rows, rank);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(lo, hi);
    return m;
  };
  Matrix u = draw(dims.users);
  Matrix v = draw(dims.curators);
  Matrix w = draw(dims.topics);
  return FactorModel(std::move(u), std::move(v), std::move(w));
}

}  // namespace fairtensor::oracle
