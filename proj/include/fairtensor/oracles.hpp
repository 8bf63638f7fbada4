#pragma once

// Reference implementations used to cross-check the kernels. They are written
// directly from the definitions (dense loops, finite differences, exact ECDF
// integration) and share no code with the optimised paths.

#include "fairtensor/rng.hpp"
#include "fairtensor/tensor_core.hpp"

#include <functional>
#include <vector>

namespace fairtensor::oracle {

/// Dense X_hat in (i, j, k) row-major order by explicit triple sum.
std::vector<double> dense_reconstruction(const FactorModel& model);

/// 1/2 |X - X_hat|_F^2 + lambda/2 * sum |U_n|_F^2 over a dense tensor.
double dense_loss(const FactorModel& model, const std::vector<double>& dense, double lambda);

/// Central differences of `f` with respect to every factor entry.
Gradient finite_difference(const std::function<double(const FactorModel&)>& f, const FactorModel& at, double step);

/// Central differences of `f` with respect to every matrix entry.
Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& at, double step);

/// |a - b|_F / max(|b|_F, floor).
double relative_error(const Gradient& a, const Gradient& b, double floor = 1e-12);
double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-12);

/// Exact integral of F0 - F1 over [min, max] of the pooled samples, summed
/// piecewise between sorted breakpoints.
double ecdf_signed_area(std::vector<double> group0, std::vector<double> group1);

/// Factor entries uniform in [lo, hi).
FactorModel random_model(const Dims& dims, int rank, Rng& rng, double lo = -1.0, double hi = 1.0);

}  // namespace fairtensor::oracle
