#pragma once

// Small dense matrix utilities: matrix exponential and the dominant
// eigenpair of a Metzler matrix. Everything here targets matrices with at
// most a few tens of rows.

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "plasticity/errors.hpp"

namespace plasticity {

// Scaling-and-squaring with a diagonal [6/6] Pade approximant. The input is
// scaled to infinity-norm <= 0.5, where the order-6 approximant is accurate
// to well below 1e-13, then squared back up.
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm / 0.5))));
  Eigen::MatrixXd scaled = a / std::ldexp(1.0, squarings);

  constexpr int order = 6;
  double coeff = 1.0;
  Eigen::MatrixXd numerator = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd denominator = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
  for (int k = 1; k <= order; ++k) {
    coeff *= static_cast<double>(order - k + 1) / static_cast<double>(k * (2 * order - k + 1));
    power = power * scaled;
    numerator += coeff * power;
    denominator += (k % 2 == 0 ? coeff : -coeff) * power;
  }
  Eigen::MatrixXd result = denominator.partialPivLu().solve(numerator);
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

struct PerronRoot {
  double lambda = 0.0;
  // Stationary type composition: the eigenvector the population proportions
  // converge to, normalized to sum 1. Satisfies A^T v = lambda v for the
  // row-indexed-by-source generator A.
  Eigen::VectorXd composition;
  // Survival weight by starting type: A u = lambda u, normalized to sum 1.
  Eigen::VectorXd reproductive_value;
};

namespace detail {
// Power iteration on a nonnegative primitive matrix, with Collatz-Wielandt
// bracketing of the spectral radius.
inline double power_iteration(const Eigen::MatrixXd& b, Eigen::VectorXd& x, double tol) {
  const int n = static_cast<int>(b.rows());
  x = Eigen::VectorXd::Constant(n, 1.0 / n);
  double rho = 0.0;
  for (int iter = 0; iter < 200000; ++iter) {
    Eigen::VectorXd y = b * x;
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (int i = 0; i < n; ++i) {
      if (x[i] <= 0.0) return std::numeric_limits<double>::quiet_NaN();
      const double ratio = y[i] / x[i];
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    rho = 0.5 * (lo + hi);
    x = y / y.sum();
    if (hi - lo <= tol * std::max(1.0, std::abs(rho))) return rho;
  }
  throw IterationLimitError("power iteration did not converge");
}
}  // namespace detail

// Dominant eigenpair of a Metzler matrix (nonnegative off-diagonals). The
// matrix is shifted to a nonnegative one before power iteration; the extra
// +1 keeps the shifted diagonal positive so the iteration cannot cycle on a
// periodic pattern. The result is cross-checked against the dense QR
// eigensolver.
inline PerronRoot perron_root(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  PerronRoot result;
  if (n == 1) {
    result.lambda = a(0, 0);
    result.composition = Eigen::VectorXd::Ones(1);
    result.reproductive_value = Eigen::VectorXd::Ones(1);
    return result;
  }

  double sigma = 0.0;
  for (int i = 0; i < n; ++i) sigma = std::max(sigma, std::abs(a(i, i)));
  sigma += 1.0;
  const Eigen::MatrixXd shifted = a + sigma * Eigen::MatrixXd::Identity(n, n);

  constexpr double tol = 1e-13;
  Eigen::VectorXd u;
  const double rho_right = detail::power_iteration(shifted, u, tol);
  Eigen::VectorXd v;
  const double rho_left = detail::power_iteration(shifted.transpose(), v, tol);
  if (std::isnan(rho_right) || std::isnan(rho_left))
    throw NonIrreducibleError("power iteration left the positive cone");
  result.lambda = 0.5 * (rho_right + rho_left) - sigma;
  result.reproductive_value = u;
  result.composition = v;

  const double norm_a = std::max(1.0, a.cwiseAbs().rowwise().sum().maxCoeff());
  const double positivity_floor = 1e-12;
  for (int i = 0; i < n; ++i)
    if (!(u[i] > positivity_floor) || !(v[i] > positivity_floor))
      throw NonIrreducibleError("dominant eigenvector is not strictly positive");

  Eigen::EigenSolver<Eigen::MatrixXd> solver(a, /*computeEigenvectors=*/false);
  double rightmost = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) rightmost = std::max(rightmost, solver.eigenvalues()[i].real());
  if (std::abs(rightmost - result.lambda) > 1e-9 * norm_a)
    throw NumericalError("power iteration and dense eigensolver disagree on lambda_max");
  return result;
}

}  // namespace plasticity
