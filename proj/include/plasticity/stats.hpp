#pragma once

// Exact binomial statistics used by the Monte Carlo cross-validation.

#include <cmath>
#include <utility>

namespace plasticity {

inline double log_binomial_coeff(long n, long k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

// P(X <= x) for X ~ Binomial(n, p).
inline double binomial_cdf(long x, long n, double p) {
  if (x < 0) return 0.0;
  if (x >= n) return 1.0;
  if (p <= 0.0) return 1.0;
  if (p >= 1.0) return 0.0;
  const double lp = std::log(p), lq = std::log1p(-p);
  double sum = 0.0;
  for (long k = 0; k <= x; ++k)
    sum += std::exp(log_binomial_coeff(n, k) + k * lp + (n - k) * lq);
  return sum < 1.0 ? sum : 1.0;
}

// Smallest x with P(X <= x) >= q.
inline long binomial_quantile(long n, double p, double q) {
  if (p <= 0.0) return 0;
  if (p >= 1.0) return n;
  const double lp = std::log(p), lq = std::log1p(-p);
  double cdf = 0.0;
  for (long k = 0; k <= n; ++k) {
    cdf += std::exp(log_binomial_coeff(n, k) + k * lp + (n - k) * lq);
    if (cdf >= q) return k;
  }
  return n;
}

// Exact (Clopper-Pearson) two-sided confidence interval for a binomial
// proportion, via bisection on the monotone tail probabilities.
inline std::pair<double, double> clopper_pearson(long successes, long n, double alpha = 0.05) {
  const double half = alpha / 2.0;
  double lo = 0.0, hi = 1.0;
  if (successes > 0) {
    // smallest p with P(X >= successes | p) >= alpha/2
    double a = 0.0, b = 1.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (a + b);
      const double upper_tail = 1.0 - binomial_cdf(successes - 1, n, mid);
      (upper_tail >= half ? b : a) = mid;
    }
    lo = 0.5 * (a + b);
  }
  if (successes < n) {
    // largest p with P(X <= successes | p) >= alpha/2
    double a = 0.0, b = 1.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (a + b);
      const double lower_tail = binomial_cdf(successes, n, mid);
      (lower_tail >= half ? a : b) = mid;
    }
    hi = 0.5 * (a + b);
  }
  return {lo, hi};
}

}  // namespace plasticity
