#pragma once

#include <cstdint>

namespace smoothcert::stats {

/// Inputs of a one-sided binomial confidence bound.
struct ConfidenceParams {
  double alpha = 0.001;
  std::uint64_t n = 0;
  std::uint64_t successes = 0;

  void validate() const;
};

double normal_cdf(double x);

/// Inverse standard normal CDF. Returns -inf at p == 0 and +inf at p == 1;
/// throws InvalidInput outside [0,1].
double normal_quantile(double p);

/// Regularized incomplete beta I_x(a, b), a, b > 0, x in [0,1].
double regularized_incomplete_beta(double x, double a, double b);

/// q-quantile of Beta(a, b) by bisection on regularized_incomplete_beta.
double beta_quantile(double q, double a, double b);

/// One-sided Clopper-Pearson lower bound: the alpha-quantile of
/// Beta(k, n-k+1), or 0 when k == 0. Covers the true p with probability
/// at least 1 - alpha.
double lower_conf_bound(const ConfidenceParams& params);

/// One-sided Clopper-Pearson upper bound: the (1-alpha)-quantile of
/// Beta(k+1, n-k), or 1 when k == n.
double upper_conf_bound(const ConfidenceParams& params);

/// Exact two-sided binomial test of `successes_top` out of `trials` against p = 1/2.
double binomial_two_sided_p(std::uint64_t successes_top, std::uint64_t trials);

/// Chernoff bound on the probability that at least half of k independent
/// sub-classifiers, each failing with probability alpha, fail together:
/// min(1, e^(-k alpha) (2 e alpha)^(k/2)).
double ensemble_failure_bound(std::uint64_t k, double alpha);

}  // namespace smoothcert::stats
