#include "smoothcert/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "smoothcert/error.hpp"

namespace smoothcert::stats {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <std::size_t N>
double horner(const double (&c)[N], double x) {
  double acc = c[N - 1];
  for (std::size_t i = N - 1; i-- > 0;) acc = acc * x + c[i];
  return acc;
}

// Wichura, Algorithm AS 241 (PPND16).
double ppnd16(double p) {
  static constexpr double a[] = {3.387132872796366608,   133.14166789178437745, 1971.5909503065514427,
                                 13731.693765509461125,  45921.953931549871457, 67265.770927008700853,
                                 33430.575583588128105,  2509.0809287301226727};
  static constexpr double b[] = {1.0,                   42.313330701600911252, 687.1870074920579083,
                                 5394.1960214247511077, 21213.794301586595867, 39307.89580009271061,
                                 28729.085735721942674, 5226.495278852545925};
  static constexpr double c[] = {1.42343711074968357734,  4.6303378461565452959,    5.7694972214606914055,
                                 3.64784832476320460504,  1.27045825245236838258,   0.24178072517745061177,
                                 0.0227238449892691845833, 7.7454501427834140764e-4};
  static constexpr double d[] = {1.0,
                                 2.05319162663775882187,
                                 1.6763848301838038494,
                                 0.68976733498510000455,
                                 0.14810397642748007459,
                                 0.0151986665636164571966,
                                 5.475938084995344946e-4,
                                 1.05075007164441684324e-9};
  static constexpr double e[] = {6.6579046435011037772,    5.4637849111641143699,     1.7848265399172913358,
                                 0.29656057182850489123,   0.026532189526576123093,   0.0012426609473880784386,
                                 2.71155556874348757815e-5, 2.01033439929228813265e-7};
  static constexpr double f[] = {1.0,
                                 0.59983220655588793769,
                                 0.13692988092273580531,
                                 0.0148753612908506148525,
                                 7.868691311456132591e-4,
                                 1.8463183175100546818e-5,
                                 1.4215117583164458887e-7,
                                 2.04426310338993978564e-15};

  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q * horner(a, r) / horner(b, r);
  }
  double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = horner(c, r) / horner(d, r);
  } else {
    r -= 5.0;
    val = horner(e, r) / horner(f, r);
  }
  return q < 0.0 ? -val : val;
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double x, double a, double b) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

double log_choose(std::uint64_t n, std::uint64_t k) {
  const auto nn = static_cast<double>(n);
  const auto kk = static_cast<double>(k);
  return std::lgamma(nn + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(nn - kk + 1.0);
}

}  // namespace

void ConfidenceParams::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must lie in (0,1)");
  if (n == 0) throw InvalidInput("confidence bound needs at least one trial");
  if (successes > n) throw InvalidInput("successes exceed trials");
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (std::isnan(p) || p < 0.0 || p > 1.0) throw InvalidInput("normal_quantile needs p in [0,1]");
  if (p == 0.0) return -kInf;
  if (p == 1.0) return kInf;
  double x = ppnd16(p);
  // One Halley step against erfc. Working on the smaller tail keeps the
  // residual free of cancellation near p -> 1.
  const double tail = x < 0.0 ? p : 1.0 - p;
  const double ax = -std::abs(x);
  const double err = normal_cdf(ax) - tail;
  const double pdf = std::exp(-0.5 * ax * ax) / std::sqrt(2.0 * std::numbers::pi);
  if (pdf > 0.0) {
    const double u = err / pdf;
    const double step = u / (1.0 + 0.5 * ax * u);
    x = x < 0.0 ? ax - step : -(ax - step);
  }
  return x;
}

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw InvalidInput("incomplete beta needs a, b > 0");
  if (std::isnan(x) || x < 0.0 || x > 1.0) throw InvalidInput("incomplete beta needs x in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(x, a, b) / a;
  return 1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b;
}

double beta_quantile(double q, double a, double b) {
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidInput("beta quantile needs q in [0,1]");
  if (q == 0.0) return 0.0;
  if (q == 1.0) return 1.0;
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (regularized_incomplete_beta(mid, a, b) < q) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double lower_conf_bound(const ConfidenceParams& params) {
  params.validate();
  if (params.successes == 0) return 0.0;
  const auto k = static_cast<double>(params.successes);
  const auto n = static_cast<double>(params.n);
  return beta_quantile(params.alpha, k, n - k + 1.0);
}

double upper_conf_bound(const ConfidenceParams& params) {
  params.validate();
  if (params.successes == params.n) return 1.0;
  const auto k = static_cast<double>(params.successes);
  const auto n = static_cast<double>(params.n);
  return beta_quantile(1.0 - params.alpha, k + 1.0, n - k);
}

double binomial_two_sided_p(std::uint64_t successes_top, std::uint64_t trials) {
  if (successes_top > trials) throw InvalidInput("successes exceed trials");
  if (trials == 0 || 2 * successes_top == trials) return 1.0;
  // Null p = 1/2 is symmetric, so the two-sided p-value is twice the tail
  // beyond the more extreme of k and n-k.
  const std::uint64_t m = std::max(successes_top, trials - successes_top);
  const double log_half_n = -static_cast<double>(trials) * std::numbers::ln2;
  double tail = 0.0;
  for (std::uint64_t j = trials + 1; j-- > m;) {
    tail += std::exp(log_choose(trials, j) + log_half_n);
  }
  return std::min(1.0, 2.0 * tail);
}

double ensemble_failure_bound(std::uint64_t k, double alpha) {
  if (k == 0) throw InvalidInput("ensemble size must be at least 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must lie in (0,1)");
  const auto kk = static_cast<double>(k);
  const double log_bound = -kk * alpha + 0.5 * kk * std::log(2.0 * std::numbers::e * alpha);
  return std::min(1.0, std::exp(log_bound));
}

}  // namespace smoothcert::stats
