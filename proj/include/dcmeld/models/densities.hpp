#pragma once

#include "dcmeld/random.hpp"
#include "dcmeld/types.hpp"

#include <cmath>
#include <numbers>

// Scalar log-densities shared by the built-in models. Out-of-support
// arguments return -inf rather than throwing.
namespace dcmeld::dens {

inline double normal(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// N(mean, sd^2) truncated to [lo, hi], normalised.
inline double truncated_normal(double x, double mean, double sd, double lo, double hi) {
  if (!(x >= lo && x <= hi)) return kNegInf;
  const double mass = std_normal_cdf((hi - mean) / sd) - std_normal_cdf((lo - mean) / sd);
  return normal(x, mean, sd) - std::log(mass);
}

inline double sample_truncated_normal(RandomStream& rng, double mean, double sd, double lo, double hi) {
  for (;;) {
    const double x = rng.normal(mean, sd);
    if (x >= lo && x <= hi) return x;
  }
}

inline double uniform(double x, double lo, double hi) {
  return (x >= lo && x <= hi) ? -std::log(hi - lo) : kNegInf;
}

inline double log_factorial(double k) { return std::lgamma(k + 1.0); }

/// Poisson log-pmf; a zero rate puts all mass on zero.
inline double poisson(double k, double rate) {
  if (k < 0 || k != std::floor(k)) return kNegInf;
  if (rate == 0.0) return k == 0.0 ? 0.0 : kNegInf;
  if (!(rate > 0.0)) return kNegInf;
  return k * std::log(rate) - rate - log_factorial(k);
}

inline double binomial(double k, double n, double p) {
  if (k < 0 || k > n || k != std::floor(k) || n != std::floor(n)) return kNegInf;
  double out = log_factorial(n) - log_factorial(k) - log_factorial(n - k);
  if (k > 0) {
    if (p <= 0.0) return kNegInf;
    out += k * std::log(p);
  }
  if (n - k > 0) {
    if (p >= 1.0) return kNegInf;
    out += (n - k) * std::log1p(-p);
  }
  return out;
}

inline double inv_logit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace dcmeld::dens
