#pragma once

#include <cmath>

#include "planrl/rng.hpp"

namespace planrl {

/// Digamma via upward recurrence into the asymptotic series (abs err < 1e-12
/// for x > 0).
inline double digamma(double x) {
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  double inv = 1.0 / x;
  double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
  return result;
}

/// Trigamma (derivative of digamma), same recurrence scheme.
inline double trigamma(double x) {
  double result = 0.0;
  while (x < 6.0) {
    result += 1.0 / (x * x);
    x += 1.0;
  }
  double inv = 1.0 / x;
  double inv2 = inv * inv;
  result += inv * (1.0 + 0.5 * inv +
                   inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0))));
  return result;
}

inline double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// ---------------------------------------------------------------------------
// Beta distribution statistics (alpha, beta >= 1 in this project).
// ---------------------------------------------------------------------------

constexpr double kBetaLogProbEps = 1e-6;  // clamp for log_prob at the interval ends

inline double beta_mean(double a, double b) { return a / (a + b); }

/// Unimodal mode for a + b > 2; the boundary case (a = b = 1, uniform)
/// returns the interval center.
inline double beta_mode(double a, double b) {
  if (a + b > 2.0) return (a - 1.0) / (a + b - 2.0);
  return 0.5;
}

inline double beta_log_prob(double a, double b, double x) {
  x = std::min(1.0 - kBetaLogProbEps, std::max(kBetaLogProbEps, x));
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta_fn(a, b);
}

/// Closed-form differential entropy:
/// ln B(a,b) - (a-1) psi(a) - (b-1) psi(b) + (a+b-2) psi(a+b).
inline double beta_entropy(double a, double b) {
  return log_beta_fn(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) +
         (a + b - 2.0) * digamma(a + b);
}

inline double beta_sample(RngStream& rng, double a, double b) { return rng.beta(a, b); }

}  // namespace planrl
