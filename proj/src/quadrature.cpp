#include "latnr/quadrature.hpp"

#include <cmath>

#include "latnr/errors.hpp"

namespace latnr {

namespace {

// Nodes and weights for the physicists' Gauss-Hermite rule (weight exp(-x^2)),
// found by Newton iteration on the recurrence-evaluated Hermite polynomial.
void gauss_hermite_raw(std::size_t n, std::vector<double>& x, std::vector<double>& w) {
  constexpr double kTol = 1e-14;
  constexpr int kMaxIter = 200;
  const double pi_quarter_root = 0.7511255444649425;  // pi^(-1/4)

  x.assign(n, 0.0);
  w.assign(n, 0.0);
  const std::size_t half = (n + 1) / 2;
  double z = 0.0;
  for (std::size_t i = 0; i < half; ++i) {
    // Initial guesses from the classical asymptotic expansions.
    if (i == 0) {
      z = std::sqrt(static_cast<double>(2 * n + 1)) -
          1.85575 * std::pow(static_cast<double>(2 * n + 1), -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x[1];
    } else {
      z = 2.0 * z - x[i - 2];
    }
    double derivative = 0.0;
    int iter = 0;
    for (; iter < kMaxIter; ++iter) {
      double p1 = pi_quarter_root;
      double p2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / static_cast<double>(j + 1)) * p2 -
             std::sqrt(static_cast<double>(j) / static_cast<double>(j + 1)) * p3;
      }
      derivative = std::sqrt(static_cast<double>(2 * n)) * p2;
      const double z_prev = z;
      z = z_prev - p1 / derivative;
      if (std::abs(z - z_prev) <= kTol) break;
    }
    if (iter >= kMaxIter) throw ConvergenceError("Gauss-Hermite node iteration failed");
    x[i] = z;
    x[n - 1 - i] = -z;
    w[i] = 2.0 / (derivative * derivative);
    w[n - 1 - i] = w[i];
  }
}

}  // namespace

QuadratureRule gauss_hermite_normal(std::size_t points) {
  if (points < 2) throw ValidationError("quadrature needs at least 2 points");
  std::vector<double> x, w;
  gauss_hermite_raw(points, x, w);

  QuadratureRule rule;
  rule.nodes.resize(points);
  rule.weights.resize(points);
  const double sqrt2 = std::sqrt(2.0);
  double total = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    // Raw nodes descend; store ascending for readability of dumps.
    const std::size_t j = points - 1 - i;
    rule.nodes[i] = sqrt2 * x[j];
    rule.weights[i] = w[j];
    total += w[j];
  }
  // Absorb the normal density: weights w/sqrt(pi) sum to one analytically;
  // normalize to make the sum exact in floating point.
  for (double& wi : rule.weights) wi /= total;

  // The Newton root-finding loses roots for very large rules; verify the
  // second moment of the standard normal rather than return a junk rule.
  double second_moment = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    if (!(rule.weights[i] >= 0.0)) throw NumericError("negative quadrature weight");
    if (i > 0 && !(rule.nodes[i] > rule.nodes[i - 1])) {
      throw NumericError("quadrature nodes are not strictly increasing; rule of " +
                         std::to_string(points) + " points is not supported");
    }
    second_moment += rule.weights[i] * rule.nodes[i] * rule.nodes[i];
  }
  if (std::abs(second_moment - 1.0) > 1e-8) {
    throw NumericError("quadrature rule failed self-check at " + std::to_string(points) +
                       " points");
  }
  return rule;
}

}  // namespace latnr
