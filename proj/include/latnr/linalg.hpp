#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace latnr {

// Overflow-safe logistic function.
inline double logistic(double eta) {
  if (eta >= 0.0) {
    return 1.0 / (1.0 + std::exp(-eta));
  }
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow.
inline double softplus(double eta) {
  if (eta > 0.0) return eta + std::log1p(std::exp(-eta));
  return std::log1p(std::exp(eta));
}

// Solves a 2x2 linear system a*x = b in place; returns false when the
// determinant is numerically zero relative to the matrix scale.
bool solve_2x2(const double a[2][2], const double b[2], double x[2]);

// Dense symmetric-positive-definite Cholesky, lower factor, row-major.
// Throws NumericError when the matrix is not positive definite.
std::vector<double> cholesky_lower(std::span<const double> matrix, std::size_t n);

// Gaussian elimination with partial pivoting for small dense systems;
// a is row-major n*n and is destroyed. Throws NumericError on singularity.
void solve_dense(std::vector<double>& a, std::vector<double>& b, std::size_t n);

// Largest eigenvalue of a symmetric matrix (row-major n*n) by cyclic Jacobi.
double largest_eigenvalue_symmetric(std::vector<double> matrix, std::size_t n);

// Standard normal quantile (Acklam's rational approximation, |err| < 1.2e-9).
double normal_quantile(double p);

// --- small statistics helpers -------------------------------------------

double mean(std::span<const double> values);

// Unbiased sample variance (n-1 denominator); zero for n < 2.
double sample_variance(std::span<const double> values);

// Pearson correlation; returns NaN when either argument is constant.
double pearson_correlation(std::span<const double> a, std::span<const double> b);

}  // namespace latnr
