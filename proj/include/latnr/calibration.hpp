#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace latnr {

// Logistic-distance adjustment used by the generalized calibration:
// F(theta; a0, a1) = 1 + exp(-(a0 + a1 * theta)), the reciprocal of the
// logistic response probability.
double calibration_adjustment(double theta, double alpha0, double alpha1);

// One nonlinear calibration problem: find (alpha0, alpha1) so that
//   sum_k base[k] * F(theta[k]; alpha) * z_k = target,
// where the benchmark vectors have the two-phase form z_k = scale[k] *
// (1, theta[k])'. That form makes the residual the gradient of a strictly
// convex potential, which the solver exploits.
struct CalibrationSpec {
  std::vector<double> base_weights;  // nonnegative; zero drops a unit
  std::vector<double> theta;
  std::vector<double> scale;         // strictly positive
  std::array<double, 2> target{0.0, 0.0};

  std::array<double, 2> z(std::size_t k) const {
    return {scale[k], scale[k] * theta[k]};
  }
};

struct CalibrationResult {
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  std::vector<double> weights;  // base * F(theta; alpha)
  double residual_norm = 0.0;   // Euclidean norm of the final residual
  std::size_t iterations = 0;
};

// Newton descent on the convex dual potential, line-searched, from the given
// start. Converges to residual norm <= 1e-10 * max(1, |target|); throws
// NumericError on a singular Hessian (with a condition diagnostic) and
// ConvergenceError after 200 iterations (unreachable benchmark).
CalibrationResult gencalib_solve(const CalibrationSpec& spec, double start0 = 0.0,
                                 double start1 = 0.0);

}  // namespace latnr
