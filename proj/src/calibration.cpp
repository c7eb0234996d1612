#include "latnr/calibration.hpp"

#include <cmath>
#include <string>

#include "latnr/errors.hpp"
#include "latnr/linalg.hpp"

namespace latnr {

double calibration_adjustment(double theta, double alpha0, double alpha1) {
  const double u = alpha0 + alpha1 * theta;
  return 1.0 + std::exp(std::min(-u, 300.0));
}

namespace {

// The calibration equations say the gradient of the concave map
//   a -> sum_k b_k s_k (u_k - exp(-u_k)),   u_k = a0 + a1 t_k,
// equals the target, i.e. they are the stationarity conditions of the convex
//   V(a) = target . a - sum_k b_k s_k (u_k - exp(-u_k)),
// whose gradient is -residual and whose Hessian sum_k b_k s_k e^{-u} x x'
// is positive semidefinite. Newton descent on V therefore converges from
// any start whenever the benchmark is reachable.
struct Potential {
  const CalibrationSpec& spec;

  double value(double a0, double a1) const {
    double v = spec.target[0] * a0 + spec.target[1] * a1;
    for (std::size_t k = 0; k < spec.base_weights.size(); ++k) {
      const double b = spec.base_weights[k] * spec.scale[k];
      if (b == 0.0) continue;
      const double u = a0 + a1 * spec.theta[k];
      v -= b * (u - std::exp(std::min(-u, 300.0)));
    }
    return v;
  }

  // Writes the calibration residual (negated V-gradient) and the V-Hessian.
  void residual_hessian(double a0, double a1, double residual[2], double hess[2][2]) const {
    residual[0] = -spec.target[0];
    residual[1] = -spec.target[1];
    hess[0][0] = hess[0][1] = hess[1][0] = hess[1][1] = 0.0;
    for (std::size_t k = 0; k < spec.base_weights.size(); ++k) {
      const double b = spec.base_weights[k] * spec.scale[k];
      if (b == 0.0) continue;
      const double t = spec.theta[k];
      const double u = a0 + a1 * t;
      const double e = std::exp(std::min(-u, 300.0));
      const double f = 1.0 + e;
      residual[0] += b * f;
      residual[1] += b * f * t;
      hess[0][0] += b * e;
      hess[0][1] += b * e * t;
      hess[1][1] += b * e * t * t;
    }
    hess[1][0] = hess[0][1];
  }
};

}  // namespace

CalibrationResult gencalib_solve(const CalibrationSpec& spec, double start0, double start1) {
  const std::size_t n = spec.base_weights.size();
  if (spec.theta.size() != n || spec.scale.size() != n) {
    throw ValidationError("calibration spec fields differ in length");
  }
  const double target_scale =
      std::max(1.0, std::sqrt(spec.target[0] * spec.target[0] + spec.target[1] * spec.target[1]));
  const double tol = 1e-10 * target_scale;

  const Potential potential{spec};
  double a0 = start0;
  double a1 = start1;
  double value = potential.value(a0, a1);
  double ridge = 0.0;

  for (std::size_t iter = 0; iter <= 200; ++iter) {
    double residual[2];
    double hess[2][2];
    potential.residual_hessian(a0, a1, residual, hess);
    const double res_norm = std::sqrt(residual[0] * residual[0] + residual[1] * residual[1]);
    if (res_norm <= tol) {
      CalibrationResult result;
      result.alpha0 = a0;
      result.alpha1 = a1;
      result.iterations = iter;
      result.residual_norm = res_norm;
      result.weights.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        result.weights[k] = spec.base_weights[k] * calibration_adjustment(spec.theta[k], a0, a1);
      }
      return result;
    }
    if (iter == 200) {
      throw ConvergenceError("calibration did not reach tolerance in 200 iterations (residual " +
                             std::to_string(res_norm) + ")");
    }

    const double hess_scale =
        std::max({std::abs(hess[0][0]), std::abs(hess[0][1]), std::abs(hess[1][1])});
    if (hess_scale == 0.0) {
      // The adjustment saturated at its lower bound everywhere and the
      // benchmark is still unmet: it is unreachable.
      throw ConvergenceError("calibration benchmark unreachable (residual " +
                             std::to_string(res_norm) + ")");
    }

    // Newton step on V: hess * step = residual (the V-gradient is -residual).
    // A saturated adjustment leaves the Hessian nearly rank one; ridge it
    // just enough to keep the step well defined.
    double step[2];
    int escalations = 0;
    for (;;) {
      const double damped[2][2] = {{hess[0][0] + ridge * hess_scale, hess[0][1]},
                                   {hess[1][0], hess[1][1] + ridge * hess_scale}};
      if (solve_2x2(damped, residual, step)) break;
      ridge = std::max(ridge * 10.0, 1e-12);
      if (++escalations > 40) {
        const double det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
        throw NumericError("singular calibration Hessian (|det| = " + std::to_string(det) +
                           ", scale = " + std::to_string(hess_scale) + ")");
      }
    }

    // Backtracking line search. Near the solution the potential's decrease
    // drops below its own rounding noise while the Newton step still
    // contracts the residual, so a residual-norm decrease also accepts.
    const double slope = -(residual[0] * step[0] + residual[1] * step[1]);  // dV, negative
    double stride = 1.0;
    bool moved = false;
    for (int halving = 0; halving < 60; ++halving) {
      const double cand0 = a0 + stride * step[0];
      const double cand1 = a1 + stride * step[1];
      double cand_res[2];
      double cand_hess[2][2];
      potential.residual_hessian(cand0, cand1, cand_res, cand_hess);
      const double cand_norm =
          std::sqrt(cand_res[0] * cand_res[0] + cand_res[1] * cand_res[1]);
      const double cand_value = potential.value(cand0, cand1);
      if (cand_norm < res_norm || cand_value <= value + 1e-4 * stride * slope) {
        a0 = cand0;
        a1 = cand1;
        value = cand_value;
        moved = true;
        break;
      }
      stride *= 0.5;
    }
    if (moved) {
      ridge *= 0.25;
      if (ridge < 1e-12) ridge = 0.0;
    } else {
      // Flat to rounding along this direction; stiffen and retry.
      ridge = std::max(ridge * 10.0, 1e-10);
    }
  }
  throw ConvergenceError("unreachable");
}

}  // namespace latnr
