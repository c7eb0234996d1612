#include "latnr/variance.hpp"

#include <algorithm>
#include <cmath>

#include "latnr/calibration.hpp"
#include "latnr/errors.hpp"
#include "latnr/linalg.hpp"
#include "latnr/parallel.hpp"

namespace latnr {

namespace {

// Everything indexed by sample position k; scale1/scale2 carry the
// benchmark-vector scales pi*p and pi*p*q, so z = scale * (1, theta)'.
struct PhaseData {
  std::vector<double> w1;
  std::vector<double> theta;
  std::vector<double> scale1;
  std::vector<double> scale2;
  std::vector<std::size_t> respondents;
  std::vector<std::size_t> item_respondents;
};

std::array<double, 2> weighted_total(const std::vector<std::size_t>& members,
                                     const std::vector<double>& weights,
                                     const PhaseData& data, const std::vector<double>& scale) {
  std::array<double, 2> total{0.0, 0.0};
  for (std::size_t k : members) {
    total[0] += weights[k] * scale[k];
    total[1] += weights[k] * scale[k] * data.theta[k];
  }
  return total;
}

// Intercept-only calibration: with the slope pinned, the weighted total is
// strictly decreasing in the intercept and spans (base total, infinity), so
// bisection always lands. Matches only the first benchmark component.
CalibrationResult calibrate_intercept_only(const CalibrationSpec& spec, double slope,
                                           double start0) {
  auto total_at = [&](double b0) {
    double total = 0.0;
    for (std::size_t k = 0; k < spec.base_weights.size(); ++k) {
      total += spec.base_weights[k] * spec.scale[k] *
               calibration_adjustment(spec.theta[k], b0, slope);
    }
    return total;
  };
  double base_total = 0.0;
  for (std::size_t k = 0; k < spec.base_weights.size(); ++k) {
    base_total += spec.base_weights[k] * spec.scale[k];
  }
  if (!(spec.target[0] > base_total)) {
    throw ConvergenceError("total benchmark below the attainable range");
  }
  double lo = start0;
  double hi = start0;
  for (int expand = 0; expand < 200 && total_at(lo) < spec.target[0]; ++expand) lo -= 1.0;
  for (int expand = 0; expand < 2000 && total_at(hi) > spec.target[0]; ++expand) hi += 1.0;
  if (total_at(lo) < spec.target[0] || total_at(hi) > spec.target[0]) {
    throw ConvergenceError("total benchmark not bracketed");
  }
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (total_at(mid) > spec.target[0]) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  CalibrationResult result;
  result.alpha0 = 0.5 * (lo + hi);
  result.alpha1 = slope;
  result.weights.resize(spec.base_weights.size());
  for (std::size_t k = 0; k < spec.base_weights.size(); ++k) {
    result.weights[k] =
        spec.base_weights[k] * calibration_adjustment(spec.theta[k], result.alpha0, slope);
  }
  result.residual_norm = std::abs(total_at(result.alpha0) - spec.target[0]);
  return result;
}

}  // namespace

ReplicateWeights jackknife_replicates(const SurveySample& sample, const LatentFit& fit,
                                      const PropensityModel& model, std::size_t item,
                                      const JackknifeOptions& options) {
  const std::size_t n = sample.n;
  if (model.covariate.size() != n) {
    throw ValidationError("propensity model does not cover the sample");
  }
  if (item >= sample.m) throw ValidationError("item index out of range");
  if (n < 2) throw ValidationError("need at least two sampled units");

  PhaseData data;
  data.w1.resize(n);
  data.theta = model.covariate;
  data.scale1.resize(n);
  data.scale2.assign(n, 0.0);
  const double beta_j0 = fit.params.beta0[item];
  const double beta_j1 = fit.params.beta1[item];

  std::vector<std::size_t> all_units(n);
  for (std::size_t k = 0; k < n; ++k) {
    all_units[k] = k;
    data.w1[k] = 1.0 / sample.pi[k];
    const double p_hat = 1.0 / calibration_adjustment(data.theta[k], model.alpha0, model.alpha1);
    data.scale1[k] = sample.pi[k] * p_hat;
    if (sample.unit_respondent[k]) {
      data.respondents.push_back(k);
      const double q_hat = 1.0 / calibration_adjustment(data.theta[k], beta_j0, beta_j1);
      data.scale2[k] = data.scale1[k] * q_hat;
      if (sample.present(k, item)) data.item_respondents.push_back(k);
    }
  }
  if (data.item_respondents.empty()) {
    throw ValidationError("no item respondents; replicate weights undefined");
  }

  auto make_spec = [&](const std::vector<std::size_t>& members,
                       const std::vector<double>& base, const std::vector<double>& scale,
                       const std::array<double, 2>& target) {
    CalibrationSpec spec;
    spec.base_weights.reserve(members.size());
    spec.theta.reserve(members.size());
    spec.scale.reserve(members.size());
    for (std::size_t k : members) {
      spec.base_weights.push_back(base[k]);
      spec.theta.push_back(data.theta[k]);
      spec.scale.push_back(scale[k]);
    }
    spec.target = target;
    return spec;
  };

  // Full-sample anchors: re-solve both phases once so every replicate can
  // warm start from a consistent point. When an anchor's benchmark is out of
  // reach (saturated adjustments can do that), fall back to the model
  // coefficients and let each replicate succeed or flag on its own.
  const std::array<double, 2> z1_hat = weighted_total(all_units, data.w1, data, data.scale1);
  double start2_a0 = model.alpha0;
  double start2_a1 = model.alpha1;
  std::vector<double> w2(n, 0.0);
  try {
    const CalibrationResult anchor2 = gencalib_solve(
        make_spec(data.respondents, data.w1, data.scale1, z1_hat), model.alpha0, model.alpha1);
    start2_a0 = anchor2.alpha0;
    start2_a1 = anchor2.alpha1;
    for (std::size_t i = 0; i < data.respondents.size(); ++i) {
      w2[data.respondents[i]] = anchor2.weights[i];
    }
  } catch (const Error&) {
    for (std::size_t k : data.respondents) {
      w2[k] = data.w1[k] * calibration_adjustment(data.theta[k], model.alpha0, model.alpha1);
    }
  }

  const std::array<double, 2> z2_hat = weighted_total(data.respondents, w2, data, data.scale2);
  double start3_b0 = beta_j0;
  double start3_b1 = beta_j1;
  try {
    const CalibrationResult anchor3 = gencalib_solve(
        make_spec(data.item_respondents, w2, data.scale2, z2_hat), beta_j0, beta_j1);
    start3_b0 = anchor3.alpha0;
    start3_b1 = anchor3.alpha1;
  } catch (const Error&) {
  }

  ReplicateWeights result;
  result.replicate_count = n;
  result.c.assign(n, static_cast<double>(n - 1) / static_cast<double>(n));
  result.item_respondent_rows = data.item_respondents;
  result.w3.assign(n * data.item_respondents.size(), 0.0);
  result.failed.assign(n, 0);
  const double inflation = static_cast<double>(n) / static_cast<double>(n - 1);

  std::vector<double> worst_residual(n, 0.0);
  std::vector<std::uint8_t> partial(n, 0);
  auto one_replicate = [&](std::size_t l) {
    try {
      // Step 1: delete-one design weights, recalibrated unit-nonresponse
      // adjustment against the phase-one benchmark.
      std::vector<double> w1_rep(n);
      for (std::size_t k = 0; k < n; ++k) {
        w1_rep[k] = (k == l) ? 0.0 : data.w1[k] * inflation;
      }
      const std::array<double, 2> target1 =
          weighted_total(all_units, w1_rep, data, data.scale1);
      const CalibrationResult rep2 =
          gencalib_solve(make_spec(data.respondents, w1_rep, data.scale1, target1),
                         start2_a0, start2_a1);

      // Step 2: recalibrate the item-nonresponse adjustment, treating the
      // item model as a plain logistic in theta-hat. Deleting a low-score
      // unit can push the two-component benchmark out of reach; in that case
      // match the total alone with the slope pinned at the anchor.
      std::vector<double> w2_rep(n, 0.0);
      for (std::size_t i = 0; i < data.respondents.size(); ++i) {
        w2_rep[data.respondents[i]] = rep2.weights[i];
      }
      const std::array<double, 2> target2 =
          weighted_total(data.respondents, w2_rep, data, data.scale2);
      const CalibrationSpec spec3 =
          make_spec(data.item_respondents, w2_rep, data.scale2, target2);
      CalibrationResult rep3;
      double residual3 = 0.0;
      try {
        rep3 = gencalib_solve(spec3, start3_b0, start3_b1);
        residual3 = rep3.residual_norm;
      } catch (const Error&) {
        rep3 = calibrate_intercept_only(spec3, start3_b1, start3_b0);
        partial[l] = 1;
        residual3 = 0.0;  // judged on the matched component only
      }

      double* row = result.w3.data() + l * data.item_respondents.size();
      for (std::size_t i = 0; i < data.item_respondents.size(); ++i) row[i] = rep3.weights[i];

      const double norm1 = std::max(
          1.0, std::sqrt(target1[0] * target1[0] + target1[1] * target1[1]));
      const double norm2 = std::max(
          1.0, std::sqrt(target2[0] * target2[0] + target2[1] * target2[1]));
      worst_residual[l] = std::max(rep2.residual_norm / norm1, residual3 / norm2);
    } catch (const Error&) {
      result.failed[l] = 1;
    }
  };
  if (options.parallel) {
    parallel_for(n, one_replicate);
  } else {
    serial_for(n, one_replicate);
  }

  for (std::size_t l = 0; l < n; ++l) {
    result.failures += result.failed[l];
    result.partial += partial[l];
    result.max_relative_residual = std::max(result.max_relative_residual, worst_residual[l]);
  }
  if (static_cast<double>(result.failures) >
      options.max_failure_rate * static_cast<double>(n)) {
    throw ConvergenceError("too many jackknife replicates failed (" +
                           std::to_string(result.failures) + " of " + std::to_string(n) + ")");
  }
  return result;
}

ReplicateWeights jackknife_replicates_fixed(const SurveySample& sample,
                                            std::span<const double> p,
                                            std::span<const double> q, std::size_t item,
                                            const JackknifeOptions& options) {
  (void)options;
  const std::size_t n = sample.n;
  if (p.size() != n || q.size() != n) {
    throw ValidationError("probability vectors do not cover the sample");
  }
  ReplicateWeights result;
  result.replicate_count = n;
  result.c.assign(n, static_cast<double>(n - 1) / static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    if (sample.unit_respondent[k] && sample.present(k, item)) {
      result.item_respondent_rows.push_back(k);
    }
  }
  result.failed.assign(n, 0);
  result.w3.assign(n * result.item_respondent_rows.size(), 0.0);
  const double inflation = static_cast<double>(n) / static_cast<double>(n - 1);
  for (std::size_t l = 0; l < n; ++l) {
    double* row = result.w3.data() + l * result.item_respondent_rows.size();
    for (std::size_t i = 0; i < result.item_respondent_rows.size(); ++i) {
      const std::size_t k = result.item_respondent_rows[i];
      if (k == l) continue;
      if (!(p[k] > 0.0 && q[k] > 0.0)) {
        throw ValidationError("non-positive probability in fixed replicate weights");
      }
      row[i] = inflation / (sample.pi[k] * p[k] * q[k]);
    }
  }
  return result;
}

double replicate_variance(const ReplicateWeights& replicates, const SurveySample& sample,
                          std::size_t item, double point_estimate) {
  const std::size_t L = replicates.replicate_count;
  const std::size_t usable = L - replicates.failures;
  if (usable == 0) throw ValidationError("no usable replicates");
  const double inflation = static_cast<double>(L) / static_cast<double>(usable);
  double variance = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    if (replicates.failed[l]) continue;
    const double* row = replicates.w3.data() + l * replicates.item_respondent_rows.size();
    double estimate = 0.0;
    for (std::size_t i = 0; i < replicates.item_respondent_rows.size(); ++i) {
      estimate += row[i] * sample.value(replicates.item_respondent_rows[i], item);
    }
    const double dev = estimate - point_estimate;
    variance += replicates.c[l] * inflation * dev * dev;
  }
  return variance;
}

Interval confidence_interval(double estimate, double variance, double level) {
  if (variance < 0.0) throw ValidationError("negative variance");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("level outside (0,1)");
  const double z = normal_quantile(0.5 + level / 2.0);
  const double half_width = z * std::sqrt(variance);
  return Interval{estimate - half_width, estimate + half_width};
}

}  // namespace latnr
