#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "latnr/propensity.hpp"
#include "latnr/survey_data.hpp"
#include "latnr/two_pl.hpp"

namespace latnr {

// Delete-one jackknife weights for the three-phase estimator of one item.
// Row l holds the phase-three weights of the item respondents when unit l
// is removed; failed replicates are flagged and skipped by the variance.
struct ReplicateWeights {
  std::size_t replicate_count = 0;                 // L = n
  std::vector<double> c;                           // per-replicate factor
  std::vector<std::size_t> item_respondent_rows;   // r_j as sample indices
  std::vector<double> w3;                          // row-major L x |r_j|
  std::vector<std::uint8_t> failed;
  std::size_t failures = 0;
  // Replicates whose two-component benchmark was unreachable and fell back
  // to matching the total alone (slope pinned at the full-sample anchor).
  std::size_t partial = 0;
  double max_relative_residual = 0.0;  // worst full-calibration residual across replicates
};

struct JackknifeOptions {
  bool parallel = true;
  double max_failure_rate = 0.05;
};

// Replicate weights with the phase-two and phase-three adjustments
// recalibrated per replicate: each deleted unit yields new benchmarks
// z1-hat and z2-hat, and the logistic-distance parameters are re-solved so
// the calibration constraints hold exactly. Theta-hat stays fixed across
// replicates.
ReplicateWeights jackknife_replicates(const SurveySample& sample, const LatentFit& fit,
                                      const PropensityModel& model, std::size_t item,
                                      const JackknifeOptions& options = {});

// Replicate weights when the response probabilities are known and fixed:
// no parameters are re-estimated, so the adjustment ratio to the design
// weight is constant within each replicate.
ReplicateWeights jackknife_replicates_fixed(const SurveySample& sample,
                                            std::span<const double> p,
                                            std::span<const double> q, std::size_t item,
                                            const JackknifeOptions& options = {});

// V-hat_r = sum_l c_l (Y-hat^(l) - point_estimate)^2 over usable replicates,
// with c inflated by L / L_ok when replicates were dropped.
double replicate_variance(const ReplicateWeights& replicates, const SurveySample& sample,
                          std::size_t item, double point_estimate);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  bool contains(double value) const { return lower <= value && value <= upper; }
};

// estimate +/- z_level * sqrt(variance).
Interval confidence_interval(double estimate, double variance, double level);

}  // namespace latnr
