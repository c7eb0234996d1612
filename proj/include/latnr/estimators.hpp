#pragma once

#include <span>
#include <vector>

#include "latnr/survey_data.hpp"

namespace latnr {

// The three weighting phases for one item: design weights, unit-nonresponse
// adjusted, and fully adjusted. Elementwise w1 <= w2 <= w3.
struct WeightSet {
  std::vector<double> w1;  // 1 / pi_k
  std::vector<double> w2;  // 1 / (pi_k p_k)
  std::vector<double> w3;  // 1 / (pi_k p_k q_kj)
};

// Componentwise reciprocals of the probability products; validates that all
// probabilities are in (0, 1] and the resulting ordering.
WeightSet build_weights(std::span<const double> pi, std::span<const double> p,
                        std::span<const double> q);

// Horvitz-Thompson total over the full sample: sum y_kj / pi_k.
// Requires item j observed on every sampled unit.
double ht_estimator(const SurveySample& sample, std::size_t item);

// Respondent-mean estimator N * (sum_{r_j} y/pi) / (sum_{r_j} 1/pi); corrects
// for neither unit nor item nonresponse. Throws on an empty respondent set.
double naive_estimator(const SurveySample& sample, std::size_t item);

// Three-phase reweighted total sum_{r_j} y_kj / (pi_k p_k q_kj); p and q are
// per-unit vectors aligned with the sample, strictly positive on r_j.
double three_phase_estimator(const SurveySample& sample, std::size_t item,
                             std::span<const double> p, std::span<const double> q);

}  // namespace latnr
