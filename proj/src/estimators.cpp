#include "latnr/estimators.hpp"

#include <cmath>

#include "latnr/errors.hpp"

namespace latnr {

WeightSet build_weights(std::span<const double> pi, std::span<const double> p,
                        std::span<const double> q) {
  const std::size_t n = pi.size();
  if (p.size() != n || q.size() != n) {
    throw ValidationError("weight inputs differ in length");
  }
  WeightSet weights;
  weights.w1.resize(n);
  weights.w2.resize(n);
  weights.w3.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (!(pi[k] > 0.0 && pi[k] <= 1.0)) throw ValidationError("pi outside (0,1]");
    if (!(p[k] > 0.0 && p[k] <= 1.0)) throw ValidationError("p outside (0,1]");
    if (!(q[k] > 0.0 && q[k] <= 1.0)) throw ValidationError("q outside (0,1]");
    weights.w1[k] = 1.0 / pi[k];
    weights.w2[k] = weights.w1[k] / p[k];
    weights.w3[k] = weights.w2[k] / q[k];
  }
  return weights;
}

double ht_estimator(const SurveySample& sample, std::size_t item) {
  double total = 0.0;
  for (std::size_t k = 0; k < sample.n; ++k) {
    const double value = sample.value(k, item);
    if (std::isnan(value)) {
      throw ValidationError("full-response estimator given a missing value for unit " +
                            std::to_string(sample.unit_id[k]));
    }
    total += value / sample.pi[k];
  }
  return total;
}

double naive_estimator(const SurveySample& sample, std::size_t item) {
  double weighted_sum = 0.0;
  double weight_total = 0.0;
  for (std::size_t k = 0; k < sample.n; ++k) {
    if (!sample.unit_respondent[k] || !sample.present(k, item)) continue;
    weighted_sum += sample.value(k, item) / sample.pi[k];
    weight_total += 1.0 / sample.pi[k];
  }
  if (weight_total == 0.0) throw ValidationError("no respondents for the requested item");
  return static_cast<double>(sample.population_size) * weighted_sum / weight_total;
}

double three_phase_estimator(const SurveySample& sample, std::size_t item,
                             std::span<const double> p, std::span<const double> q) {
  double total = 0.0;
  for (std::size_t k = 0; k < sample.n; ++k) {
    if (!sample.unit_respondent[k] || !sample.present(k, item)) continue;
    if (!(p[k] > 0.0) || !(q[k] > 0.0)) {
      throw ValidationError("non-positive response probability for unit " +
                            std::to_string(sample.unit_id[k]));
    }
    total += sample.value(k, item) / (sample.pi[k] * p[k] * q[k]);
  }
  return total;
}

}  // namespace latnr
