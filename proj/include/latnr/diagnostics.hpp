#pragma once

#include <cstdint>
#include <vector>

#include "latnr/survey_data.hpp"
#include "latnr/two_pl.hpp"

namespace latnr {

// One cell of a two-way or three-way margin table: the item subset, the 0/1
// cell pattern, observed and model-expected counts, and R = (O-E)^2 / E.
struct MarginCell {
  std::vector<std::size_t> items;
  std::vector<std::uint8_t> cell;
  double observed = 0.0;
  double expected = 0.0;
  double residual = 0.0;
  bool skipped = false;  // expected count below 1e-12
};

struct ItemFit {
  std::vector<double> infit;
  std::vector<double> outfit;
  std::size_t clamped_probabilities = 0;  // fitted q at 0/1 clamped with warning
};

struct PointMeasure {
  std::vector<double> correlation;       // NaN when the item column is constant
  std::vector<std::uint8_t> flagged;     // corr <= 0 or undefined
};

// Internal-consistency coefficient alpha over the indicator columns.
// Throws ValidationError when the total score has zero variance.
double cronbach_alpha(const ItemResponseMatrix& matrix);

// Margin tables of the given order (2 or 3) with expected counts from the
// fitted model integrated against the N(0,1) prior.
std::vector<MarginCell> margin_residuals(const ItemResponseMatrix& matrix,
                                         const LatentFit& fit, int order);

// Mean-square item fit statistics from standardized residuals
// z_kl = (x_kl - q_kl) / sqrt(q_kl (1 - q_kl)) at the scored theta values.
ItemFit infit_outfit(const ItemResponseMatrix& matrix, const LatentFit& fit);

// Acceptable infit/outfit band; items outside it deserve review.
inline constexpr double kItemFitLow = 0.5;
inline constexpr double kItemFitHigh = 1.5;

// Pearson correlation of each indicator column with the latent scores.
PointMeasure point_measure_correlation(const ItemResponseMatrix& matrix,
                                       const std::vector<double>& theta);

// Largest eigenvalue of the correlation matrix of standardized residuals;
// values below 2 support unidimensionality.
double residual_pca_first_eigenvalue(const ItemResponseMatrix& matrix, const LatentFit& fit);

}  // namespace latnr
