#include "latnr/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "latnr/errors.hpp"
#include "latnr/linalg.hpp"

namespace latnr {

double cronbach_alpha(const ItemResponseMatrix& matrix) {
  if (matrix.m < 2 || matrix.n < 2) {
    throw ValidationError("alpha needs at least 2 items and 2 rows");
  }
  std::vector<double> column(matrix.n);
  double item_variance_sum = 0.0;
  std::vector<double> totals(matrix.n, 0.0);
  for (std::size_t l = 0; l < matrix.m; ++l) {
    for (std::size_t k = 0; k < matrix.n; ++k) {
      column[k] = matrix(k, l);
      totals[k] += column[k];
    }
    item_variance_sum += sample_variance(column);
  }
  const double total_variance = sample_variance(totals);
  if (total_variance == 0.0) {
    throw ValidationError("total score variance is zero; alpha undefined");
  }
  const double m = static_cast<double>(matrix.m);
  return m / (m - 1.0) * (1.0 - item_variance_sum / total_variance);
}

namespace {

// Model probability that the items of `subset` take the values of `cell`,
// integrated against the N(0,1) prior.
double cell_probability(const TwoPLParams& params, const QuadratureRule& quad,
                        const std::vector<std::size_t>& subset,
                        const std::vector<std::uint8_t>& cell) {
  double prob = 0.0;
  for (std::size_t g = 0; g < quad.size(); ++g) {
    double term = quad.weights[g];
    for (std::size_t i = 0; i < subset.size(); ++i) {
      const double q =
          item_response_prob(params.beta0[subset[i]], params.beta1[subset[i]], quad.nodes[g]);
      term *= cell[i] ? q : (1.0 - q);
    }
    prob += term;
  }
  return prob;
}

void append_margin_cells(const ItemResponseMatrix& matrix, const TwoPLParams& params,
                         const QuadratureRule& quad, const std::vector<std::size_t>& subset,
                         std::vector<MarginCell>& out) {
  const std::size_t cells = 1ULL << subset.size();
  for (std::size_t code = 0; code < cells; ++code) {
    MarginCell entry;
    entry.items = subset;
    entry.cell.resize(subset.size());
    for (std::size_t i = 0; i < subset.size(); ++i) entry.cell[i] = (code >> i) & 1ULL;

    for (std::size_t k = 0; k < matrix.n; ++k) {
      bool match = true;
      for (std::size_t i = 0; i < subset.size(); ++i) {
        if (matrix(k, subset[i]) != entry.cell[i]) {
          match = false;
          break;
        }
      }
      if (match) entry.observed += 1.0;
    }
    entry.expected =
        static_cast<double>(matrix.n) * cell_probability(params, quad, subset, entry.cell);
    if (entry.expected < 1e-12) {
      entry.skipped = true;
      entry.residual = 0.0;
    } else {
      const double diff = entry.observed - entry.expected;
      entry.residual = diff * diff / entry.expected;
    }
    out.push_back(std::move(entry));
  }
}

// Standardized residual matrix z_kl; clamps fitted probabilities away from
// 0 and 1 and counts how often that was needed.
std::vector<double> standardized_residuals(const ItemResponseMatrix& matrix,
                                           const LatentFit& fit, std::size_t* clamped) {
  std::vector<double> z(matrix.n * matrix.m);
  for (std::size_t k = 0; k < matrix.n; ++k) {
    for (std::size_t l = 0; l < matrix.m; ++l) {
      double q = item_response_prob(fit.params.beta0[l], fit.params.beta1[l], fit.theta[k]);
      if (q < 1e-10 || q > 1.0 - 1e-10) {
        q = std::clamp(q, 1e-10, 1.0 - 1e-10);
        if (clamped) ++*clamped;
      }
      z[k * matrix.m + l] = (matrix(k, l) - q) / std::sqrt(q * (1.0 - q));
    }
  }
  return z;
}

}  // namespace

std::vector<MarginCell> margin_residuals(const ItemResponseMatrix& matrix,
                                         const LatentFit& fit, int order) {
  if (order != 2 && order != 3) throw ValidationError("margin order must be 2 or 3");
  if (fit.params.items() != matrix.m) {
    throw ValidationError("fit does not cover the matrix's items");
  }
  const QuadratureRule quad = gauss_hermite_normal(61);
  std::vector<MarginCell> out;
  const std::size_t m = matrix.m;
  if (order == 2) {
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = a + 1; b < m; ++b)
        append_margin_cells(matrix, fit.params, quad, {a, b}, out);
  } else {
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = a + 1; b < m; ++b)
        for (std::size_t c = b + 1; c < m; ++c)
          append_margin_cells(matrix, fit.params, quad, {a, b, c}, out);
  }
  return out;
}

ItemFit infit_outfit(const ItemResponseMatrix& matrix, const LatentFit& fit) {
  ItemFit report;
  report.infit.assign(matrix.m, 0.0);
  report.outfit.assign(matrix.m, 0.0);
  const double n = static_cast<double>(matrix.n);
  for (std::size_t l = 0; l < matrix.m; ++l) {
    double z2_sum = 0.0;
    double squared_sum = 0.0;
    double info_sum = 0.0;
    for (std::size_t k = 0; k < matrix.n; ++k) {
      double q = item_response_prob(fit.params.beta0[l], fit.params.beta1[l], fit.theta[k]);
      if (q < 1e-10 || q > 1.0 - 1e-10) {
        q = std::clamp(q, 1e-10, 1.0 - 1e-10);
        ++report.clamped_probabilities;
      }
      const double resid = matrix(k, l) - q;
      const double info = q * (1.0 - q);
      z2_sum += resid * resid / info;
      squared_sum += resid * resid;
      info_sum += info;
    }
    report.outfit[l] = z2_sum / n;
    report.infit[l] = squared_sum / info_sum;
  }
  return report;
}

PointMeasure point_measure_correlation(const ItemResponseMatrix& matrix,
                                       const std::vector<double>& theta) {
  PointMeasure result;
  result.correlation.assign(matrix.m, 0.0);
  result.flagged.assign(matrix.m, 0);
  std::vector<double> column(matrix.n);
  for (std::size_t l = 0; l < matrix.m; ++l) {
    for (std::size_t k = 0; k < matrix.n; ++k) column[k] = matrix(k, l);
    const double corr = pearson_correlation(column, theta);
    result.correlation[l] = corr;
    if (!(corr > 0.0)) result.flagged[l] = 1;
  }
  return result;
}

double residual_pca_first_eigenvalue(const ItemResponseMatrix& matrix, const LatentFit& fit) {
  const std::size_t m = matrix.m;
  std::vector<double> z = standardized_residuals(matrix, fit, nullptr);
  std::vector<double> corr(m * m, 0.0);
  std::vector<double> col_a(matrix.n), col_b(matrix.n);
  for (std::size_t a = 0; a < m; ++a) {
    corr[a * m + a] = 1.0;
    for (std::size_t b = a + 1; b < m; ++b) {
      for (std::size_t k = 0; k < matrix.n; ++k) {
        col_a[k] = z[k * m + a];
        col_b[k] = z[k * m + b];
      }
      double value = pearson_correlation(col_a, col_b);
      if (std::isnan(value)) value = 0.0;  // constant residual column
      corr[a * m + b] = value;
      corr[b * m + a] = value;
    }
  }
  return largest_eigenvalue_symmetric(std::move(corr), m);
}

}  // namespace latnr
