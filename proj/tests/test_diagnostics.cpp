#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "latnr/diagnostics.hpp"
#include "latnr/errors.hpp"
#include "oracles.hpp"

using namespace latnr;

namespace {

LatentFit constant_prob_fit(std::size_t n, std::size_t m, double prob) {
  // Zero slopes make every fitted probability equal to `prob`.
  LatentFit fit;
  fit.params.beta0.assign(m, std::log(prob / (1.0 - prob)));
  fit.params.beta1.assign(m, 0.0);
  fit.theta.assign(n, 0.0);
  fit.converged = true;
  return fit;
}

}  // namespace

TEST_CASE("cronbach alpha on duplicated columns is one") {
  ItemResponseMatrix matrix(6, 3);
  const std::vector<int> base = {1, 0, 1, 1, 0, 0};
  for (std::size_t k = 0; k < 6; ++k) {
    for (std::size_t l = 0; l < 3; ++l) matrix.set(k, l, base[k] != 0);
  }
  CHECK(cronbach_alpha(matrix) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cronbach alpha near zero for independent columns") {
  SplitMix64 rng(9, 0);
  ItemResponseMatrix matrix(10000, 4);
  for (std::size_t k = 0; k < matrix.n; ++k) {
    for (std::size_t l = 0; l < 4; ++l) matrix.set(k, l, rng.next_bernoulli(0.5));
  }
  CHECK(std::abs(cronbach_alpha(matrix)) < 0.05);
}

TEST_CASE("cronbach alpha undefined for constant totals") {
  ItemResponseMatrix matrix(4, 3);
  for (std::size_t k = 0; k < 4; ++k) matrix.set(k, 0, true);  // rows all (1,0,0)
  CHECK_THROWS_AS(cronbach_alpha(matrix), ValidationError);
}

TEST_CASE("margin residuals: expected counts sum to n and R is nonnegative") {
  TwoPLParams truth;
  truth.beta0 = {0.3, -0.1, 0.2, 0.0};
  truth.beta1 = {1.1, 1.3, 0.9, 1.2};
  SplitMix64 rng(21, 0);
  const ItemResponseMatrix matrix = test::simulate_2pl(truth, 1500, rng);
  const LatentFit fit = fit_2pl_em(matrix, {});

  for (int order : {2, 3}) {
    const std::vector<MarginCell> cells = margin_residuals(matrix, fit, order);
    // Group by item subset and add up expected counts.
    double expected_sum = 0.0;
    double observed_sum = 0.0;
    std::size_t cells_per_table = 1ULL << order;
    REQUIRE(cells.size() % cells_per_table == 0);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      CHECK(cells[i].residual >= 0.0);
      expected_sum += cells[i].expected;
      observed_sum += cells[i].observed;
      if ((i + 1) % cells_per_table == 0) {
        CHECK(expected_sum == doctest::Approx(matrix.n).epsilon(1e-9));
        CHECK(observed_sum == doctest::Approx(matrix.n));
        expected_sum = 0.0;
        observed_sum = 0.0;
      }
    }
  }
}

TEST_CASE("margin residuals are small for model-generated data") {
  TwoPLParams truth;
  truth.beta0 = {0.5, 0.0, -0.5, 0.2};
  truth.beta1 = {1.0, 1.4, 1.2, 0.8};
  SplitMix64 rng(33, 1);
  const ItemResponseMatrix matrix = test::simulate_2pl(truth, 4000, rng);
  const LatentFit fit = fit_2pl_em(matrix, {});
  double max_r = 0.0;
  for (const MarginCell& cell : margin_residuals(matrix, fit, 2)) {
    if (!cell.skipped) max_r = std::max(max_r, cell.residual);
  }
  CHECK(max_r < 4.0);
}

TEST_CASE("infit and outfit calibrate near one at the truth") {
  TwoPLParams truth;
  truth.beta0 = {0.4, 0.0, -0.4, 0.2, -0.2, 0.1};
  truth.beta1 = {1.0, 1.1, 0.9, 1.2, 1.0, 0.8};
  SplitMix64 rng(55, 0);
  std::vector<double> true_theta;
  const ItemResponseMatrix matrix = test::simulate_2pl(truth, 4000, rng, &true_theta);

  // At the generating parameters and latent values the standardized
  // residuals have unit mean square.
  LatentFit oracle_fit;
  oracle_fit.params = truth;
  oracle_fit.theta = true_theta;
  const ItemFit at_truth = infit_outfit(matrix, oracle_fit);
  for (std::size_t l = 0; l < matrix.m; ++l) {
    CHECK(at_truth.infit[l] == doctest::Approx(1.0).epsilon(0.1));
    CHECK(at_truth.outfit[l] == doctest::Approx(1.0).epsilon(0.1));
  }

  // The fitted pipeline shrinks unit scores toward their posterior mode, so
  // its mean squares sit below one but stay inside the acceptance band.
  const LatentFit fit = fit_2pl_em(matrix, {});
  const ItemFit report = infit_outfit(matrix, fit);
  for (std::size_t l = 0; l < matrix.m; ++l) {
    CHECK(report.infit[l] >= kItemFitLow);
    CHECK(report.infit[l] <= kItemFitHigh);
    CHECK(report.outfit[l] >= kItemFitLow);
    CHECK(report.outfit[l] <= kItemFitHigh);
  }
}

TEST_CASE("deterministic responses near the expectation underdisperse") {
  // x equal to round(q) with q far from 1/2 gives outfit below one.
  const std::size_t n = 50;
  LatentFit fit = constant_prob_fit(n, 3, 0.9);
  ItemResponseMatrix matrix(n, 3);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < 3; ++l) matrix.set(k, l, true);  // round(0.9) = 1
  }
  const ItemFit report = infit_outfit(matrix, fit);
  for (std::size_t l = 0; l < 3; ++l) CHECK(report.outfit[l] < 1.0);
}

TEST_CASE("infit equals outfit when variance weights are constant") {
  SplitMix64 rng(4, 4);
  const std::size_t n = 200;
  LatentFit fit = constant_prob_fit(n, 3, 0.6);
  ItemResponseMatrix matrix(n, 3);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < 3; ++l) matrix.set(k, l, rng.next_bernoulli(0.6));
  }
  const ItemFit report = infit_outfit(matrix, fit);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(report.infit[l] == doctest::Approx(report.outfit[l]).epsilon(1e-12));
  }
}

TEST_CASE("point-measure correlations") {
  const std::size_t n = 10000;
  SplitMix64 rng(8, 8);
  std::vector<double> theta(n);
  for (double& t : theta) t = rng.next_normal();
  std::vector<double> sorted = theta;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[n / 2];

  ItemResponseMatrix matrix(n, 3);
  for (std::size_t k = 0; k < n; ++k) {
    matrix.set(k, 0, theta[k] > median);          // monotone item
    matrix.set(k, 1, rng.next_bernoulli(0.5));    // independent item
    matrix.set(k, 2, theta[k] < median);          // reversed item
  }
  const PointMeasure pm = point_measure_correlation(matrix, theta);
  CHECK(pm.correlation[0] > 0.7);
  CHECK(std::abs(pm.correlation[1]) < 0.05);
  CHECK(pm.correlation[2] < 0.0);
  CHECK(pm.flagged[0] == 0);
  CHECK(pm.flagged[2] == 1);
}

TEST_CASE("point-measure flags constant columns") {
  std::vector<double> theta = {0.1, -0.3, 0.5, 0.9};
  ItemResponseMatrix matrix(4, 3);
  for (std::size_t k = 0; k < 4; ++k) matrix.set(k, 0, true);
  const PointMeasure pm = point_measure_correlation(matrix, theta);
  CHECK(std::isnan(pm.correlation[0]));
  CHECK(pm.flagged[0] == 1);
}

TEST_CASE("residual pca first eigenvalue") {
  SUBCASE("unidimensional generator stays below 2") {
    TwoPLParams truth;
    truth.beta0 = {0.3, 0.0, -0.3, 0.2, -0.2, 0.1};
    truth.beta1 = {1.2, 1.0, 1.1, 0.9, 1.3, 1.0};
    SplitMix64 rng(71, 0);
    const ItemResponseMatrix matrix = test::simulate_2pl(truth, 2000, rng);
    const LatentFit fit = fit_2pl_em(matrix, {});
    CHECK(residual_pca_first_eigenvalue(matrix, fit) < 2.0);
  }

  SUBCASE("two independent factors push the eigenvalue to 2 or above") {
    SplitMix64 rng(72, 0);
    const std::size_t n = 3000;
    ItemResponseMatrix matrix(n, 6);
    for (std::size_t k = 0; k < n; ++k) {
      const double f1 = rng.next_normal();
      const double f2 = rng.next_normal();
      for (std::size_t l = 0; l < 6; ++l) {
        const double driver = l < 3 ? f1 : f2;
        matrix.set(k, l, rng.next_bernoulli(1.0 / (1.0 + std::exp(-4.0 * driver))));
      }
    }
    const LatentFit fit = fit_2pl_em(matrix, {});
    CHECK(residual_pca_first_eigenvalue(matrix, fit) >= 2.0);
  }

  SUBCASE("exactly uncorrelated residual columns give exactly one") {
    LatentFit fit = constant_prob_fit(4, 3, 0.5);
    // Columns pairwise uncorrelated: each pair agrees on exactly two rows.
    const ItemResponseMatrix matrix = [] {
      ItemResponseMatrix m(4, 3);
      const int rows[4][3] = {{0, 0, 0}, {0, 1, 1}, {1, 0, 1}, {1, 1, 0}};
      for (std::size_t k = 0; k < 4; ++k)
        for (std::size_t l = 0; l < 3; ++l) m.set(k, l, rows[k][l] != 0);
      return m;
    }();
    CHECK(residual_pca_first_eigenvalue(matrix, fit) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("diagnostics are pure functions") {
  TwoPLParams truth;
  truth.beta0 = {0.1, -0.2, 0.3};
  truth.beta1 = {1.0, 1.2, 0.8};
  SplitMix64 rng(14, 3);
  const ItemResponseMatrix matrix = test::simulate_2pl(truth, 300, rng);
  const LatentFit fit = fit_2pl_em(matrix, {});
  CHECK(cronbach_alpha(matrix) == cronbach_alpha(matrix));
  const ItemFit a = infit_outfit(matrix, fit);
  const ItemFit b = infit_outfit(matrix, fit);
  CHECK(a.infit == b.infit);
  CHECK(a.outfit == b.outfit);
  CHECK(residual_pca_first_eigenvalue(matrix, fit) ==
        residual_pca_first_eigenvalue(matrix, fit));
  const std::vector<MarginCell> ma = margin_residuals(matrix, fit, 2);
  const std::vector<MarginCell> mb = margin_residuals(matrix, fit, 2);
  REQUIRE(ma.size() == mb.size());
  for (std::size_t i = 0; i < ma.size(); ++i) {
    CHECK(ma[i].expected == mb[i].expected);
    CHECK(ma[i].residual == mb[i].residual);
  }
}
