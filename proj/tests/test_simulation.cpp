#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "latnr/diagnostics.hpp"
#include "latnr/errors.hpp"
#include "latnr/linalg.hpp"
#include "latnr/simulation.hpp"

using namespace latnr;

TEST_CASE("srswor basics") {
  SplitMix64 rng(1, 0);
  const std::vector<std::size_t> all = srswor(7, 7, rng);
  CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});

  SplitMix64 a(5, 3), b(5, 3);
  CHECK(srswor(100, 10, a) == srswor(100, 10, b));

  CHECK_THROWS_AS(srswor(5, 6, a), ValidationError);
}

TEST_CASE("srswor n=1 is uniform") {
  const std::size_t N = 10;
  const int draws = 100000;
  std::vector<int> counts(N, 0);
  SplitMix64 rng(77, 0);
  for (int i = 0; i < draws; ++i) {
    const std::vector<std::size_t> pick = srswor(N, 1, rng);
    ++counts[pick[0]];
  }
  const double expected = draws / static_cast<double>(N);
  const double sigma = std::sqrt(draws * (1.0 / N) * (1.0 - 1.0 / N));
  for (std::size_t i = 0; i < N; ++i) {
    CHECK(std::abs(counts[i] - expected) < 3.0 * sigma);
  }
}

TEST_CASE("poisson response draws") {
  SplitMix64 rng(3, 0);
  const std::vector<double> all_ones(50, 1.0);
  for (std::uint8_t r : poisson_response(all_ones, rng)) CHECK(r == 1);
  const std::vector<double> all_zero(50, 0.0);
  for (std::uint8_t r : poisson_response(all_zero, rng)) CHECK(r == 0);

  const int n = 100000;
  const std::vector<double> p(n, 0.74);
  int hits = 0;
  for (std::uint8_t r : poisson_response(p, rng)) hits += r;
  const double sigma = std::sqrt(n * 0.74 * 0.26);
  CHECK(std::abs(hits - n * 0.74) < 3.0 * sigma);
}

TEST_CASE("synthetic population matches its design") {
  SyntheticPopulationConfig config;
  config.rho = 0.5;
  config.seed = 11;
  const Population pop = build_population_synthetic(config);
  REQUIRE(pop.size == 2000);
  REQUIRE(pop.items == 6);

  // Rescaled unit-response probabilities hit their bounds exactly and mean
  // out near 0.7.
  double min_p = 1.0, max_p = 0.0;
  const double mean_p = mean(pop.p_true);
  for (double p : pop.p_true) {
    min_p = std::min(min_p, p);
    max_p = std::max(max_p, p);
  }
  CHECK(min_p == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(max_p == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(mean_p == doctest::Approx(0.7).epsilon(0.05));

  // Latent values standardized; correlation with the item of interest near
  // the configured rho.
  CHECK(mean(pop.theta) == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
  std::vector<double> y6(pop.size);
  for (std::size_t k = 0; k < pop.size; ++k) y6[k] = pop.y[k * 6 + 5];
  CHECK(pearson_correlation(pop.theta, y6) == doctest::Approx(0.5).epsilon(0.06));

  // Item probabilities rescaled into [0.1, 0.95].
  for (std::size_t l = 0; l < 6; ++l) {
    double lo = 1.0, hi = 0.0;
    for (std::size_t k = 0; k < pop.size; ++k) {
      lo = std::min(lo, pop.q_true[k * 6 + l]);
      hi = std::max(hi, pop.q_true[k * 6 + l]);
    }
    CHECK(lo == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(hi == doctest::Approx(0.95).epsilon(1e-12));
  }

  // Same seed, same population.
  const Population again = build_population_synthetic(config);
  CHECK(again.y == pop.y);
  CHECK(again.theta == pop.theta);
  CHECK(again.total_of_interest == pop.total_of_interest);
}

TEST_CASE("synthetic population rejects an infeasible correlation") {
  SyntheticPopulationConfig config;
  config.rho = 0.95;  // outside the positive-definite range for this design
  CHECK_THROWS_AS(build_population_synthetic(config), NumericError);
}

TEST_CASE("correlation sweep tracks rho") {
  for (double rho : {0.3, 0.8}) {
    SyntheticPopulationConfig config;
    config.rho = rho;
    config.seed = 4;
    const Population pop = build_population_synthetic(config);
    std::vector<double> y6(pop.size);
    for (std::size_t k = 0; k < pop.size; ++k) y6[k] = pop.y[k * 6 + 5];
    CHECK(pearson_correlation(pop.theta, y6) == doctest::Approx(rho).epsilon(0.12));
  }
}

namespace {

Population degenerate_population(std::size_t N) {
  // Full response everywhere; every estimator should collapse to HT.
  Population pop;
  pop.size = N;
  pop.items = 3;
  pop.y.resize(N * 3);
  pop.theta.assign(N, 0.0);
  pop.p_draw.assign(N, 1.0);
  pop.p_true.assign(N, 1.0);
  pop.q_draw.assign(N * 3, 1.0);
  pop.q_true.assign(N * 3, 1.0);
  pop.item_of_interest = 2;
  pop.total_of_interest = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    for (std::size_t l = 0; l < 3; ++l) pop.y[k * 3 + l] = static_cast<double>((k * 7 + l) % 5);
    pop.total_of_interest += pop.y[k * 3 + 2];
  }
  return pop;
}

}  // namespace

TEST_CASE("degenerate mechanism: all estimators equal HT") {
  const Population pop = degenerate_population(120);
  SimulationOptions options;
  options.sample_size = 30;
  options.replicates = 1;
  options.seed = 5;
  const SimulationResult result = run_monte_carlo(pop, options);
  CHECK(result.replicates_used == 1);
  CHECK(result.naive.mean == doctest::Approx(result.ht.mean).epsilon(1e-12));
  CHECK(result.three_phase.mean == doctest::Approx(result.ht.mean).epsilon(1e-12));
  CHECK(result.three_phase_true.mean == doctest::Approx(result.ht.mean).epsilon(1e-12));
}

TEST_CASE("monte carlo results are deterministic and obey the MSE identity") {
  SyntheticPopulationConfig pop_config;
  pop_config.rho = 0.5;
  pop_config.seed = 9;
  const Population pop = build_population_synthetic(pop_config);

  SimulationOptions options;
  options.sample_size = 100;
  options.replicates = 60;
  options.seed = 31;

  const SimulationResult first = run_monte_carlo(pop, options);
  const SimulationResult second = run_monte_carlo(pop, options);
  CHECK(first.ht.mean == second.ht.mean);
  CHECK(first.naive.mean == second.naive.mean);
  CHECK(first.three_phase.mean == second.three_phase.mean);
  CHECK(first.three_phase_true.mean == second.three_phase_true.mean);

  for (const EstimatorMetrics* m :
       {&first.ht, &first.naive, &first.three_phase, &first.three_phase_true}) {
    const double reconstructed = m->bias * m->bias + m->sqrt_var * m->sqrt_var;
    CHECK(std::abs(m->mse - reconstructed) <= 1e-9 * std::max(1.0, std::abs(m->mse)));
  }
  CHECK(first.failures == 0);
}

TEST_CASE("poll population: realized item nonresponse among respondents") {
  // Averaged over simulated samples, respondents skip each item less often
  // than the population-wide nominal rate, with the same ordering.
  const Population pop =
      build_population_abortion(std::string(LATNR_DATA_DIR) + "/abortion_poll.csv", 20240602);
  const std::size_t m = pop.items;
  std::vector<double> skipped(m, 0.0);
  double respondents = 0.0;
  SplitMix64 rng(1234, 0);
  for (int rep = 0; rep < 300; ++rep) {
    const std::vector<std::size_t> sampled = srswor(pop.size, 50, rng);
    for (std::size_t idx : sampled) {
      if (!rng.next_bernoulli(pop.p_draw[idx])) continue;
      respondents += 1.0;
      for (std::size_t l = 0; l < m; ++l) {
        if (!rng.next_bernoulli(pop.q_draw[idx * m + l])) skipped[l] += 1.0;
      }
    }
  }
  std::vector<double> realized(m);
  for (std::size_t l = 0; l < m; ++l) realized[l] = skipped[l] / respondents;

  const double reference[4] = {0.26, 0.33, 0.38, 0.23};
  for (std::size_t l = 0; l < m; ++l) {
    CHECK(std::abs(realized[l] - reference[l]) < 0.06);
  }
  // Ordering: item 3 hardest, then 2, then 1, then 4.
  CHECK(realized[2] > realized[1]);
  CHECK(realized[1] > realized[0]);
  CHECK(realized[0] > realized[3]);

  // Realized rates sit below the nominal population rates, and the fitted
  // model reproduces the nominal ordering (item 3 > 2 > 1 > 4).
  const PopulationDiagnostics diag = population_latent_diagnostics(pop, 20240603);
  for (std::size_t l = 0; l < m; ++l) {
    CHECK(realized[l] < diag.nominal_item_nonresponse[l]);
  }
  const std::vector<double>& fitted = diag.fitted_item_nonresponse;
  CHECK(fitted[2] > fitted[1]);
  CHECK(fitted[1] > fitted[0]);
  CHECK(fitted[0] > fitted[3]);
}

TEST_CASE("poll population: margin residuals accept the one-factor model") {
  const Population pop =
      build_population_abortion(std::string(LATNR_DATA_DIR) + "/abortion_poll.csv", 20240602);
  SplitMix64 rng(20240603, 0);
  ItemResponseMatrix matrix(pop.size, pop.items);
  for (std::size_t k = 0; k < pop.size; ++k) {
    matrix.unit_id[k] = static_cast<std::int64_t>(k);
    for (std::size_t l = 0; l < pop.items; ++l) {
      matrix.set(k, l, rng.next_bernoulli(pop.q_report[k * pop.items + l]));
    }
  }
  const LatentFit fit = fit_2pl_em(matrix, {});
  for (int order : {2, 3}) {
    for (const MarginCell& cell : margin_residuals(matrix, fit, order)) {
      if (!cell.skipped) CHECK(cell.residual < 4.0);
    }
  }
}

TEST_CASE("simulation csv output is stable") {
  const Population pop = degenerate_population(60);
  SimulationOptions options;
  options.sample_size = 20;
  options.replicates = 3;
  options.seed = 12;
  const SimulationResult result = run_monte_carlo(pop, options);
  write_simulation_csv(result, "/tmp/latnr_sim_a.csv");
  write_simulation_csv(result, "/tmp/latnr_sim_b.csv");
  std::ifstream fa("/tmp/latnr_sim_a.csv"), fb("/tmp/latnr_sim_b.csv");
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().find("estimator,B,RB,sqrt_var,MSE,coverage") == 0);
}
