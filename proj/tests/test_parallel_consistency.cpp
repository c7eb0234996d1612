// The OpenMP kernels must agree with their serial reference implementations
// bit for bit: every parallel iteration writes only to its own slot and the
// final accumulation runs in a fixed order.

#include <limits>
#include <vector>

#include "doctest.h"
#include "latnr/linalg.hpp"
#include "latnr/parallel.hpp"
#include "latnr/propensity.hpp"
#include "latnr/simulation.hpp"
#include "latnr/variance.hpp"
#include "oracles.hpp"

using namespace latnr;

TEST_CASE("e-step kernel: parallel equals serial exactly") {
  TwoPLParams truth;
  truth.beta0 = {0.3, -0.4, 0.1, 0.6, -0.2, 0.0};
  truth.beta1 = {1.1, 0.9, 1.4, 1.0, 1.2, 0.8};
  SplitMix64 rng(2, 0);
  const ItemResponseMatrix matrix = test::simulate_2pl(truth, 500, rng);
  const detail::PatternTable patterns = detail::make_pattern_table(matrix);
  const QuadratureRule quad = gauss_hermite_normal(21);

  set_thread_cap(2);
  const detail::EStepTables parallel = detail::estep(patterns, truth, quad, true);
  const detail::EStepTables serial = detail::estep(patterns, truth, quad, false);
  CHECK(parallel.loglik == serial.loglik);
  CHECK(parallel.node_total == serial.node_total);
  CHECK(parallel.node_correct == serial.node_correct);
  set_thread_cap(0);
}

TEST_CASE("full fit: parallel equals serial exactly") {
  TwoPLParams truth;
  truth.beta0 = {0.2, -0.1, 0.4, 0.0};
  truth.beta1 = {1.0, 1.3, 0.9, 1.1};
  SplitMix64 rng(6, 0);
  const ItemResponseMatrix matrix = test::simulate_2pl(truth, 400, rng);
  FitConfig parallel_config;
  parallel_config.parallel = true;
  FitConfig serial_config;
  serial_config.parallel = false;
  const LatentFit a = fit_2pl_em(matrix, parallel_config);
  const LatentFit b = fit_2pl_em(matrix, serial_config);
  CHECK(a.loglik == b.loglik);
  CHECK(a.params.beta0 == b.params.beta0);
  CHECK(a.params.beta1 == b.params.beta1);
  CHECK(a.theta == b.theta);
}

TEST_CASE("monte carlo: parallel equals serial exactly") {
  SyntheticPopulationConfig pop_config;
  pop_config.rho = 0.5;
  pop_config.seed = 3;
  const Population pop = build_population_synthetic(pop_config);

  SimulationOptions options;
  options.sample_size = 80;
  options.replicates = 40;
  options.seed = 17;

  options.parallel = true;
  const SimulationResult a = run_monte_carlo(pop, options);
  options.parallel = false;
  const SimulationResult b = run_monte_carlo(pop, options);

  CHECK(a.ht.mean == b.ht.mean);
  CHECK(a.ht.sqrt_var == b.ht.sqrt_var);
  CHECK(a.naive.mean == b.naive.mean);
  CHECK(a.three_phase.mean == b.three_phase.mean);
  CHECK(a.three_phase.sqrt_var == b.three_phase.sqrt_var);
  CHECK(a.three_phase_true.mean == b.three_phase_true.mean);
  CHECK(a.failures == b.failures);
}

TEST_CASE("jackknife replicates: parallel equals serial exactly") {
  SplitMix64 rng(2029, 0);
  const std::size_t n = 50;
  const std::size_t m = 4;
  SurveySample sample;
  sample.n = n;
  sample.m = m;
  sample.population_size = 500;
  sample.pi.assign(n, 0.1);
  sample.unit_id.resize(n);
  sample.unit_respondent.assign(n, 0);
  sample.y.assign(n * m, std::numeric_limits<double>::quiet_NaN());
  ItemResponseMatrix matrix(n, m);
  for (std::size_t k = 0; k < n; ++k) {
    sample.unit_id[k] = static_cast<std::int64_t>(k);
    matrix.unit_id[k] = static_cast<std::int64_t>(k);
    const double theta = rng.next_normal();
    if (!rng.next_bernoulli(logistic(1.0 + theta))) continue;
    int score = 0;
    for (std::size_t l = 0; l < m; ++l) {
      if (rng.next_bernoulli(logistic(0.9 + 1.3 * theta))) {
        matrix.set(k, l, true);
        sample.y[k * m + l] = theta + 2.0;
        ++score;
      }
    }
    sample.unit_respondent[k] = score > 0;
  }
  const StageOneResult stage1 = estimate_thetas_stage1(sample, matrix, {});
  PropensityConfig prop_config;
  prop_config.jitter_sd = stage1.theta_phantom_sd;
  const PropensityModel model =
      fit_response_logistic(stage1.theta, sample.unit_respondent, nullptr, 0, prop_config);
  REQUIRE(model.converged);

  JackknifeOptions par;
  par.parallel = true;
  JackknifeOptions ser;
  ser.parallel = false;
  const ReplicateWeights a = jackknife_replicates(sample, stage1.fit, model, 1, par);
  const ReplicateWeights b = jackknife_replicates(sample, stage1.fit, model, 1, ser);
  CHECK(a.w3 == b.w3);
  CHECK(a.failures == b.failures);
}
