// Benchmark: the OpenMP kernels against their serial reference
// implementations. Covers the E-step, the Monte Carlo driver, and the
// jackknife replicate loop; verifies that parallel results match the serial
// ones exactly before timing.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include "CLI11.hpp"
#include "latnr/linalg.hpp"
#include "latnr/parallel.hpp"
#include "latnr/propensity.hpp"
#include "latnr/rng.hpp"
#include "latnr/simulation.hpp"
#include "latnr/two_pl.hpp"
#include "latnr/variance.hpp"

using namespace latnr;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

ItemResponseMatrix simulated_matrix(std::size_t n, std::size_t m, SplitMix64& rng) {
  ItemResponseMatrix matrix(n, m);
  for (std::size_t k = 0; k < n; ++k) {
    matrix.unit_id[k] = static_cast<std::int64_t>(k);
    const double theta = rng.next_normal();
    for (std::size_t l = 0; l < m; ++l) {
      const double q = logistic(0.3 + (0.8 + 0.1 * l) * theta);
      matrix.set(k, l, rng.next_bernoulli(q));
    }
  }
  return matrix;
}

void report(const char* name, double serial, double parallel, bool identical) {
  std::printf("%-28s serial %8.3fs   parallel %8.3fs   speedup %.2fx   %s\n", name, serial,
              parallel, serial / parallel, identical ? "results identical" : "RESULTS DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP benchmark"};
  int threads = 0;
  int repeats = 5;
  app.add_option("--threads", threads, "cap OpenMP parallelism (0 = default)");
  app.add_option("--repeats", repeats, "timing repetitions");
  CLI11_PARSE(app, argc, argv);
  set_thread_cap(threads);

  // E-step kernel on a larger instance.
  {
    SplitMix64 rng(1, 0);
    const ItemResponseMatrix matrix = simulated_matrix(20000, 12, rng);
    const detail::PatternTable patterns = detail::make_pattern_table(matrix);
    TwoPLParams params;
    for (std::size_t l = 0; l < 12; ++l) {
      params.beta0.push_back(0.2);
      params.beta1.push_back(1.0);
    }
    const QuadratureRule quad = gauss_hermite_normal(61);

    detail::EStepTables serial_tables, parallel_tables;
    auto t0 = Clock::now();
    for (int r = 0; r < repeats; ++r) {
      serial_tables = detail::estep(patterns, params, quad, false);
    }
    const double serial = seconds_since(t0) / repeats;
    t0 = Clock::now();
    for (int r = 0; r < repeats; ++r) {
      parallel_tables = detail::estep(patterns, params, quad, true);
    }
    const double parallel = seconds_since(t0) / repeats;
    const bool identical = serial_tables.loglik == parallel_tables.loglik &&
                           serial_tables.node_total == parallel_tables.node_total &&
                           serial_tables.node_correct == parallel_tables.node_correct;
    report("e-step (20000x12, G=61)", serial, parallel, identical);
  }

  // Monte Carlo driver.
  {
    SyntheticPopulationConfig config;
    config.rho = 0.5;
    config.seed = 3;
    const Population pop = build_population_synthetic(config);
    SimulationOptions options;
    options.sample_size = 200;
    options.replicates = 200;
    options.seed = 11;

    options.parallel = false;
    auto t0 = Clock::now();
    const SimulationResult serial_result = run_monte_carlo(pop, options);
    const double serial = seconds_since(t0);

    options.parallel = true;
    t0 = Clock::now();
    const SimulationResult parallel_result = run_monte_carlo(pop, options);
    const double parallel = seconds_since(t0);
    const bool identical = serial_result.three_phase.mean == parallel_result.three_phase.mean &&
                           serial_result.naive.sqrt_var == parallel_result.naive.sqrt_var;
    report("monte carlo (n=200, M=200)", serial, parallel, identical);
  }

  // Jackknife replicate loop.
  {
    SplitMix64 rng(9, 0);
    const std::size_t n = 400;
    const std::size_t m = 5;
    SurveySample sample;
    sample.n = n;
    sample.m = m;
    sample.population_size = 4000;
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
        if (rng.next_bernoulli(logistic(0.8 + theta))) {
          matrix.set(k, l, true);
          sample.y[k * m + l] = theta + 2.0;
          ++score;
        }
      }
      sample.unit_respondent[k] = score > 0;
    }
    const StageOneResult stage1 = estimate_thetas_stage1(sample, matrix, {});
    PropensityConfig prop;
    prop.jitter_sd = stage1.theta_phantom_sd;
    const PropensityModel model =
        fit_response_logistic(stage1.theta, sample.unit_respondent, nullptr, 0, prop);

    JackknifeOptions serial_opts;
    serial_opts.parallel = false;
    auto t0 = Clock::now();
    const ReplicateWeights serial_reps = jackknife_replicates(sample, stage1.fit, model, 1,
                                                              serial_opts);
    const double serial = seconds_since(t0);

    JackknifeOptions parallel_opts;
    parallel_opts.parallel = true;
    t0 = Clock::now();
    const ReplicateWeights parallel_reps = jackknife_replicates(sample, stage1.fit, model, 1,
                                                                parallel_opts);
    const double parallel = seconds_since(t0);
    report("jackknife (n=400)", serial, parallel, serial_reps.w3 == parallel_reps.w3);
  }
  return 0;
}
