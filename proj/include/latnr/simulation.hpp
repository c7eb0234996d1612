#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latnr/propensity.hpp"
#include "latnr/rng.hpp"
#include "latnr/survey_data.hpp"
#include "latnr/two_pl.hpp"

namespace latnr {

// A fixed finite population with its response mechanism. Three probability
// sets coexist: `p_draw`/`q_draw` generate the response indicators,
// `p_true`/`q_true` are what the benchmark estimator divides by, and
// `p_report`/`q_report` carry the nominal response model that population
// summaries describe. The study designs separate these sets (a rescaling
// step in one, the orientation of the latent score in the other), so the
// population keeps all of them explicit.
struct Population {
  std::size_t size = 0;   // N
  std::size_t items = 0;  // m
  std::vector<double> y;                  // N x m
  std::vector<double> theta;              // latent value per unit
  std::vector<double> p_draw;             // unit-response draw probabilities
  std::vector<double> q_draw;             // N x m item-response draw probabilities
  std::vector<double> p_true;
  std::vector<double> q_true;             // N x m
  std::vector<double> p_report;
  std::vector<double> q_report;           // N x m
  std::size_t item_of_interest = 0;       // j, zero-based
  double total_of_interest = 0.0;         // Y_j
};

// Binary four-item opinion-poll population: the latent value is the score
// of a 2PL fit to the item values themselves, unit-response probabilities
// follow logistic(0.7 + y_2 + theta + 0.2 eps) with eps ~ U(0,1), and item
// response follows logistic(3 theta + a_l + y_l), a = (1, 0, -0.5, 1).
Population build_population_abortion(const std::string& csv_path, std::uint64_t seed,
                                     const FitConfig& fit_config = {});

struct SyntheticPopulationConfig {
  std::size_t population_size = 2000;
  double rho = 0.5;  // corr(y_l, theta)
  std::uint64_t seed = 1;
};

// Six continuous items plus a latent value from a correlated normal draw
// (item-item correlation 0.8, item-latent correlation rho, mean 1, unit
// variances). Unit-response base probabilities logistic(0.5 + y_1 + theta)
// rescaled to [0.1, 0.9]; item probabilities logistic(b_l theta + a_l + y_l)
// rescaled to [0.1, 0.95]. Response indicators are drawn from the
// unrescaled probabilities; the rescaled ones act as the nominal truth.
Population build_population_synthetic(const SyntheticPopulationConfig& config);

// Uniform n-subset of {0, ..., population_size - 1}, ascending.
std::vector<std::size_t> srswor(std::size_t population_size, std::size_t sample_size,
                                SplitMix64& rng);

// Independent Bernoulli draws, one per probability.
std::vector<std::uint8_t> poisson_response(std::span<const double> probabilities,
                                           SplitMix64& rng);

struct EstimatorMetrics {
  double mean = 0.0;
  double bias = 0.0;           // B
  double relative_bias = 0.0;  // RB = B / Y
  double sqrt_var = 0.0;
  double mse = 0.0;            // B^2 + VAR
};

struct SimulationResult {
  EstimatorMetrics ht;
  EstimatorMetrics naive;
  EstimatorMetrics three_phase;       // estimated probabilities
  EstimatorMetrics three_phase_true;  // true probabilities
  double coverage = -1.0;             // 95% jackknife coverage; -1 when disabled
  double mean_sqrt_vr = -1.0;
  std::size_t replicates_requested = 0;
  std::size_t replicates_used = 0;
  std::size_t failures = 0;
  std::size_t sample_size = 0;
  std::uint64_t seed = 0;
  double population_total = 0.0;
};

struct SimulationOptions {
  std::size_t sample_size = 50;
  std::size_t replicates = 1000;  // M
  std::uint64_t seed = 1;
  bool with_coverage = false;
  bool parallel = true;
  FitConfig fit;
  PropensityConfig propensity;
  double q_floor = 0.01;
  double max_failure_rate = 0.02;
};

// Monte Carlo study: draw an SRSWOR sample, draw unit and item response,
// run the two-stage propensity pipeline, and evaluate all four estimators.
// Results are deterministic in (population, options.seed) regardless of the
// thread count: each replicate owns an RNG substream and an output slot.
SimulationResult run_monte_carlo(const Population& population, const SimulationOptions& options);

// Population-level diagnostics used to validate a response mechanism: a
// seeded draw of the full indicator matrix, a latent fit on it, and the
// derived summary measures.
struct PopulationDiagnostics {
  double cronbach_alpha = 0.0;
  double corr_theta_item = 0.0;  // corr(theta-hat, y_j) for the item of interest
  std::vector<double> nominal_item_nonresponse;   // 1 - mean q_draw, per item
  std::vector<double> realized_item_nonresponse;  // from the drawn matrix
  std::vector<double> fitted_item_nonresponse;    // 1 - mean q-hat, per item
};

PopulationDiagnostics population_latent_diagnostics(const Population& population,
                                                    std::uint64_t seed,
                                                    const FitConfig& fit_config = {});

// Writes the simulate CSV: one row per estimator with B, RB, sqrt_var, MSE
// and coverage.
void write_simulation_csv(const SimulationResult& result, const std::string& path);

}  // namespace latnr
