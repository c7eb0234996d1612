#include "latnr/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "latnr/diagnostics.hpp"
#include "latnr/errors.hpp"
#include "latnr/estimators.hpp"
#include "latnr/linalg.hpp"
#include "latnr/parallel.hpp"
#include "latnr/variance.hpp"

namespace latnr {

namespace {

constexpr double kAbortionUnitIntercept = 0.7;
constexpr double kAbortionNoise = 0.2;
const double kAbortionItemIntercepts[4] = {1.0, 0.0, -0.5, 1.0};
constexpr double kAbortionItemSlope = 3.0;

const double kSyntheticItemIntercepts[6] = {1.0, 0.0, -0.5, 1.0, 0.0, -0.5};
const double kSyntheticItemSlopes[6] = {1.0, 1.0, 1.0, 1.5, 1.5, 1.5};

std::vector<double> rescale_to(std::span<const double> values, double lo, double hi) {
  double min_v = std::numeric_limits<double>::infinity();
  double max_v = -min_v;
  for (double v : values) {
    min_v = std::min(min_v, v);
    max_v = std::max(max_v, v);
  }
  if (!(max_v > min_v)) throw NumericError("degenerate range in probability rescaling");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = (values[i] - min_v) / (max_v - min_v) * (hi - lo) + lo;
  }
  return out;
}

}  // namespace

Population build_population_abortion(const std::string& csv_path, std::uint64_t seed,
                                     const FitConfig& fit_config) {
  std::ifstream file(csv_path);
  if (!file) throw Error("cannot open file: " + csv_path);
  std::string line;
  if (!std::getline(file, line)) throw ParseError("empty file", 1);

  // Header: a unit id column plus exactly four binary item columns.
  std::vector<std::string> header;
  {
    std::string cell;
    std::stringstream stream(line);
    while (std::getline(stream, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      header.push_back(cell);
    }
  }
  std::vector<std::size_t> item_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] != "unit_id" && header[i] != "pi") item_cols.push_back(i);
  }
  if (item_cols.size() != 4) {
    throw SchemaError("expected 4 item columns, found " + std::to_string(item_cols.size()));
  }

  Population pop;
  pop.items = 4;
  std::size_t row_number = 1;
  while (std::getline(file, line)) {
    ++row_number;
    if (line.empty() || line == "\r") continue;
    std::vector<double> cells;
    std::string cell;
    std::stringstream stream(line);
    while (std::getline(stream, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      try {
        cells.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError("cannot parse cell '" + cell + "'", row_number);
      }
    }
    if (cells.size() != header.size()) {
      throw ParseError("wrong cell count", row_number);
    }
    for (std::size_t c : item_cols) {
      if (cells[c] != 0.0 && cells[c] != 1.0) {
        throw ValidationError("item values must be binary (row " + std::to_string(row_number) +
                              ")");
      }
      pop.y.push_back(cells[c]);
    }
  }
  pop.size = pop.y.size() / 4;
  if (pop.size == 0) throw ValidationError("population file has no data rows");

  // Latent values: score a 2PL fit of the item values themselves.
  ItemResponseMatrix matrix(pop.size, 4);
  for (std::size_t k = 0; k < pop.size; ++k) {
    matrix.unit_id[k] = static_cast<std::int64_t>(k);
    for (std::size_t l = 0; l < 4; ++l) matrix.set(k, l, pop.y[k * 4 + l] != 0.0);
  }
  const LatentFit fit = fit_2pl_em(matrix, fit_config);
  pop.theta = fit.theta;

  // Response propensity rises with the latent score and with the item value
  // itself, making the nonresponse non-ignorable: the respondent pool
  // over-represents agreeing, willing units.
  SplitMix64 rng(seed, 0);
  pop.p_draw.resize(pop.size);
  pop.q_draw.resize(pop.size * 4);
  for (std::size_t k = 0; k < pop.size; ++k) {
    const double eps = rng.next_double();
    pop.p_draw[k] = logistic(kAbortionUnitIntercept + pop.y[k * 4 + 1] + pop.theta[k] +
                             kAbortionNoise * eps);
    for (std::size_t l = 0; l < 4; ++l) {
      pop.q_draw[k * 4 + l] = logistic(kAbortionItemSlope * pop.theta[k] +
                                       kAbortionItemIntercepts[l] + pop.y[k * 4 + l]);
    }
  }
  pop.p_true = pop.p_draw;
  pop.q_true = pop.q_draw;
  pop.p_report = pop.p_draw;
  pop.q_report = pop.q_draw;
  pop.item_of_interest = 1;
  pop.total_of_interest = 0.0;
  for (std::size_t k = 0; k < pop.size; ++k) pop.total_of_interest += pop.y[k * 4 + 1];
  return pop;
}

Population build_population_synthetic(const SyntheticPopulationConfig& config) {
  const std::size_t N = config.population_size;
  if (N < 2) throw ValidationError("population size too small");
  constexpr std::size_t m = 6;
  constexpr std::size_t dim = m + 1;  // six items plus the latent value

  // Correlation matrix: item-item 0.8, item-latent rho, unit variances.
  std::vector<double> corr(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) corr[i * dim + i] = 1.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      corr[i * dim + j] = corr[j * dim + i] = 0.8;
    }
    corr[i * dim + m] = corr[m * dim + i] = config.rho;
  }
  const std::vector<double> lower = cholesky_lower(corr, dim);

  Population pop;
  pop.size = N;
  pop.items = m;
  pop.y.resize(N * m);
  pop.theta.resize(N);

  SplitMix64 rng(config.seed, 0);
  std::vector<double> z(dim);
  for (std::size_t k = 0; k < N; ++k) {
    for (double& value : z) value = rng.next_normal();
    for (std::size_t i = 0; i < dim; ++i) {
      double value = 1.0;  // common mean
      for (std::size_t j = 0; j <= i; ++j) value += lower[i * dim + j] * z[j];
      if (i < m) {
        pop.y[k * m + i] = value;
      } else {
        pop.theta[k] = value;
      }
    }
  }

  // Standardize the latent values over the population.
  double mean_theta = 0.0;
  for (double t : pop.theta) mean_theta += t;
  mean_theta /= static_cast<double>(N);
  double var_theta = 0.0;
  for (double t : pop.theta) var_theta += (t - mean_theta) * (t - mean_theta);
  var_theta /= static_cast<double>(N);
  const double sd_theta = std::sqrt(var_theta);
  for (double& t : pop.theta) t = (t - mean_theta) / sd_theta;

  pop.p_draw.resize(N);
  pop.q_draw.resize(N * m);
  for (std::size_t k = 0; k < N; ++k) {
    pop.p_draw[k] = logistic(0.5 + pop.y[k * m] + pop.theta[k]);
    for (std::size_t l = 0; l < m; ++l) {
      pop.q_draw[k * m + l] = logistic(kSyntheticItemSlopes[l] * pop.theta[k] +
                                       kSyntheticItemIntercepts[l] + pop.y[k * m + l]);
    }
  }
  // Unit response is drawn from the rescaled probabilities (these carry the
  // nominal mean of about 0.7); item response is drawn from the unrescaled
  // base model, whose realized nonresponse rates are the quoted ones. The
  // benchmark estimator divides by the rescaled values on both phases, so
  // it carries a small positive bias by design of the study.
  pop.p_true = rescale_to(pop.p_draw, 0.1, 0.9);
  pop.p_draw = pop.p_true;
  pop.q_true.resize(N * m);
  std::vector<double> column(N);
  for (std::size_t l = 0; l < m; ++l) {
    for (std::size_t k = 0; k < N; ++k) column[k] = pop.q_draw[k * m + l];
    const std::vector<double> rescaled = rescale_to(column, 0.1, 0.95);
    for (std::size_t k = 0; k < N; ++k) pop.q_true[k * m + l] = rescaled[k];
  }
  pop.p_report = pop.p_true;
  pop.q_report = pop.q_draw;

  pop.item_of_interest = m - 1;
  pop.total_of_interest = 0.0;
  for (std::size_t k = 0; k < N; ++k) pop.total_of_interest += pop.y[k * m + m - 1];
  return pop;
}

std::vector<std::size_t> srswor(std::size_t population_size, std::size_t sample_size,
                                SplitMix64& rng) {
  if (sample_size > population_size) throw ValidationError("sample larger than population");
  std::vector<std::size_t> indices(population_size);
  for (std::size_t i = 0; i < population_size; ++i) indices[i] = i;
  for (std::size_t i = 0; i < sample_size; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(population_size - i));
    std::swap(indices[i], indices[j]);
  }
  indices.resize(sample_size);
  std::sort(indices.begin(), indices.end());
  return indices;
}

std::vector<std::uint8_t> poisson_response(std::span<const double> probabilities,
                                           SplitMix64& rng) {
  std::vector<std::uint8_t> out(probabilities.size());
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    out[i] = rng.next_bernoulli(probabilities[i]) ? 1 : 0;
  }
  return out;
}

namespace {

struct ReplicateOutcome {
  double ht = 0.0;
  double naive = 0.0;
  double three_phase = 0.0;
  double three_phase_true = 0.0;
  bool ok = false;
  bool coverage_ok = false;
  bool covered = false;
  double sqrt_vr = 0.0;
  std::string error;
};

ReplicateOutcome run_one_replicate(const Population& pop, const SimulationOptions& options,
                                   std::size_t rep) {
  ReplicateOutcome out;
  try {
    SplitMix64 rng(options.seed, 1 + rep);
    const std::size_t n = options.sample_size;
    const std::size_t m = pop.items;
    const std::size_t j = pop.item_of_interest;
    const std::vector<std::size_t> sampled = srswor(pop.size, n, rng);

    // Unit response, then item response for unit respondents.
    std::vector<std::uint8_t> responded(n);
    for (std::size_t i = 0; i < n; ++i) {
      responded[i] = rng.next_bernoulli(pop.p_draw[sampled[i]]) ? 1 : 0;
    }
    std::vector<std::uint8_t> x(n * m, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (!responded[i]) continue;
      int score = 0;
      for (std::size_t l = 0; l < m; ++l) {
        const bool answered = rng.next_bernoulli(pop.q_draw[sampled[i] * m + l]);
        x[i * m + l] = answered ? 1 : 0;
        score += answered;
      }
      // A contacted unit that answered nothing is indistinguishable from a
      // unit nonrespondent.
      if (score == 0) responded[i] = 0;
    }

    SurveySample sample;
    sample.n = n;
    sample.m = m;
    sample.population_size = pop.size;
    sample.unit_respondent = responded;
    sample.pi.assign(n, static_cast<double>(n) / static_cast<double>(pop.size));
    sample.unit_id.resize(n);
    sample.y.resize(n * m);
    for (std::size_t i = 0; i < n; ++i) {
      sample.unit_id[i] = static_cast<std::int64_t>(sampled[i]);
      for (std::size_t l = 0; l < m; ++l) {
        sample.y[i * m + l] = (responded[i] && x[i * m + l])
                                  ? pop.y[sampled[i] * m + l]
                                  : std::numeric_limits<double>::quiet_NaN();
      }
    }

    // Full-response benchmark straight from the population values.
    const double weight = static_cast<double>(pop.size) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out.ht += weight * pop.y[sampled[i] * m + j];

    out.naive = naive_estimator(sample, j);

    bool all_responded = true;
    bool all_items_answered = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (!responded[i]) {
        all_responded = false;
        break;
      }
      for (std::size_t l = 0; l < m; ++l) {
        if (!x[i * m + l]) all_items_answered = false;
      }
    }

    std::vector<double> p_hat(n, 1.0), q_hat(n, 1.0), p_true(n), q_true(n);
    for (std::size_t i = 0; i < n; ++i) {
      p_true[i] = pop.p_true[sampled[i]];
      q_true[i] = pop.q_true[sampled[i] * m + j];
    }

    bool have_model = false;
    StageOneResult stage1;
    PropensityModel model;
    if (all_responded && all_items_answered) {
      // Nothing to correct; both adjustment phases are the identity.
    } else {
      const ItemResponseMatrix matrix = derive_indicators(sample);
      FitConfig fit_config = options.fit;
      fit_config.parallel = false;  // replicates already run in parallel
      stage1 = estimate_thetas_stage1(sample, matrix, fit_config);
      if (all_responded) {
        // Full unit response: only the item-nonresponse phase applies.
        for (std::size_t i = 0; i < n; ++i) {
          q_hat[i] = item_response_prob_hat(stage1.fit, stage1.theta[i], j, options.q_floor);
        }
      } else {
        PropensityConfig prop_config = options.propensity;
        prop_config.jitter_seed = rng.next_u64();
        // Spread the nonrespondents' shared score on its own posterior scale;
        // a token jitter leaves the classes separated and the fit degenerate.
        if (stage1.theta_phantom_sd > 0.0) prop_config.jitter_sd = stage1.theta_phantom_sd;
        model = fit_response_logistic(stage1.theta, responded, nullptr, 0, prop_config);
        if (!model.converged) {
          out.error = "stage-two logistic did not converge";
          return out;
        }
        have_model = true;
        for (std::size_t i = 0; i < n; ++i) {
          p_hat[i] = model.fitted[i];
          q_hat[i] = item_response_prob_hat(stage1.fit, model.covariate[i], j, options.q_floor);
        }
      }
    }
    out.three_phase = three_phase_estimator(sample, j, p_hat, q_hat);
    out.three_phase_true = three_phase_estimator(sample, j, p_true, q_true);
    out.ok = true;

    if (options.with_coverage && have_model) {
      try {
        JackknifeOptions jk;
        jk.parallel = false;
        const ReplicateWeights reps = jackknife_replicates(sample, stage1.fit, model, j, jk);
        const double variance = replicate_variance(reps, sample, j, out.three_phase);
        const Interval ci = confidence_interval(out.three_phase, variance, 0.95);
        out.covered = ci.contains(pop.total_of_interest);
        out.sqrt_vr = std::sqrt(variance);
        out.coverage_ok = true;
      } catch (const Error&) {
        out.coverage_ok = false;
      }
    }
  } catch (const Error& err) {
    out.ok = false;
    out.error = err.what();
  }
  return out;
}

EstimatorMetrics summarize(std::span<const double> estimates, double total) {
  EstimatorMetrics metrics;
  metrics.mean = mean(estimates);
  metrics.bias = metrics.mean - total;
  metrics.relative_bias = metrics.bias / total;
  const double variance = sample_variance(estimates);
  metrics.sqrt_var = std::sqrt(variance);
  metrics.mse = metrics.bias * metrics.bias + variance;
  return metrics;
}

}  // namespace

SimulationResult run_monte_carlo(const Population& population,
                                 const SimulationOptions& options) {
  const std::size_t M = options.replicates;
  if (M == 0) throw ValidationError("need at least one replicate");

  std::vector<ReplicateOutcome> outcomes(M);
  auto body = [&](std::size_t rep) { outcomes[rep] = run_one_replicate(population, options, rep); };
  if (options.parallel) {
    parallel_for(M, body);
  } else {
    serial_for(M, body);
  }

  SimulationResult result;
  result.replicates_requested = M;
  result.sample_size = options.sample_size;
  result.seed = options.seed;
  result.population_total = population.total_of_interest;

  std::vector<double> ht, naive, three_phase, three_phase_true;
  std::size_t covered = 0;
  std::size_t coverage_count = 0;
  double sqrt_vr_sum = 0.0;
  for (const ReplicateOutcome& out : outcomes) {
    if (!out.ok) {
      ++result.failures;
      continue;
    }
    ht.push_back(out.ht);
    naive.push_back(out.naive);
    three_phase.push_back(out.three_phase);
    three_phase_true.push_back(out.three_phase_true);
    if (out.coverage_ok) {
      ++coverage_count;
      covered += out.covered ? 1 : 0;
      sqrt_vr_sum += out.sqrt_vr;
    }
  }
  result.replicates_used = ht.size();
  if (static_cast<double>(result.failures) >
      options.max_failure_rate * static_cast<double>(M)) {
    throw ConvergenceError("simulation failure rate too high: " +
                           std::to_string(result.failures) + " of " + std::to_string(M));
  }
  if (result.replicates_used == 0) throw ConvergenceError("no successful replicates");

  result.ht = summarize(ht, population.total_of_interest);
  result.naive = summarize(naive, population.total_of_interest);
  result.three_phase = summarize(three_phase, population.total_of_interest);
  result.three_phase_true = summarize(three_phase_true, population.total_of_interest);
  if (options.with_coverage && coverage_count > 0) {
    result.coverage = static_cast<double>(covered) / static_cast<double>(coverage_count);
    result.mean_sqrt_vr = sqrt_vr_sum / static_cast<double>(coverage_count);
  }
  return result;
}

PopulationDiagnostics population_latent_diagnostics(const Population& population,
                                                    std::uint64_t seed,
                                                    const FitConfig& fit_config) {
  const std::size_t N = population.size;
  const std::size_t m = population.items;
  SplitMix64 rng(seed, 0);
  ItemResponseMatrix matrix(N, m);
  for (std::size_t k = 0; k < N; ++k) {
    matrix.unit_id[k] = static_cast<std::int64_t>(k);
    for (std::size_t l = 0; l < m; ++l) {
      matrix.set(k, l, rng.next_bernoulli(population.q_report[k * m + l]));
    }
  }

  PopulationDiagnostics diag;
  diag.cronbach_alpha = cronbach_alpha(matrix);

  const LatentFit fit = fit_2pl_em(matrix, fit_config);
  std::vector<double> item_values(N);
  for (std::size_t k = 0; k < N; ++k) {
    item_values[k] = population.y[k * m + population.item_of_interest];
  }
  diag.corr_theta_item = pearson_correlation(fit.theta, item_values);

  diag.nominal_item_nonresponse.assign(m, 0.0);
  diag.realized_item_nonresponse.assign(m, 0.0);
  diag.fitted_item_nonresponse.assign(m, 0.0);
  for (std::size_t l = 0; l < m; ++l) {
    double q_sum = 0.0;
    double x_sum = 0.0;
    double fitted_sum = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      q_sum += population.q_report[k * m + l];
      x_sum += matrix(k, l);
      fitted_sum += item_response_prob(fit.params.beta0[l], fit.params.beta1[l], fit.theta[k]);
    }
    diag.nominal_item_nonresponse[l] = 1.0 - q_sum / static_cast<double>(N);
    diag.realized_item_nonresponse[l] = 1.0 - x_sum / static_cast<double>(N);
    diag.fitted_item_nonresponse[l] = 1.0 - fitted_sum / static_cast<double>(N);
  }
  return diag;
}

void write_simulation_csv(const SimulationResult& result, const std::string& path) {
  std::ofstream file(path);
  if (!file) throw Error("cannot write file: " + path);
  file << "estimator,B,RB,sqrt_var,MSE,coverage\n";
  char buffer[256];
  auto row = [&](const char* name, const EstimatorMetrics& m, double coverage) {
    if (coverage >= 0.0) {
      std::snprintf(buffer, sizeof(buffer), "%s,%.10g,%.10g,%.10g,%.10g,%.10g\n", name, m.bias,
                    m.relative_bias, m.sqrt_var, m.mse, coverage);
    } else {
      std::snprintf(buffer, sizeof(buffer), "%s,%.10g,%.10g,%.10g,%.10g,\n", name, m.bias,
                    m.relative_bias, m.sqrt_var, m.mse);
    }
    file << buffer;
  };
  row("ht", result.ht, -1.0);
  row("naive", result.naive, -1.0);
  row("three_phase", result.three_phase, result.coverage);
  row("three_phase_true", result.three_phase_true, -1.0);
}

}  // namespace latnr
