// Command-line front end: fit-2pl, diagnose, weights, estimate, variance,
// and simulate subcommands over survey CSV files.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "latnr/diagnostics.hpp"
#include "latnr/errors.hpp"
#include "latnr/estimators.hpp"
#include "latnr/linalg.hpp"
#include "latnr/parallel.hpp"
#include "latnr/propensity.hpp"
#include "latnr/simulation.hpp"
#include "latnr/variance.hpp"

using namespace latnr;

namespace {

struct CommonOptions {
  std::string input;
  std::string unit_id_column = "unit_id";
  std::string pi_column;
  std::string respondent_column;
  std::vector<std::string> items;
  std::vector<std::string> missing = {"", "NA"};
  std::size_t population_size = 0;
  std::string config_path;
  double p_floor = 0.01;
  double q_floor = 0.01;
  std::uint64_t seed = 1;
};

// Columns not mapped to ids or design fields count as items.
CsvSchema build_schema(const CommonOptions& opt) {
  CsvSchema schema;
  schema.unit_id_column = opt.unit_id_column;
  if (!opt.pi_column.empty()) schema.pi_column = opt.pi_column;
  if (!opt.respondent_column.empty()) schema.respondent_column = opt.respondent_column;
  schema.missing_sentinels = opt.missing;
  if (opt.population_size > 0) schema.population_size = opt.population_size;
  if (!opt.items.empty()) {
    schema.item_columns = opt.items;
    return schema;
  }
  std::ifstream file(opt.input);
  if (!file) throw Error("cannot open file: " + opt.input);
  std::string header;
  std::getline(file, header);
  std::string cell;
  std::stringstream stream(header);
  while (std::getline(stream, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    if (cell == opt.unit_id_column || cell == opt.pi_column ||
        cell == opt.respondent_column) {
      continue;
    }
    schema.item_columns.push_back(cell);
  }
  return schema;
}

FitConfig load_fit_config(const CommonOptions& opt) {
  FitConfig config;
  if (opt.config_path.empty()) return config;
  std::ifstream file(opt.config_path);
  if (!file) throw Error("cannot open config file: " + opt.config_path);
  nlohmann::json json;
  file >> json;
  if (json.contains("quadrature_points")) config.quadrature_points = json["quadrature_points"];
  if (json.contains("tol")) config.tol = json["tol"];
  if (json.contains("max_iter")) config.max_iter = json["max_iter"];
  if (json.contains("stabilize")) config.stabilize = json["stabilize"];
  if (json.contains("scoring")) {
    const std::string scoring = json["scoring"];
    if (scoring == "mode") {
      config.scoring = ScoringMethod::kPosteriorMode;
    } else if (scoring == "mean") {
      config.scoring = ScoringMethod::kPosteriorMean;
    } else {
      throw ValidationError("scoring must be 'mode' or 'mean'");
    }
  }
  if (json.contains("model")) {
    const std::string model = json["model"];
    if (model == "2pl") {
      config.model = LatentModel::kTwoPL;
    } else if (model == "rasch") {
      config.model = LatentModel::kRasch;
    } else {
      throw ValidationError("model must be '2pl' or 'rasch'");
    }
  }
  return config;
}

// Respondent-only indicator matrix for model fitting.
ItemResponseMatrix respondent_matrix(const SurveySample& sample,
                                     const ItemResponseMatrix& matrix) {
  std::size_t count = 0;
  for (auto r : sample.unit_respondent) count += r;
  ItemResponseMatrix out(count, sample.m);
  std::size_t row = 0;
  for (std::size_t k = 0; k < sample.n; ++k) {
    if (!sample.unit_respondent[k]) continue;
    out.unit_id[row] = sample.unit_id[k];
    for (std::size_t l = 0; l < sample.m; ++l) out.set(row, l, matrix(k, l) != 0);
    ++row;
  }
  return out;
}

// What the latent model is fitted to: response indicators derived from
// missingness, or the binary item values themselves. `auto` picks values
// when the file is fully observed and binary (an indicator matrix saved as
// data), and indicators otherwise.
ItemResponseMatrix analysis_matrix(const SurveySample& sample, const std::string& mode) {
  const ItemResponseMatrix indicators = derive_indicators(sample);
  bool complete_binary = true;
  for (std::size_t k = 0; k < sample.n && complete_binary; ++k) {
    for (std::size_t l = 0; l < sample.m; ++l) {
      const double v = sample.value(k, l);
      if (std::isnan(v) || (v != 0.0 && v != 1.0)) {
        complete_binary = false;
        break;
      }
    }
  }
  const bool use_values =
      mode == "values" || (mode == "auto" && complete_binary);
  if (!use_values) return respondent_matrix(sample, indicators);
  if (!complete_binary) {
    throw ValidationError("--matrix values requires fully observed binary items");
  }
  ItemResponseMatrix out(sample.n, sample.m);
  out.unit_id = sample.unit_id;
  for (std::size_t k = 0; k < sample.n; ++k) {
    for (std::size_t l = 0; l < sample.m; ++l) out.set(k, l, sample.value(k, l) != 0.0);
  }
  return out;
}

LatentFit fit_matrix(const ItemResponseMatrix& matrix, const FitConfig& config) {
  return config.model == LatentModel::kRasch ? fit_rasch(matrix, config)
                                             : fit_2pl_em(matrix, config);
}

std::vector<double> read_numeric_column(const std::string& path, const std::string& column) {
  std::ifstream file(path);
  if (!file) throw Error("cannot open file: " + path);
  std::string line;
  if (!std::getline(file, line)) throw ParseError("empty file", 1);
  int index = -1;
  {
    std::stringstream stream(line);
    std::string cell;
    int i = 0;
    while (std::getline(stream, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      if (cell == column) index = i;
      ++i;
    }
  }
  if (index < 0) throw SchemaError("column '" + column + "' not found in " + path);
  std::vector<double> values;
  std::size_t row = 1;
  while (std::getline(file, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::stringstream stream(line);
    std::string cell;
    for (int i = 0; i <= index; ++i) std::getline(stream, cell, ',');
    try {
      values.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ParseError("cannot parse cell '" + cell + "'", row);
    }
  }
  return values;
}

// True when every respondent answered the item: nothing to correct there.
bool item_fully_observed(const SurveySample& sample, std::size_t item) {
  for (std::size_t k = 0; k < sample.n; ++k) {
    if (sample.unit_respondent[k] && !sample.present(k, item)) return false;
  }
  return true;
}

int find_item(const SurveySample& sample, const std::string& name) {
  for (std::size_t l = 0; l < sample.item_names.size(); ++l) {
    if (sample.item_names[l] == name) return static_cast<int>(l);
  }
  try {
    const int index = std::stoi(name);
    if (index >= 1 && static_cast<std::size_t>(index) <= sample.m) return index - 1;
  } catch (const std::exception&) {
  }
  throw ValidationError("unknown item '" + name + "'");
}

struct PipelineResult {
  StageOneResult stage1;
  PropensityModel model;
  bool full_response = false;
};

PipelineResult run_pipeline(const SurveySample& sample, const ItemResponseMatrix& matrix,
                            const FitConfig& fit_config, const CommonOptions& opt) {
  PipelineResult out;
  bool any_nonrespondent = false;
  for (auto r : sample.unit_respondent) {
    if (!r) any_nonrespondent = true;
  }
  out.stage1 = estimate_thetas_stage1(sample, matrix, fit_config);
  if (!any_nonrespondent) {
    out.full_response = true;
    out.model.alpha0 = 0.0;
    out.model.alpha1 = 0.0;
    out.model.converged = true;
    out.model.p_floor = opt.p_floor;
    out.model.covariate = out.stage1.theta;
    out.model.fitted.assign(sample.n, 1.0 - 1e-15);
    return out;
  }
  PropensityConfig prop;
  prop.p_floor = opt.p_floor;
  prop.jitter_seed = opt.seed;
  if (out.stage1.theta_phantom_sd > 0.0) prop.jitter_sd = out.stage1.theta_phantom_sd;
  out.model = fit_response_logistic(out.stage1.theta, sample.unit_respondent, nullptr, 0, prop);
  if (!out.model.converged) {
    throw ConvergenceError("response-propensity fit did not converge");
  }
  return out;
}

void cmd_fit_2pl(const CommonOptions& opt, const std::string& scores_out,
                 const std::string& matrix_mode) {
  const SurveySample sample = load_survey_csv(opt.input, build_schema(opt));
  const ItemResponseMatrix matrix = analysis_matrix(sample, matrix_mode);
  const FitConfig config = load_fit_config(opt);
  const LatentFit fit = fit_matrix(matrix, config);

  std::printf("rows: %zu respondents of %zu sampled, %zu items\n", matrix.n, sample.n,
              sample.m);
  std::printf("log-likelihood: %.4f after %zu iterations (%s)\n", fit.loglik, fit.iterations,
              fit.converged ? "converged" : "not converged");
  std::printf("%-12s %10s %10s %s\n", "item", "intercept", "slope", "flags");
  for (std::size_t l = 0; l < sample.m; ++l) {
    std::printf("%-12s %10.4f %10.4f %s\n", sample.item_names[l].c_str(), fit.params.beta0[l],
                fit.params.beta1[l], fit.negative_slope[l] ? "negative-slope" : "");
  }
  std::printf("cronbach alpha: %.4f\n", cronbach_alpha(matrix));
  const PointMeasure pm = point_measure_correlation(matrix, fit.theta);
  std::printf("point-measure correlations:");
  for (std::size_t l = 0; l < sample.m; ++l) {
    std::printf(" %.3f%s", pm.correlation[l], pm.flagged[l] ? "!" : "");
  }
  std::printf("\n");

  if (!scores_out.empty()) {
    std::ofstream file(scores_out);
    if (!file) throw Error("cannot write " + scores_out);
    file << "unit_id,theta_hat\n";
    for (std::size_t k = 0; k < matrix.n; ++k) {
      file << matrix.unit_id[k] << ',' << fit.theta[k] << '\n';
    }
    std::printf("wrote scores to %s\n", scores_out.c_str());
  }
}

void cmd_diagnose(const CommonOptions& opt, const std::string& csv_out,
                  const std::string& matrix_mode) {
  const SurveySample sample = load_survey_csv(opt.input, build_schema(opt));
  const ItemResponseMatrix matrix = analysis_matrix(sample, matrix_mode);
  const FitConfig config = load_fit_config(opt);
  const LatentFit fit = fit_matrix(matrix, config);

  std::printf("cronbach alpha: %.4f\n", cronbach_alpha(matrix));
  const ItemFit item_fit = infit_outfit(matrix, fit);
  const PointMeasure pm = point_measure_correlation(matrix, fit.theta);
  std::printf("%-12s %8s %8s %8s %s\n", "item", "infit", "outfit", "pm-corr", "flags");
  for (std::size_t l = 0; l < sample.m; ++l) {
    std::string flags;
    if (item_fit.infit[l] < kItemFitLow || item_fit.infit[l] > kItemFitHigh) flags += " infit";
    if (item_fit.outfit[l] < kItemFitLow || item_fit.outfit[l] > kItemFitHigh)
      flags += " outfit";
    if (pm.flagged[l]) flags += " pm";
    std::printf("%-12s %8.3f %8.3f %8.3f%s\n", sample.item_names[l].c_str(), item_fit.infit[l],
                item_fit.outfit[l], pm.correlation[l], flags.c_str());
  }
  std::printf("residual PCA first eigenvalue: %.4f\n",
              residual_pca_first_eigenvalue(matrix, fit));

  auto print_margins = [&](int order) {
    const std::vector<MarginCell> cells = margin_residuals(matrix, fit, order);
    double max_r = 0.0;
    for (const MarginCell& cell : cells) {
      if (!cell.skipped) max_r = std::max(max_r, cell.residual);
    }
    std::printf("%d-way margins: %zu cells, max residual %.3f\n", order, cells.size(), max_r);
    return cells;
  };
  const std::vector<MarginCell> two_way = print_margins(2);
  const std::vector<MarginCell> three_way = print_margins(3);

  if (!csv_out.empty()) {
    std::ofstream file(csv_out);
    if (!file) throw Error("cannot write " + csv_out);
    file << "metric,items,cell,observed,expected,value\n";
    file << "cronbach_alpha,,,,," << cronbach_alpha(matrix) << '\n';
    file << "residual_pca_eigenvalue,,,,," << residual_pca_first_eigenvalue(matrix, fit)
         << '\n';
    for (std::size_t l = 0; l < sample.m; ++l) {
      file << "infit," << sample.item_names[l] << ",,,," << item_fit.infit[l] << '\n';
      file << "outfit," << sample.item_names[l] << ",,,," << item_fit.outfit[l] << '\n';
      file << "point_measure," << sample.item_names[l] << ",,,," << pm.correlation[l] << '\n';
    }
    auto write_cells = [&](const std::vector<MarginCell>& cells, const char* name) {
      for (const MarginCell& cell : cells) {
        file << name << ',';
        for (std::size_t i = 0; i < cell.items.size(); ++i) {
          if (i) file << '|';
          file << sample.item_names[cell.items[i]];
        }
        file << ',';
        for (std::size_t i = 0; i < cell.cell.size(); ++i) file << int(cell.cell[i]);
        file << ',' << cell.observed << ',' << cell.expected << ',' << cell.residual << '\n';
      }
    };
    write_cells(two_way, "margin2");
    write_cells(three_way, "margin3");
    std::printf("wrote report to %s\n", csv_out.c_str());
  }
}

void cmd_weights(const CommonOptions& opt, const std::string& out_path) {
  const SurveySample sample = load_survey_csv(opt.input, build_schema(opt));
  const ItemResponseMatrix matrix = derive_indicators(sample);
  const FitConfig config = load_fit_config(opt);
  const PipelineResult pipeline = run_pipeline(sample, matrix, config, opt);

  std::vector<std::uint8_t> complete_item(sample.m);
  for (std::size_t l = 0; l < sample.m; ++l) complete_item[l] = item_fully_observed(sample, l);

  std::ofstream file(out_path);
  if (!file) throw Error("cannot write " + out_path);
  file << "unit_id,theta_hat,p_hat";
  for (std::size_t l = 0; l < sample.m; ++l) file << ",q_hat_" << (l + 1);
  for (std::size_t l = 0; l < sample.m; ++l) file << ",w3_" << (l + 1);
  file << '\n';
  char buffer[64];
  for (std::size_t k = 0; k < sample.n; ++k) {
    const double p_hat = pipeline.model.fitted[k];
    file << sample.unit_id[k];
    std::snprintf(buffer, sizeof(buffer), ",%.10g,%.10g", pipeline.stage1.theta[k], p_hat);
    file << buffer;
    std::vector<double> q_hat(sample.m);
    for (std::size_t l = 0; l < sample.m; ++l) {
      q_hat[l] = complete_item[l]
                     ? 1.0
                     : item_response_prob_hat(pipeline.stage1.fit,
                                              pipeline.model.covariate[k], l, opt.q_floor);
      std::snprintf(buffer, sizeof(buffer), ",%.10g", q_hat[l]);
      file << buffer;
    }
    for (std::size_t l = 0; l < sample.m; ++l) {
      std::snprintf(buffer, sizeof(buffer), ",%.10g",
                    1.0 / (sample.pi[k] * p_hat * q_hat[l]));
      file << buffer;
    }
    file << '\n';
  }
  std::printf("wrote per-unit weights to %s\n", out_path.c_str());
}

void cmd_estimate(const CommonOptions& opt, const std::string& item_name,
                  const std::string& true_p_col, const std::string& true_q_col) {
  CommonOptions shrunk = opt;
  const SurveySample sample = load_survey_csv(opt.input, build_schema(shrunk));
  const int item = find_item(sample, item_name);
  const ItemResponseMatrix matrix = derive_indicators(sample);
  const FitConfig config = load_fit_config(opt);

  bool item_full_response = true;
  for (std::size_t k = 0; k < sample.n; ++k) {
    if (!sample.present(k, item)) item_full_response = false;
  }

  std::printf("%-24s %14s\n", "estimator", "total");
  if (item_full_response) {
    std::printf("%-24s %14.4f\n", "horvitz-thompson", ht_estimator(sample, item));
  } else {
    std::printf("%-24s %14s\n", "horvitz-thompson", "n/a (missing)");
  }
  std::printf("%-24s %14.4f\n", "naive", naive_estimator(sample, item));

  const PipelineResult pipeline = run_pipeline(sample, matrix, config, opt);
  const bool item_complete = item_fully_observed(sample, item);
  std::vector<double> p_hat(sample.n), q_hat(sample.n);
  for (std::size_t k = 0; k < sample.n; ++k) {
    p_hat[k] = pipeline.model.fitted[k];
    q_hat[k] = item_complete
                   ? 1.0
                   : item_response_prob_hat(pipeline.stage1.fit, pipeline.model.covariate[k],
                                            item, opt.q_floor);
  }
  if (pipeline.full_response) {
    std::fill(p_hat.begin(), p_hat.end(), 1.0);
  }
  std::printf("%-24s %14.4f\n", "three-phase (estimated)",
              three_phase_estimator(sample, item, p_hat, q_hat));

  if (!true_p_col.empty() && !true_q_col.empty()) {
    const std::vector<double> p_true = read_numeric_column(opt.input, true_p_col);
    const std::vector<double> q_true = read_numeric_column(opt.input, true_q_col);
    std::printf("%-24s %14.4f\n", "three-phase (true)",
                three_phase_estimator(sample, item, p_true, q_true));
  } else if (pipeline.full_response && item_complete) {
    std::printf("%-24s %14.4f\n", "three-phase (true)",
                three_phase_estimator(sample, item, p_hat, q_hat));
  } else {
    std::printf("%-24s %14s\n", "three-phase (true)", "n/a (supply --true-p/--true-q)");
  }
}

void cmd_variance(const CommonOptions& opt, const std::string& item_name,
                  const std::string& replicates_out) {
  const SurveySample sample = load_survey_csv(opt.input, build_schema(opt));
  const int item = find_item(sample, item_name);
  const ItemResponseMatrix matrix = derive_indicators(sample);
  const FitConfig config = load_fit_config(opt);
  const PipelineResult pipeline = run_pipeline(sample, matrix, config, opt);
  if (pipeline.full_response) {
    throw ValidationError("variance pipeline needs unit nonresponse; sample has none");
  }

  std::vector<double> p_hat(sample.n), q_hat(sample.n);
  for (std::size_t k = 0; k < sample.n; ++k) {
    p_hat[k] = pipeline.model.fitted[k];
    q_hat[k] = item_response_prob_hat(pipeline.stage1.fit, pipeline.model.covariate[k], item,
                                      opt.q_floor);
  }
  const double point = three_phase_estimator(sample, item, p_hat, q_hat);
  const ReplicateWeights reps =
      jackknife_replicates(sample, pipeline.stage1.fit, pipeline.model, item);
  const double variance = replicate_variance(reps, sample, item, point);
  const Interval ci = confidence_interval(point, variance, 0.95);
  std::printf("three-phase estimate: %.4f\n", point);
  std::printf("jackknife sqrt(V_r): %.4f (%zu replicates, %zu failed, %zu partial)\n",
              std::sqrt(variance), reps.replicate_count, reps.failures, reps.partial);
  std::printf("95%% interval: [%.4f, %.4f]\n", ci.lower, ci.upper);

  if (!replicates_out.empty()) {
    std::ofstream file(replicates_out);
    if (!file) throw Error("cannot write " + replicates_out);
    file << "replicate";
    for (std::size_t i : reps.item_respondent_rows) file << ",unit_" << sample.unit_id[i];
    file << '\n';
    for (std::size_t l = 0; l < reps.replicate_count; ++l) {
      file << l;
      const double* row = reps.w3.data() + l * reps.item_respondent_rows.size();
      char buffer[64];
      for (std::size_t i = 0; i < reps.item_respondent_rows.size(); ++i) {
        std::snprintf(buffer, sizeof(buffer), ",%.10g", row[i]);
        file << buffer;
      }
      file << '\n';
    }
    std::printf("wrote replicate weights to %s\n", replicates_out.c_str());
  }
}

void cmd_simulate(const std::string& setting, const std::string& data_path, std::size_t n,
                  std::size_t replicates, double rho, std::uint64_t seed, bool coverage,
                  std::size_t population_size, const std::string& out_path) {
  Population population;
  if (setting == "abortion") {
    if (data_path.empty()) throw ValidationError("--data is required for the abortion setting");
    population = build_population_abortion(data_path, seed);
  } else if (setting == "synthetic") {
    SyntheticPopulationConfig config;
    config.population_size = population_size;
    config.rho = rho;
    config.seed = seed;
    population = build_population_synthetic(config);
  } else {
    throw ValidationError("setting must be 'abortion' or 'synthetic'");
  }

  SimulationOptions options;
  options.sample_size = n;
  options.replicates = replicates;
  options.seed = seed;
  options.with_coverage = coverage;
  const SimulationResult result = run_monte_carlo(population, options);

  std::printf("population total Y_j = %.4f, %zu/%zu replicates used\n",
              result.population_total, result.replicates_used, result.replicates_requested);
  std::printf("%-24s %12s %10s %12s %14s\n", "estimator", "B", "RB%", "sqrt(VAR)", "MSE");
  auto row = [](const char* name, const EstimatorMetrics& m) {
    std::printf("%-24s %12.2f %10.2f %12.2f %14.2f\n", name, m.bias, 100.0 * m.relative_bias,
                m.sqrt_var, m.mse);
  };
  row("horvitz-thompson", result.ht);
  row("naive", result.naive);
  row("three-phase (estimated)", result.three_phase);
  row("three-phase (true)", result.three_phase_true);
  if (coverage && result.coverage >= 0.0) {
    std::printf("95%% interval coverage: %.1f%% (mean sqrt(V_r) = %.2f)\n",
                100.0 * result.coverage, result.mean_sqrt_vr);
  }
  if (result.failures > 0) {
    std::printf("note: %zu replicate(s) failed and were excluded\n", result.failures);
  }
  if (!out_path.empty()) {
    write_simulation_csv(result, out_path);
    std::printf("wrote %s\n", out_path.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-trait nonresponse weighting for survey estimates"};
  app.require_subcommand(1);

  CommonOptions common;
  int threads = 0;
  app.add_option("--threads", threads, "cap OpenMP parallelism (0 = default)");

  auto add_common = [&common](CLI::App* cmd, bool needs_input = true) {
    if (needs_input) {
      cmd->add_option("--input", common.input, "survey CSV path")->required();
    }
    cmd->add_option("--items", common.items,
                    "item column names (default: every non-design column)");
    cmd->add_option("--unit-id-col", common.unit_id_column, "unit id column");
    cmd->add_option("--pi-col", common.pi_column, "inclusion-probability column");
    cmd->add_option("--respondent-col", common.respondent_column, "unit-response flag column");
    cmd->add_option("--missing", common.missing, "missing-value sentinels");
    cmd->add_option("--population-size", common.population_size, "population size N");
    cmd->add_option("--config", common.config_path, "fit settings JSON");
    cmd->add_option("--p-floor", common.p_floor, "floor for unit-response probabilities");
    cmd->add_option("--q-floor", common.q_floor, "floor for item-response probabilities");
    cmd->add_option("--seed", common.seed, "seed for any randomized steps");
  };

  CLI::App* fit = app.add_subcommand("fit-2pl", "fit the latent trait model and report it");
  std::string scores_out;
  std::string matrix_mode = "auto";
  add_common(fit);
  fit->add_option("--scores-out", scores_out, "write per-respondent scores CSV");
  fit->add_option("--matrix", matrix_mode, "fit to: auto | indicators | values");

  CLI::App* diagnose = app.add_subcommand("diagnose", "goodness-of-fit battery");
  std::string diagnose_out;
  add_common(diagnose);
  diagnose->add_option("--out", diagnose_out, "write CSV report");
  diagnose->add_option("--matrix", matrix_mode, "fit to: auto | indicators | values");

  CLI::App* weights = app.add_subcommand("weights", "per-unit propensities and weights");
  std::string weights_out = "weights.csv";
  add_common(weights);
  weights->add_option("--out", weights_out, "output CSV path");

  CLI::App* estimate = app.add_subcommand("estimate", "population-total estimators");
  std::string item_name;
  std::string true_p_col, true_q_col;
  add_common(estimate);
  estimate->add_option("--item", item_name, "item column name or 1-based index")->required();
  estimate->add_option("--true-p-col", true_p_col, "column with true unit-response probs");
  estimate->add_option("--true-q-col", true_q_col, "column with true item-response probs");

  CLI::App* variance = app.add_subcommand("variance", "jackknife variance of the estimator");
  std::string replicates_out;
  add_common(variance);
  variance->add_option("--item", item_name, "item column name or 1-based index")->required();
  variance->add_option("--replicates-out", replicates_out, "write replicate weights CSV");

  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo study");
  std::string setting = "synthetic";
  std::string data_path;
  std::string sim_out;
  std::size_t sim_n = 200;
  std::size_t sim_m = 1000;
  double rho = 0.5;
  std::uint64_t sim_seed = 1;
  bool coverage = false;
  std::size_t sim_population = 2000;
  simulate->add_option("--setting", setting, "abortion | synthetic")->required();
  simulate->add_option("--data", data_path, "population CSV (abortion setting)");
  simulate->add_option("--n", sim_n, "sample size");
  simulate->add_option("--M", sim_m, "number of Monte Carlo replicates");
  simulate->add_option("--rho", rho, "item-latent correlation (synthetic)");
  simulate->add_option("--seed", sim_seed, "master seed");
  simulate->add_option("--population-size", sim_population, "population size (synthetic)");
  simulate->add_flag("--coverage", coverage, "compute jackknife interval coverage");
  simulate->add_option("--out", sim_out, "write results CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  set_thread_cap(threads);
  try {
    if (fit->parsed()) {
      cmd_fit_2pl(common, scores_out, matrix_mode);
    } else if (diagnose->parsed()) {
      cmd_diagnose(common, diagnose_out, matrix_mode);
    } else if (weights->parsed()) {
      cmd_weights(common, weights_out);
    } else if (estimate->parsed()) {
      cmd_estimate(common, item_name, true_p_col, true_q_col);
    } else if (variance->parsed()) {
      cmd_variance(common, item_name, replicates_out);
    } else if (simulate->parsed()) {
      cmd_simulate(setting, data_path, sim_n, sim_m, rho, sim_seed, coverage, sim_population,
                   sim_out);
    }
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
