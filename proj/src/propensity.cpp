#include "latnr/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "latnr/errors.hpp"
#include "latnr/linalg.hpp"
#include "latnr/rng.hpp"

namespace latnr {

ItemResponseMatrix augment_phantom(const ItemResponseMatrix& respondents) {
  for (std::int64_t id : respondents.unit_id) {
    if (id == kPhantomUnitId) {
      throw ValidationError("matrix already contains the phantom unit; cannot augment twice");
    }
  }
  ItemResponseMatrix augmented(respondents.n + 1, respondents.m);
  augmented.x = respondents.x;
  augmented.x.resize((respondents.n + 1) * respondents.m, 0);
  augmented.unit_id = respondents.unit_id;
  augmented.unit_id.push_back(kPhantomUnitId);
  return augmented;
}

StageOneResult estimate_thetas_stage1(const SurveySample& sample,
                                      const ItemResponseMatrix& matrix,
                                      const FitConfig& config) {
  if (matrix.n != sample.n || matrix.m != sample.m) {
    throw ValidationError("indicator matrix does not match the sample");
  }
  std::vector<std::size_t> respondent_rows;
  for (std::size_t k = 0; k < sample.n; ++k) {
    if (sample.unit_respondent[k]) respondent_rows.push_back(k);
  }
  if (respondent_rows.empty()) throw ValidationError("no unit respondents in the sample");

  ItemResponseMatrix respondents(respondent_rows.size(), sample.m);
  for (std::size_t i = 0; i < respondent_rows.size(); ++i) {
    const std::size_t k = respondent_rows[i];
    respondents.unit_id[i] = sample.unit_id[k];
    for (std::size_t l = 0; l < sample.m; ++l) respondents.set(i, l, matrix(k, l) != 0);
  }

  StageOneResult result;
  const ItemResponseMatrix augmented = augment_phantom(respondents);
  result.fit = fit_2pl_em(augmented, config);
  result.theta_phantom = result.fit.theta.back();

  // Curvature of the log-posterior at the phantom's mode.
  double information = 1.0;
  for (std::size_t l = 0; l < sample.m; ++l) {
    const double q = item_response_prob(result.fit.params.beta0[l],
                                        result.fit.params.beta1[l], result.theta_phantom);
    information += result.fit.params.beta1[l] * result.fit.params.beta1[l] * q * (1.0 - q);
  }
  result.theta_phantom_sd = 1.0 / std::sqrt(information);

  result.theta.assign(sample.n, result.theta_phantom);
  for (std::size_t i = 0; i < respondent_rows.size(); ++i) {
    result.theta[respondent_rows[i]] = result.fit.theta[i];
  }
  return result;
}

namespace {

struct LogisticData {
  const std::vector<double>& design;  // row-major n x dim
  const std::vector<std::uint8_t>& response;
  std::size_t n;
  std::size_t dim;
  std::span<const double> obs_weight;  // empty = unweighted

  double eta(const std::vector<double>& beta, std::size_t i) const {
    double value = 0.0;
    for (std::size_t j = 0; j < dim; ++j) value += design[i * dim + j] * beta[j];
    return value;
  }
  double weight(std::size_t i) const { return obs_weight.empty() ? 1.0 : obs_weight[i]; }
};

double log_likelihood(const LogisticData& data, const std::vector<double>& beta) {
  double ll = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    const double eta = data.eta(beta, i);
    ll += data.weight(i) * (data.response[i] ? -softplus(-eta) : -softplus(eta));
  }
  return ll;
}

// Plain IRLS; returns true on convergence (max coefficient change < tol).
bool irls(const LogisticData& data, std::vector<double>& beta, double tol,
          std::size_t max_iter) {
  const std::size_t dim = data.dim;
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    std::vector<double> score(dim, 0.0);
    std::vector<double> info(dim * dim, 0.0);
    for (std::size_t i = 0; i < data.n; ++i) {
      const double p = logistic(data.eta(beta, i));
      const double ow = data.weight(i);
      const double resid = ow * (static_cast<double>(data.response[i]) - p);
      const double w = ow * std::max(p * (1.0 - p), 1e-12);
      for (std::size_t a = 0; a < dim; ++a) {
        const double xa = data.design[i * dim + a];
        score[a] += resid * xa;
        for (std::size_t b = a; b < dim; ++b) {
          info[a * dim + b] += w * xa * data.design[i * dim + b];
        }
      }
    }
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t b = 0; b < a; ++b) info[a * dim + b] = info[b * dim + a];

    std::vector<double> step = score;
    try {
      solve_dense(info, step, dim);
    } catch (const NumericError&) {
      return false;
    }
    double max_change = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      beta[j] += step[j];
      max_change = std::max(max_change, std::abs(step[j]));
    }
    if (!std::isfinite(max_change)) return false;
    if (max_change < tol) return true;
  }
  return false;
}

// Firth's penalized logistic regression: the Jeffreys-prior penalty keeps
// the estimates finite under separation. Newton steps on the modified score
// with halving on the penalized log-likelihood.
bool firth(const LogisticData& data, std::vector<double>& beta, double tol,
           std::size_t max_iter) {
  const std::size_t dim = data.dim;

  auto penalized = [&](const std::vector<double>& b) {
    std::vector<double> info(dim * dim, 0.0);
    for (std::size_t i = 0; i < data.n; ++i) {
      const double p = logistic(data.eta(b, i));
      const double w = data.weight(i) * std::max(p * (1.0 - p), 1e-300);
      for (std::size_t a = 0; a < dim; ++a)
        for (std::size_t c = a; c < dim; ++c)
          info[a * dim + c] += w * data.design[i * dim + a] * data.design[i * dim + c];
    }
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t c = 0; c < a; ++c) info[a * dim + c] = info[c * dim + a];
    double logdet = 0.0;
    const std::vector<double> lower = cholesky_lower(info, dim);
    for (std::size_t a = 0; a < dim; ++a) logdet += 2.0 * std::log(lower[a * dim + a]);
    return log_likelihood(data, b) + 0.5 * logdet;
  };

  double value = penalized(beta);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    std::vector<double> info(dim * dim, 0.0);
    std::vector<double> probs(data.n);
    for (std::size_t i = 0; i < data.n; ++i) {
      probs[i] = logistic(data.eta(beta, i));
      const double w = data.weight(i) * std::max(probs[i] * (1.0 - probs[i]), 1e-300);
      for (std::size_t a = 0; a < dim; ++a)
        for (std::size_t c = a; c < dim; ++c)
          info[a * dim + c] += w * data.design[i * dim + a] * data.design[i * dim + c];
    }
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t c = 0; c < a; ++c) info[a * dim + c] = info[c * dim + a];

    // Leverages h_i = w_i x_i' (X'WX)^-1 x_i via dim solves.
    std::vector<double> inverse(dim * dim, 0.0);
    for (std::size_t col = 0; col < dim; ++col) {
      std::vector<double> a_copy = info;
      std::vector<double> unit(dim, 0.0);
      unit[col] = 1.0;
      try {
        solve_dense(a_copy, unit, dim);
      } catch (const NumericError&) {
        return false;
      }
      for (std::size_t row = 0; row < dim; ++row) inverse[row * dim + col] = unit[row];
    }

    std::vector<double> score(dim, 0.0);
    for (std::size_t i = 0; i < data.n; ++i) {
      const double w = std::max(probs[i] * (1.0 - probs[i]), 1e-300);
      double quad = 0.0;
      for (std::size_t a = 0; a < dim; ++a)
        for (std::size_t c = 0; c < dim; ++c)
          quad += data.design[i * dim + a] * inverse[a * dim + c] * data.design[i * dim + c];
      const double h = w * quad;
      const double adjusted =
          static_cast<double>(data.response[i]) - probs[i] + h * (0.5 - probs[i]);
      for (std::size_t a = 0; a < dim; ++a) {
        score[a] += data.weight(i) * adjusted * data.design[i * dim + a];
      }
    }

    std::vector<double> step = score;
    std::vector<double> info_copy = info;
    try {
      solve_dense(info_copy, step, dim);
    } catch (const NumericError&) {
      return false;
    }
    double max_change = 0.0;
    for (double s : step) max_change = std::max(max_change, std::abs(s));
    if (max_change < tol) return true;

    double scale = 1.0;
    bool moved = false;
    for (int halving = 0; halving < 30; ++halving) {
      std::vector<double> candidate = beta;
      for (std::size_t j = 0; j < dim; ++j) candidate[j] += scale * step[j];
      const double cand_value = penalized(candidate);
      if (std::isfinite(cand_value) && cand_value >= value - 1e-12) {
        beta = std::move(candidate);
        value = cand_value;
        moved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!moved) return true;  // no ascent direction left; treat as converged
  }
  return false;
}

// Exact check for (quasi-)complete separation on a single covariate: the
// classes can be split by a threshold with at most boundary ties.
bool threshold_separated(const std::vector<double>& theta,
                         const std::vector<std::uint8_t>& responded) {
  double min1 = std::numeric_limits<double>::infinity();
  double max1 = -min1;
  double min0 = min1;
  double max0 = -min1;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (responded[i]) {
      min1 = std::min(min1, theta[i]);
      max1 = std::max(max1, theta[i]);
    } else {
      min0 = std::min(min0, theta[i]);
      max0 = std::max(max0, theta[i]);
    }
  }
  return max0 <= min1 || max1 <= min0;
}

}  // namespace

PropensityModel fit_response_logistic(const std::vector<double>& theta,
                                      const std::vector<std::uint8_t>& responded,
                                      const std::vector<double>* covariates,
                                      std::size_t covariate_count,
                                      const PropensityConfig& config,
                                      std::span<const double> observation_weights) {
  const std::size_t n = theta.size();
  if (responded.size() != n) throw ValidationError("theta and response flags differ in length");
  std::size_t positives = 0;
  for (std::uint8_t r : responded) positives += r;
  if (positives == 0 || positives == n) {
    throw ValidationError("both response classes must be present");
  }

  PropensityModel model;
  model.p_floor = config.p_floor;
  model.covariate = theta;

  const std::size_t dim = 2 + covariate_count;
  auto build_design = [&](const std::vector<double>& theta_used) {
    std::vector<double> design(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
      design[i * dim] = 1.0;
      design[i * dim + 1] = theta_used[i];
      for (std::size_t j = 0; j < covariate_count; ++j) {
        design[i * dim + 2 + j] = (*covariates)[i * covariate_count + j];
      }
    }
    return design;
  };

  const bool jitter_allowed = config.remedy == SeparationRemedy::kJitter ||
                              config.remedy == SeparationRemedy::kJitterThenFirth;
  bool jittered = false;
  auto apply_jitter = [&] {
    SplitMix64 rng(config.jitter_seed, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (!responded[i]) model.covariate[i] += config.jitter_sd * rng.next_normal();
    }
    jittered = true;
    model.separation_handled = true;
  };

  if (covariate_count == 0 && threshold_separated(theta, responded)) {
    model.separation_handled = true;
    if (jitter_allowed) apply_jitter();
  }

  const double intercept_start =
      std::log(static_cast<double>(positives) / static_cast<double>(n - positives));
  std::vector<double> beta(dim, 0.0);
  beta[0] = intercept_start;

  auto run_irls = [&] {
    const std::vector<double> design = build_design(model.covariate);
    const LogisticData data{design, responded, n, dim, observation_weights};
    std::fill(beta.begin(), beta.end(), 0.0);
    beta[0] = intercept_start;
    return irls(data, beta, config.tol, config.max_iter);
  };
  auto run_firth = [&] {
    const std::vector<double> design = build_design(model.covariate);
    const LogisticData data{design, responded, n, dim, observation_weights};
    std::fill(beta.begin(), beta.end(), 0.0);
    beta[0] = intercept_start;
    model.used_firth = true;
    model.separation_handled = true;
    return firth(data, beta, config.tol, config.max_iter);
  };
  // Divergent IRLS or an absurdly steep fitted slope both mean the classes
  // are (quasi-)separable on the covariate.
  auto degenerate = [&] { return !model.converged || std::abs(beta[1]) > config.extreme_slope; };

  if (config.remedy == SeparationRemedy::kFirth && model.separation_handled) {
    model.converged = run_firth();
  } else {
    model.converged = run_irls();
    if (degenerate()) {
      switch (config.remedy) {
        case SeparationRemedy::kNone:
          break;
        case SeparationRemedy::kJitter:
          if (!jittered) {
            apply_jitter();
            model.converged = run_irls();
          }
          break;
        case SeparationRemedy::kFirth:
          model.converged = run_firth();
          break;
        case SeparationRemedy::kJitterThenFirth:
          if (!jittered) {
            apply_jitter();
            model.converged = run_irls();
          }
          if (degenerate()) model.converged = run_firth();
          break;
      }
    }
  }

  model.alpha0 = beta[0];
  model.alpha1 = beta[1];
  model.gamma.assign(beta.begin() + 2, beta.end());
  model.fitted.resize(n);
  const std::vector<double> design = build_design(model.covariate);
  const LogisticData data{design, responded, n, dim, observation_weights};
  for (std::size_t i = 0; i < n; ++i) {
    const double p = logistic(data.eta(beta, i));
    model.fitted[i] = std::clamp(p, config.p_floor, 1.0 - 1e-15);
  }
  return model;
}

double unit_response_prob(const PropensityModel& model, double theta,
                          std::span<const double> covariates) {
  double eta = model.alpha0 + model.alpha1 * theta;
  for (std::size_t j = 0; j < covariates.size() && j < model.gamma.size(); ++j) {
    eta += model.gamma[j] * covariates[j];
  }
  return std::clamp(logistic(eta), model.p_floor, 1.0 - 1e-15);
}

double item_response_prob_hat(const LatentFit& fit, double theta, std::size_t item,
                              double q_floor) {
  const double q = item_response_prob(fit.params.beta0[item], fit.params.beta1[item], theta);
  return std::clamp(q, q_floor, 1.0 - 1e-15);
}

double item_response_prob_hat(const LatentFit& fit, std::size_t unit, std::size_t item,
                              double q_floor) {
  return item_response_prob_hat(fit, fit.theta[unit], item, q_floor);
}

}  // namespace latnr
