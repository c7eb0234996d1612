#include "latnr/two_pl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "latnr/errors.hpp"
#include "latnr/linalg.hpp"
#include "latnr/parallel.hpp"

namespace latnr {

double item_response_prob(double beta0, double beta1, double theta) {
  return logistic(beta0 + beta1 * theta);
}

namespace detail {

PatternTable make_pattern_table(const ItemResponseMatrix& matrix) {
  if (matrix.m > 64) throw ValidationError("more than 64 items not supported");
  PatternTable table;
  table.m = matrix.m;
  std::map<std::uint64_t, double> counts;
  std::vector<std::uint64_t> row_key(matrix.n);
  for (std::size_t k = 0; k < matrix.n; ++k) {
    std::uint64_t key = 0;
    for (std::size_t l = 0; l < matrix.m; ++l) {
      if (matrix(k, l)) key |= (1ULL << l);
    }
    row_key[k] = key;
    counts[key] += 1.0;
  }
  table.key.reserve(counts.size());
  table.count.reserve(counts.size());
  std::map<std::uint64_t, std::size_t> index_of;
  for (const auto& [key, count] : counts) {
    index_of[key] = table.key.size();
    table.key.push_back(key);
    table.count.push_back(count);
  }
  table.row_pattern.resize(matrix.n);
  for (std::size_t k = 0; k < matrix.n; ++k) table.row_pattern[k] = index_of[row_key[k]];
  return table;
}

namespace {

// log q and log(1-q) for every item at every node.
struct NodeLogProbs {
  std::vector<double> log_q;    // m x G
  std::vector<double> log_1mq;  // m x G
};

NodeLogProbs node_log_probs(const TwoPLParams& params, const QuadratureRule& quad) {
  const std::size_t m = params.items();
  const std::size_t g_count = quad.size();
  NodeLogProbs probs;
  probs.log_q.resize(m * g_count);
  probs.log_1mq.resize(m * g_count);
  for (std::size_t l = 0; l < m; ++l) {
    for (std::size_t g = 0; g < g_count; ++g) {
      const double eta = params.beta0[l] + params.beta1[l] * quad.nodes[g];
      probs.log_q[l * g_count + g] = -softplus(-eta);
      probs.log_1mq[l * g_count + g] = -softplus(eta);
    }
  }
  return probs;
}

// Joint log-likelihood of one pattern at every node, plus the log prior
// weights; returns the log marginal via log-sum-exp and leaves the
// normalized posterior in `posterior`.
double pattern_posterior(const PatternTable& patterns, std::size_t u,
                         const NodeLogProbs& probs, const QuadratureRule& quad,
                         std::span<double> posterior) {
  const std::size_t g_count = quad.size();
  const std::size_t m = patterns.m;
  double max_term = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < g_count; ++g) {
    double s = std::log(quad.weights[g]);
    for (std::size_t l = 0; l < m; ++l) {
      s += patterns.bit(u, l) ? probs.log_q[l * g_count + g] : probs.log_1mq[l * g_count + g];
    }
    posterior[g] = s;
    max_term = std::max(max_term, s);
  }
  double sum = 0.0;
  for (std::size_t g = 0; g < g_count; ++g) sum += std::exp(posterior[g] - max_term);
  const double log_marginal = max_term + std::log(sum);
  for (std::size_t g = 0; g < g_count; ++g) {
    posterior[g] = std::exp(posterior[g] - log_marginal);
  }
  return log_marginal;
}

}  // namespace

EStepTables estep(const PatternTable& patterns, const TwoPLParams& params,
                  const QuadratureRule& quad, bool parallel) {
  const std::size_t p_count = patterns.size();
  const std::size_t g_count = quad.size();
  const std::size_t m = patterns.m;
  const NodeLogProbs probs = node_log_probs(params, quad);

  // Phase 1: per-pattern posteriors, each written to its own slot, so the
  // schedule cannot change the result.
  std::vector<double> posterior(p_count * g_count);
  std::vector<double> log_marginal(p_count);
  auto body = [&](std::size_t u) {
    log_marginal[u] = pattern_posterior(patterns, u, probs, quad,
                                        {posterior.data() + u * g_count, g_count});
  };
  if (parallel) {
    parallel_for(p_count, body);
  } else {
    serial_for(p_count, body);
  }

  // Phase 2: fixed-order accumulation into the expected-count tables.
  EStepTables tables;
  tables.node_total.assign(g_count, 0.0);
  tables.node_correct.assign(m * g_count, 0.0);
  for (std::size_t u = 0; u < p_count; ++u) {
    const double weight = patterns.count[u];
    tables.loglik += weight * log_marginal[u];
    const double* post = posterior.data() + u * g_count;
    for (std::size_t g = 0; g < g_count; ++g) {
      tables.node_total[g] += weight * post[g];
    }
    for (std::size_t l = 0; l < m; ++l) {
      if (!patterns.bit(u, l)) continue;
      double* correct = tables.node_correct.data() + l * g_count;
      for (std::size_t g = 0; g < g_count; ++g) correct[g] += weight * post[g];
    }
  }
  return tables;
}

double mstep_item_value(const EStepTables& tables, const QuadratureRule& quad,
                        std::size_t item, double beta0, double beta1) {
  const std::size_t g_count = quad.size();
  const double* correct = tables.node_correct.data() + item * g_count;
  double v = 0.0;
  for (std::size_t g = 0; g < g_count; ++g) {
    const double eta = beta0 + beta1 * quad.nodes[g];
    v += correct[g] * eta - tables.node_total[g] * softplus(eta);
  }
  return v;
}

void mstep_item_score(const EStepTables& tables, const QuadratureRule& quad, std::size_t item,
                      double beta0, double beta1, double score[2]) {
  const std::size_t g_count = quad.size();
  const double* correct = tables.node_correct.data() + item * g_count;
  score[0] = score[1] = 0.0;
  for (std::size_t g = 0; g < g_count; ++g) {
    const double t = quad.nodes[g];
    const double resid = correct[g] - tables.node_total[g] * logistic(beta0 + beta1 * t);
    score[0] += resid;
    score[1] += resid * t;
  }
}

}  // namespace detail

double marginal_loglik(const TwoPLParams& params, const ItemResponseMatrix& matrix,
                       const QuadratureRule& quad) {
  if (matrix.m != params.items()) {
    throw ValidationError("matrix and parameters disagree on the item count");
  }
  const detail::PatternTable patterns = detail::make_pattern_table(matrix);
  const detail::EStepTables tables = detail::estep(patterns, params, quad, false);
  if (!std::isfinite(tables.loglik)) {
    // Rescan per unit to name the offender.
    for (std::size_t k = 0; k < matrix.n; ++k) {
      const std::size_t u = patterns.row_pattern[k];
      const detail::PatternTable single{
          {patterns.key[u]}, {1.0}, {0}, patterns.m};
      const detail::EStepTables one = detail::estep(single, params, quad, false);
      if (!std::isfinite(one.loglik)) {
        throw NumericError("non-finite marginal likelihood for unit row " + std::to_string(k));
      }
    }
    throw NumericError("non-finite marginal log-likelihood");
  }
  return tables.loglik;
}

namespace {

// Log prior of one item's parameters under the stabilization settings.
inline double item_log_prior(double b0, double b1) {
  const double d1 = (b1 - kSlopePriorMean) / kSlopePriorSd;
  const double d0 = b0 / kInterceptPriorSd;
  return -0.5 * (d1 * d1 + d0 * d0);
}

// Expected complete-data log-likelihood for one item (plus the optional
// prior) and its gradient / Hessian in (beta0, beta1); concave.
struct ItemObjective {
  const double* correct;  // r-bar_g
  const double* total;    // n-bar_g
  const std::vector<double>& nodes;
  std::size_t g_count;
  bool stabilize;

  double value(double b0, double b1) const {
    double v = 0.0;
    for (std::size_t g = 0; g < g_count; ++g) {
      const double eta = b0 + b1 * nodes[g];
      v += correct[g] * eta - total[g] * softplus(eta);
    }
    if (stabilize) v += item_log_prior(b0, b1);
    return v;
  }
  void gradient_hessian(double b0, double b1, double grad[2], double hess[2][2]) const {
    grad[0] = grad[1] = 0.0;
    hess[0][0] = hess[0][1] = hess[1][0] = hess[1][1] = 0.0;
    for (std::size_t g = 0; g < g_count; ++g) {
      const double t = nodes[g];
      const double q = logistic(b0 + b1 * t);
      const double resid = correct[g] - total[g] * q;
      grad[0] += resid;
      grad[1] += resid * t;
      const double info = total[g] * q * (1.0 - q);
      hess[0][0] -= info;
      hess[0][1] -= info * t;
      hess[1][1] -= info * t * t;
    }
    hess[1][0] = hess[0][1];
    if (stabilize) {
      grad[0] -= b0 / (kInterceptPriorSd * kInterceptPriorSd);
      grad[1] -= (b1 - kSlopePriorMean) / (kSlopePriorSd * kSlopePriorSd);
      hess[0][0] -= 1.0 / (kInterceptPriorSd * kInterceptPriorSd);
      hess[1][1] -= 1.0 / (kSlopePriorSd * kSlopePriorSd);
    }
  }
};

// Newton ascent with step halving for the per-item M-step.
void maximize_item(const ItemObjective& objective, double& b0, double& b1) {
  double value = objective.value(b0, b1);
  for (int iter = 0; iter < 100; ++iter) {
    double grad[2];
    double hess[2][2];
    objective.gradient_hessian(b0, b1, grad, hess);
    if (std::abs(grad[0]) < 1e-10 && std::abs(grad[1]) < 1e-10) break;
    const double neg[2][2] = {{-hess[0][0], -hess[0][1]}, {-hess[1][0], -hess[1][1]}};
    double step[2];
    if (!solve_2x2(neg, grad, step)) break;
    double scale = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving) {
      const double cand0 = b0 + scale * step[0];
      const double cand1 = b1 + scale * step[1];
      const double cand_value = objective.value(cand0, cand1);
      if (cand_value >= value) {
        b0 = cand0;
        b1 = cand1;
        value = cand_value;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;
  }
}

// Shared-slope M-step: one Newton system over (beta0_1..beta0_m, beta1).
void maximize_rasch(const detail::EStepTables& tables, const QuadratureRule& quad,
                    std::vector<double>& beta0, double& shared_slope, bool stabilize) {
  const std::size_t m = beta0.size();
  const std::size_t g_count = quad.size();
  const std::size_t dim = m + 1;

  auto value_at = [&](const std::vector<double>& b0, double b1) {
    double v = 0.0;
    for (std::size_t l = 0; l < m; ++l) {
      const double* correct = tables.node_correct.data() + l * g_count;
      for (std::size_t g = 0; g < g_count; ++g) {
        const double eta = b0[l] + b1 * quad.nodes[g];
        v += correct[g] * eta - tables.node_total[g] * softplus(eta);
      }
    }
    if (stabilize) {
      const double d1 = (b1 - kSlopePriorMean) / kSlopePriorSd;
      v -= 0.5 * d1 * d1;
      for (std::size_t l = 0; l < m; ++l) {
        const double d0 = b0[l] / kInterceptPriorSd;
        v -= 0.5 * d0 * d0;
      }
    }
    return v;
  };

  double value = value_at(beta0, shared_slope);
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<double> grad(dim, 0.0);
    std::vector<double> neg_hess(dim * dim, 0.0);
    for (std::size_t l = 0; l < m; ++l) {
      const double* correct = tables.node_correct.data() + l * g_count;
      for (std::size_t g = 0; g < g_count; ++g) {
        const double t = quad.nodes[g];
        const double q = logistic(beta0[l] + shared_slope * t);
        const double resid = correct[g] - tables.node_total[g] * q;
        grad[l] += resid;
        grad[m] += resid * t;
        const double info = tables.node_total[g] * q * (1.0 - q);
        neg_hess[l * dim + l] += info;
        neg_hess[l * dim + m] += info * t;
        neg_hess[m * dim + l] += info * t;
        neg_hess[m * dim + m] += info * t * t;
      }
    }
    if (stabilize) {
      for (std::size_t l = 0; l < m; ++l) {
        grad[l] -= beta0[l] / (kInterceptPriorSd * kInterceptPriorSd);
        neg_hess[l * dim + l] += 1.0 / (kInterceptPriorSd * kInterceptPriorSd);
      }
      grad[m] -= (shared_slope - kSlopePriorMean) / (kSlopePriorSd * kSlopePriorSd);
      neg_hess[m * dim + m] += 1.0 / (kSlopePriorSd * kSlopePriorSd);
    }
    double grad_max = 0.0;
    for (double g : grad) grad_max = std::max(grad_max, std::abs(g));
    if (grad_max < 1e-10) break;
    std::vector<double> step = grad;
    solve_dense(neg_hess, step, dim);
    double scale = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving) {
      std::vector<double> cand0 = beta0;
      for (std::size_t l = 0; l < m; ++l) cand0[l] += scale * step[l];
      const double cand1 = shared_slope + scale * step[m];
      const double cand_value = value_at(cand0, cand1);
      if (cand_value >= value) {
        beta0 = std::move(cand0);
        shared_slope = cand1;
        value = cand_value;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;
  }
}

double pattern_log_posterior(const TwoPLParams& params, std::uint64_t key, double theta) {
  double v = -0.5 * theta * theta;
  for (std::size_t l = 0; l < params.items(); ++l) {
    const double eta = params.beta0[l] + params.beta1[l] * theta;
    v += ((key >> l) & 1ULL) ? -softplus(-eta) : -softplus(eta);
  }
  return v;
}

double posterior_mode_for_key(const TwoPLParams& params, std::uint64_t key) {
  // Newton on the strictly concave log-posterior.
  double theta = 0.0;
  bool ok = false;
  for (int iter = 0; iter < 100; ++iter) {
    double score = -theta;
    double info = 1.0;
    for (std::size_t l = 0; l < params.items(); ++l) {
      const double q = logistic(params.beta0[l] + params.beta1[l] * theta);
      const double x = static_cast<double>((key >> l) & 1ULL);
      score += params.beta1[l] * (x - q);
      info += params.beta1[l] * params.beta1[l] * q * (1.0 - q);
    }
    const double step = score / info;
    theta += step;
    if (!std::isfinite(theta)) break;
    if (std::abs(step) < 1e-12) {
      ok = true;
      break;
    }
  }
  if (ok && std::isfinite(theta)) return theta;

  // Fallback: coarse grid then golden-section refinement.
  double best_theta = 0.0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 1200; ++i) {
    const double t = -6.0 + 12.0 * i / 1200.0;
    const double v = pattern_log_posterior(params, key, t);
    if (v > best_value) {
      best_value = v;
      best_theta = t;
    }
  }
  double lo = best_theta - 0.02;
  double hi = best_theta + 0.02;
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - golden * (hi - lo);
  double x2 = lo + golden * (hi - lo);
  double f1 = pattern_log_posterior(params, key, x1);
  double f2 = pattern_log_posterior(params, key, x2);
  for (int iter = 0; iter < 80; ++iter) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + golden * (hi - lo);
      f2 = pattern_log_posterior(params, key, x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - golden * (hi - lo);
      f1 = pattern_log_posterior(params, key, x1);
    }
  }
  return 0.5 * (lo + hi);
}

double posterior_mean_for_key(const TwoPLParams& params, std::uint64_t key,
                              const QuadratureRule& quad) {
  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(quad.size());
  for (std::size_t g = 0; g < quad.size(); ++g) {
    double s = std::log(quad.weights[g]);
    for (std::size_t l = 0; l < params.items(); ++l) {
      const double eta = params.beta0[l] + params.beta1[l] * quad.nodes[g];
      s += ((key >> l) & 1ULL) ? -softplus(-eta) : -softplus(eta);
    }
    terms[g] = s;
    max_term = std::max(max_term, s);
  }
  double numer = 0.0;
  double denom = 0.0;
  for (std::size_t g = 0; g < quad.size(); ++g) {
    const double w = std::exp(terms[g] - max_term);
    numer += w * quad.nodes[g];
    denom += w;
  }
  return numer / denom;
}

std::uint64_t pack_pattern(std::span<const std::uint8_t> pattern) {
  std::uint64_t key = 0;
  for (std::size_t l = 0; l < pattern.size(); ++l) {
    if (pattern[l]) key |= (1ULL << l);
  }
  return key;
}

LatentFit run_em(const ItemResponseMatrix& matrix, const FitConfig& config) {
  const std::size_t m = matrix.m;
  if (m < 3) throw ValidationError("latent trait fit needs at least 3 items");
  const detail::PatternTable patterns = detail::make_pattern_table(matrix);

  double total = 0.0;
  for (double c : patterns.count) total += c;
  for (std::size_t l = 0; l < m; ++l) {
    double correct = 0.0;
    for (std::size_t u = 0; u < patterns.size(); ++u) {
      if (patterns.bit(u, l)) correct += patterns.count[u];
    }
    if (correct == 0.0 || correct == total) {
      throw ValidationError("item " + std::to_string(l + 1) +
                            " has constant responses; intercept is not estimable");
    }
  }

  const QuadratureRule quad = gauss_hermite_normal(config.quadrature_points);
  LatentFit fit;
  fit.params.beta0.resize(m);
  fit.params.beta1.assign(m, 1.0);
  for (std::size_t l = 0; l < m; ++l) {
    double correct = 0.0;
    for (std::size_t u = 0; u < patterns.size(); ++u) {
      if (patterns.bit(u, l)) correct += patterns.count[u];
    }
    const double p = correct / total;
    fit.params.beta0[l] = std::log(p / (1.0 - p));
  }
  double shared_slope = 1.0;

  auto log_prior = [&]() {
    if (!config.stabilize) return 0.0;
    if (config.model == LatentModel::kRasch) {
      const double d1 = (shared_slope - kSlopePriorMean) / kSlopePriorSd;
      double v = -0.5 * d1 * d1;
      for (std::size_t l = 0; l < m; ++l) {
        const double d0 = fit.params.beta0[l] / kInterceptPriorSd;
        v -= 0.5 * d0 * d0;
      }
      return v;
    }
    double v = 0.0;
    for (std::size_t l = 0; l < m; ++l) {
      v += item_log_prior(fit.params.beta0[l], fit.params.beta1[l]);
    }
    return v;
  };

  double previous = -std::numeric_limits<double>::infinity();
  for (std::size_t iter = 1; iter <= config.max_iter; ++iter) {
    const detail::EStepTables tables =
        detail::estep(patterns, fit.params, quad, config.parallel);
    if (!std::isfinite(tables.loglik)) {
      throw NumericError("non-finite marginal log-likelihood during EM");
    }
    const double objective = tables.loglik + log_prior();
    fit.loglik_path.push_back(objective);
    fit.loglik = tables.loglik;
    fit.iterations = iter;
    if (std::abs(objective - previous) < config.tol) {
      // Parameters are unchanged since the value above was computed, so the
      // reported loglik matches the returned parameters.
      fit.converged = true;
      break;
    }
    previous = objective;
    if (config.model == LatentModel::kRasch) {
      maximize_rasch(tables, quad, fit.params.beta0, shared_slope, config.stabilize);
      std::fill(fit.params.beta1.begin(), fit.params.beta1.end(), shared_slope);
    } else {
      for (std::size_t l = 0; l < m; ++l) {
        const ItemObjective objective_l{tables.node_correct.data() + l * quad.size(),
                                        tables.node_total.data(), quad.nodes, quad.size(),
                                        config.stabilize};
        maximize_item(objective_l, fit.params.beta0[l], fit.params.beta1[l]);
      }
    }
  }
  if (!fit.converged) {
    // One extra pass so the report reflects the final M-step.
    const detail::EStepTables tables =
        detail::estep(patterns, fit.params, quad, config.parallel);
    fit.loglik_path.push_back(tables.loglik + log_prior());
    fit.loglik = tables.loglik;
  }

  fit.negative_slope.assign(m, 0);
  for (std::size_t l = 0; l < m; ++l) {
    if (fit.params.beta1[l] < 0.0) fit.negative_slope[l] = 1;
  }

  // Empirical Bayes scores, one evaluation per unique pattern.
  std::vector<double> pattern_theta(patterns.size());
  for (std::size_t u = 0; u < patterns.size(); ++u) {
    pattern_theta[u] = config.scoring == ScoringMethod::kPosteriorMean
                           ? posterior_mean_for_key(fit.params, patterns.key[u], quad)
                           : posterior_mode_for_key(fit.params, patterns.key[u]);
  }
  fit.theta.resize(matrix.n);
  for (std::size_t k = 0; k < matrix.n; ++k) {
    fit.theta[k] = pattern_theta[patterns.row_pattern[k]];
  }
  return fit;
}

}  // namespace

LatentFit fit_2pl_em(const ItemResponseMatrix& matrix, const FitConfig& config) {
  FitConfig local = config;
  local.model = LatentModel::kTwoPL;
  return run_em(matrix, local);
}

LatentFit fit_rasch(const ItemResponseMatrix& matrix, const FitConfig& config) {
  FitConfig local = config;
  local.model = LatentModel::kRasch;
  return run_em(matrix, local);
}

double posterior_theta(const TwoPLParams& params, std::span<const std::uint8_t> pattern,
                       const QuadratureRule& quad) {
  (void)quad;
  return posterior_mode_for_key(params, pack_pattern(pattern));
}

double posterior_theta_mean(const TwoPLParams& params, std::span<const std::uint8_t> pattern,
                            const QuadratureRule& quad) {
  return posterior_mean_for_key(params, pack_pattern(pattern), quad);
}

}  // namespace latnr
