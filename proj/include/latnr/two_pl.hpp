#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "latnr/quadrature.hpp"
#include "latnr/survey_data.hpp"

namespace latnr {

// Item parameters of the two-parameter logistic latent trait model:
// P(x_kl = 1 | theta_k) = logistic(beta0[l] + beta1[l] * theta_k).
struct TwoPLParams {
  std::vector<double> beta0;
  std::vector<double> beta1;

  std::size_t items() const { return beta0.size(); }
};

enum class ScoringMethod { kPosteriorMode, kPosteriorMean };
enum class LatentModel { kTwoPL, kRasch };

struct FitConfig {
  std::size_t quadrature_points = 21;
  double tol = 1e-5;             // EM stop: |delta objective| below this
  std::size_t max_iter = 500;
  ScoringMethod scoring = ScoringMethod::kPosteriorMode;
  LatentModel model = LatentModel::kTwoPL;
  bool parallel = true;          // use the OpenMP E-step kernel
  // Bayes-modal stabilization: weak normal priors on the item parameters
  // (slopes N(1, 2^2), intercepts N(0, 5^2)). Plain marginal ML diverges on
  // small near-separable samples -- slopes run away and the fitted
  // probabilities saturate -- while at survey-scale n the priors are
  // negligible. Disable for pure maximum likelihood.
  bool stabilize = true;
};

inline constexpr double kSlopePriorMean = 1.0;
inline constexpr double kSlopePriorSd = 2.0;
inline constexpr double kInterceptPriorSd = 5.0;

struct LatentFit {
  TwoPLParams params;
  std::vector<double> theta;        // per-unit score, aligned with input rows
  double loglik = 0.0;              // marginal log-likelihood at params
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<std::uint8_t> negative_slope;  // identifiability flags per item
  // Fit objective after each EM iteration: the marginal log-likelihood,
  // plus the log prior when stabilization is on. Nondecreasing by EM.
  std::vector<double> loglik_path;
};

// Response probability of one item at one latent value, overflow safe.
double item_response_prob(double beta0, double beta1, double theta);

// Marginal log-likelihood with theta integrated against the N(0,1) prior,
// approximated on the given quadrature rule. Throws NumericError naming the
// first unit whose marginal probability is not finite.
double marginal_loglik(const TwoPLParams& params, const ItemResponseMatrix& matrix,
                       const QuadratureRule& quad);

// Marginal maximum likelihood by the EM algorithm of Bock and Aitkin:
// posterior node weights per unique response pattern in the E-step, one
// weighted logistic regression per item in the M-step, then empirical Bayes
// scoring of every row. Constant item columns raise ValidationError; hitting
// max_iter flags converged = false instead of throwing.
LatentFit fit_2pl_em(const ItemResponseMatrix& matrix, const FitConfig& config);

// Same routine with all item slopes constrained to one shared value.
LatentFit fit_rasch(const ItemResponseMatrix& matrix, const FitConfig& config);

// Posterior mode of theta for one response pattern under a N(0,1) prior.
// Newton on the strictly concave log-posterior with a grid plus golden
// section fallback; always returns a finite value.
double posterior_theta(const TwoPLParams& params, std::span<const std::uint8_t> pattern,
                       const QuadratureRule& quad);

// Posterior mean of theta for one response pattern (quadrature ratio).
double posterior_theta_mean(const TwoPLParams& params, std::span<const std::uint8_t> pattern,
                            const QuadratureRule& quad);

namespace detail {

// Deduplicated response patterns with multiplicities, in ascending key order
// so every downstream accumulation has a fixed deterministic order.
struct PatternTable {
  std::vector<std::uint64_t> key;
  std::vector<double> count;
  std::vector<std::size_t> row_pattern;  // input row -> pattern index
  std::size_t m = 0;

  bool bit(std::size_t pattern, std::size_t item) const {
    return (key[pattern] >> item) & 1ULL;
  }
  std::size_t size() const { return key.size(); }
};

PatternTable make_pattern_table(const ItemResponseMatrix& matrix);

// Expected-count tables produced by one E-step pass.
struct EStepTables {
  std::vector<double> node_total;     // n-bar_g, size G
  std::vector<double> node_correct;   // r-bar_lg, row-major m x G
  double loglik = 0.0;
};

// E-step over patterns. The parallel flavour distributes the per-pattern
// posterior computation across threads and keeps the accumulation order
// fixed, so its output is bit-identical to the serial reference.
EStepTables estep(const PatternTable& patterns, const TwoPLParams& params,
                  const QuadratureRule& quad, bool parallel);

// Expected complete-data log-likelihood of one item given the E-step tables
// (the M-step objective), and its analytic score in (beta0, beta1).
double mstep_item_value(const EStepTables& tables, const QuadratureRule& quad,
                        std::size_t item, double beta0, double beta1);
void mstep_item_score(const EStepTables& tables, const QuadratureRule& quad, std::size_t item,
                      double beta0, double beta1, double score[2]);

}  // namespace detail

}  // namespace latnr
