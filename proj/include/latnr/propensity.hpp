#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "latnr/survey_data.hpp"
#include "latnr/two_pl.hpp"

namespace latnr {

// Reserved unit id of the appended all-zero phantom row.
inline constexpr std::int64_t kPhantomUnitId = -1;

// Appends the phantom respondent (all items unanswered) to a respondent-only
// matrix. Throws ValidationError when the reserved id is already present.
ItemResponseMatrix augment_phantom(const ItemResponseMatrix& respondents);

// Stage I output: the latent fit on the phantom-augmented respondent matrix
// and a finite theta-hat for every sampled unit. Unit nonrespondents all
// share the phantom's score.
struct StageOneResult {
  LatentFit fit;
  std::vector<double> theta;  // aligned with the sample's units
  double theta_phantom = 0.0;
  // Posterior standard deviation of theta for the all-zero pattern; the
  // natural scale for spreading the nonrespondents' shared score.
  double theta_phantom_sd = 0.0;
};

StageOneResult estimate_thetas_stage1(const SurveySample& sample,
                                      const ItemResponseMatrix& matrix,
                                      const FitConfig& config);

// What to do when the response classes are separable on the covariate.
// Nonrespondents share one theta-hat by construction, so threshold
// separation is the expected case, not the exception.
enum class SeparationRemedy {
  kJitterThenFirth,  // jitter the shared value; penalized fit if still separated
  kJitter,
  kFirth,
  kNone,
};

struct PropensityConfig {
  SeparationRemedy remedy = SeparationRemedy::kJitterThenFirth;
  double jitter_sd = 0.1;
  std::uint64_t jitter_seed = 20240901;
  double tol = 1e-8;          // IRLS stop on max coefficient change
  std::size_t max_iter = 100;
  double p_floor = 0.01;
  // A fitted |alpha1| beyond this is treated as separation in disguise
  // (quasi-separated data can yield a finite but degenerate maximum).
  double extreme_slope = 8.0;
};

// Logistic response-propensity model p_k = logistic(alpha0 + alpha1 * theta
// [+ z'gamma]); `covariate` keeps the exact theta values used in the fit
// (after any jitter) so downstream weighting stays consistent with it.
struct PropensityModel {
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  std::vector<double> gamma;
  std::vector<double> fitted;     // floored p-hat per unit
  std::vector<double> covariate;  // theta actually used per unit
  bool separation_handled = false;
  bool used_firth = false;
  bool converged = false;
  double p_floor = 0.01;
};

// Maximum likelihood logistic regression of the unit-response flags on
// theta-hat (plus optional extra covariates, row-major n x t) by iteratively
// reweighted least squares. Throws ValidationError when only one response
// class is present; non-convergence after the remedy is flagged, not thrown.
// `observation_weights` (for example design weights 1/pi) turn the fit into
// weighted maximum likelihood; empty means unweighted, which is the default
// the estimators assume.
PropensityModel fit_response_logistic(const std::vector<double>& theta,
                                      const std::vector<std::uint8_t>& responded,
                                      const std::vector<double>* covariates,
                                      std::size_t covariate_count,
                                      const PropensityConfig& config,
                                      std::span<const double> observation_weights = {});

// Logistic evaluation clamped to [p_floor, 1).
double unit_response_prob(const PropensityModel& model, double theta,
                          std::span<const double> covariates = {});

// Fitted item-response probability q-hat_kj clamped to [q_floor, 1).
double item_response_prob_hat(const LatentFit& fit, double theta, std::size_t item,
                              double q_floor = 0.01);

// Same, at the theta the fit scored for one of its own rows.
double item_response_prob_hat(const LatentFit& fit, std::size_t unit, std::size_t item,
                              double q_floor);

}  // namespace latnr
