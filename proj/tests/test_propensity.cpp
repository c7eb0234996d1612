#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "latnr/errors.hpp"
#include "latnr/linalg.hpp"
#include "latnr/propensity.hpp"
#include "oracles.hpp"

using namespace latnr;

TEST_CASE("phantom augmentation") {
  ItemResponseMatrix matrix(5, 4);
  for (std::size_t k = 0; k < 5; ++k) {
    matrix.unit_id[k] = static_cast<std::int64_t>(k + 1);
    for (std::size_t l = 0; l < 4; ++l) matrix.set(k, l, (k + l) % 2 == 0);
  }
  const ItemResponseMatrix augmented = augment_phantom(matrix);
  REQUIRE(augmented.n == 6);
  CHECK(augmented.unit_id.back() == kPhantomUnitId);
  for (std::size_t l = 0; l < 4; ++l) CHECK(augmented(5, l) == 0);
  CHECK(raw_scores(augmented).back() == 0);

  CHECK_THROWS_AS(augment_phantom(augmented), ValidationError);
}

namespace {

// Sample with drawn unit nonresponse and item nonresponse, for stage tests.
struct PipelineData {
  SurveySample sample;
  ItemResponseMatrix matrix;
};

PipelineData make_pipeline_data(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed, 0);
  const std::size_t m = 4;
  PipelineData data;
  data.sample.n = n;
  data.sample.m = m;
  data.sample.population_size = n * 10;
  data.sample.pi.assign(n, 0.1);
  data.sample.unit_id.resize(n);
  data.sample.y.assign(n * m, std::numeric_limits<double>::quiet_NaN());
  data.sample.unit_respondent.assign(n, 0);
  data.matrix = ItemResponseMatrix(n, m);
  for (std::size_t k = 0; k < n; ++k) {
    data.sample.unit_id[k] = static_cast<std::int64_t>(k);
    data.matrix.unit_id[k] = static_cast<std::int64_t>(k);
    const double theta = rng.next_normal();
    const bool responds = rng.next_bernoulli(logistic(0.8 + theta));
    if (!responds) continue;
    int score = 0;
    for (std::size_t l = 0; l < m; ++l) {
      const bool answered = rng.next_bernoulli(logistic(0.7 + 1.5 * theta));
      if (answered) {
        data.matrix.set(k, l, true);
        data.sample.y[k * m + l] = 1.0;
        ++score;
      }
    }
    data.sample.unit_respondent[k] = score > 0 ? 1 : 0;
  }
  return data;
}

}  // namespace

TEST_CASE("stage one scores every sampled unit") {
  const PipelineData data = make_pipeline_data(300, 17);
  const StageOneResult stage1 = estimate_thetas_stage1(data.sample, data.matrix, {});
  REQUIRE(stage1.theta.size() == data.sample.n);

  double min_respondent = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < data.sample.n; ++k) {
    CHECK(std::isfinite(stage1.theta[k]));
    if (data.sample.unit_respondent[k]) {
      min_respondent = std::min(min_respondent, stage1.theta[k]);
    } else {
      // Nonrespondents all share the phantom's score.
      CHECK(stage1.theta[k] == stage1.theta_phantom);
    }
  }
  bool slopes_positive = true;
  for (double b1 : stage1.fit.params.beta1) slopes_positive = slopes_positive && b1 > 0.0;
  if (slopes_positive) CHECK(stage1.theta_phantom <= min_respondent);
}

TEST_CASE("stage one requires respondents") {
  PipelineData data = make_pipeline_data(20, 3);
  std::fill(data.sample.unit_respondent.begin(), data.sample.unit_respondent.end(), 0);
  data.sample.y.assign(data.sample.n * data.sample.m,
                       std::numeric_limits<double>::quiet_NaN());
  data.matrix.x.assign(data.matrix.x.size(), 0);
  CHECK_THROWS_AS(estimate_thetas_stage1(data.sample, data.matrix, FitConfig{}),
                  ValidationError);
}

TEST_CASE("canonical separation is detected and remedied") {
  const std::vector<double> theta = {-2.0, -1.0, 1.0, 2.0};
  const std::vector<std::uint8_t> responded = {0, 0, 1, 1};
  PropensityConfig config;
  const PropensityModel model = fit_response_logistic(theta, responded, nullptr, 0, config);
  CHECK(model.separation_handled);
  CHECK(model.converged);
  CHECK(std::isfinite(model.alpha0));
  CHECK(std::isfinite(model.alpha1));
  for (double p : model.fitted) {
    CHECK(p >= config.p_floor);
    CHECK(p < 1.0);
  }
}

TEST_CASE("logistic recovery at the generating parameters") {
  const std::size_t n = 10000;
  SplitMix64 rng(99, 0);
  std::vector<double> theta(n);
  std::vector<std::uint8_t> responded(n);
  for (std::size_t i = 0; i < n; ++i) {
    theta[i] = rng.next_normal();
    responded[i] = rng.next_bernoulli(logistic(0.7 + theta[i])) ? 1 : 0;
  }
  const PropensityModel model = fit_response_logistic(theta, responded, nullptr, 0, {});
  CHECK(model.converged);
  CHECK_FALSE(model.separation_handled);
  CHECK(std::abs(model.alpha0 - 0.7) < 0.15);
  CHECK(std::abs(model.alpha1 - 1.0) < 0.15);
}

TEST_CASE("null generator gives a flat propensity") {
  const std::size_t n = 20000;
  SplitMix64 rng(123, 0);
  std::vector<double> theta(n);
  std::vector<std::uint8_t> responded(n);
  double rate = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    theta[i] = rng.next_normal();
    responded[i] = rng.next_bernoulli(0.6) ? 1 : 0;
    rate += responded[i];
  }
  rate /= static_cast<double>(n);
  const PropensityModel model = fit_response_logistic(theta, responded, nullptr, 0, {});
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(model.fitted[i] == doctest::Approx(rate).epsilon(0.05));
  }
}

TEST_CASE("single-class input is rejected") {
  const std::vector<double> theta = {0.1, 0.2, 0.3};
  const std::vector<std::uint8_t> all_ones = {1, 1, 1};
  CHECK_THROWS_AS(fit_response_logistic(theta, all_ones, nullptr, 0, {}), ValidationError);
}

TEST_CASE("shifting the covariate shifts only the intercept") {
  const std::size_t n = 3000;
  SplitMix64 rng(7, 7);
  std::vector<double> theta(n), shifted(n);
  std::vector<std::uint8_t> responded(n);
  const double shift = 0.83;
  for (std::size_t i = 0; i < n; ++i) {
    theta[i] = rng.next_normal();
    shifted[i] = theta[i] + shift;
    responded[i] = rng.next_bernoulli(logistic(0.4 + 0.9 * theta[i])) ? 1 : 0;
  }
  const PropensityModel base = fit_response_logistic(theta, responded, nullptr, 0, {});
  const PropensityModel moved = fit_response_logistic(shifted, responded, nullptr, 0, {});
  REQUIRE(base.converged);
  REQUIRE(moved.converged);
  CHECK(moved.alpha1 == doctest::Approx(base.alpha1).epsilon(1e-6));
  CHECK(moved.alpha0 == doctest::Approx(base.alpha0 - base.alpha1 * shift).epsilon(1e-6));
  for (std::size_t i = 0; i < n; i += 97) {
    CHECK(moved.fitted[i] == doctest::Approx(base.fitted[i]).epsilon(1e-8));
  }
}

TEST_CASE("design-weighted likelihood option") {
  const std::size_t n = 4000;
  SplitMix64 rng(55, 1);
  std::vector<double> theta(n), weights(n);
  std::vector<std::uint8_t> responded(n);
  for (std::size_t i = 0; i < n; ++i) {
    theta[i] = rng.next_normal();
    responded[i] = rng.next_bernoulli(logistic(0.5 + theta[i])) ? 1 : 0;
    weights[i] = 1.0 + rng.next_double();
  }
  const PropensityModel plain = fit_response_logistic(theta, responded, nullptr, 0, {});
  const std::vector<double> uniform(n, 3.7);
  const PropensityModel scaled =
      fit_response_logistic(theta, responded, nullptr, 0, {}, uniform);
  // A constant weight rescales the likelihood without moving the maximum.
  CHECK(scaled.alpha0 == doctest::Approx(plain.alpha0).epsilon(1e-8));
  CHECK(scaled.alpha1 == doctest::Approx(plain.alpha1).epsilon(1e-8));

  const PropensityModel weighted =
      fit_response_logistic(theta, responded, nullptr, 0, {}, weights);
  CHECK(weighted.converged);
  CHECK(std::isfinite(weighted.alpha1));
}

TEST_CASE("probability evaluators clamp as configured") {
  PropensityModel model;
  model.alpha0 = 0.0;
  model.alpha1 = 1.0;
  model.p_floor = 0.01;
  CHECK(unit_response_prob(model, 0.0) == doctest::Approx(0.5));
  CHECK(unit_response_prob(model, 1.0) > unit_response_prob(model, 0.0));
  CHECK(unit_response_prob(model, -40.0) == doctest::Approx(0.01));

  LatentFit fit;
  fit.params.beta0 = {0.0, 1.0, -1.0};
  fit.params.beta1 = {1.0, 2.0, 0.5};
  CHECK(item_response_prob_hat(fit, 0.0, 0) == doctest::Approx(0.5));
  CHECK(item_response_prob_hat(fit, 1.0, 1) > item_response_prob_hat(fit, 0.0, 1));
  CHECK(item_response_prob_hat(fit, -50.0, 1) == doctest::Approx(0.01));
}

TEST_CASE("every sampled unit ends with finite propensities") {
  const PipelineData data = make_pipeline_data(250, 41);
  const StageOneResult stage1 = estimate_thetas_stage1(data.sample, data.matrix, {});
  const PropensityModel model =
      fit_response_logistic(stage1.theta, data.sample.unit_respondent, nullptr, 0, {});
  REQUIRE(model.converged);
  for (std::size_t k = 0; k < data.sample.n; ++k) {
    CHECK(model.fitted[k] > 0.0);
    CHECK(model.fitted[k] < 1.0);
    const double q = item_response_prob_hat(stage1.fit, model.covariate[k], 2, 0.01);
    CHECK(q > 0.0);
    CHECK(q < 1.0);
  }
}
