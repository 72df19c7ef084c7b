#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "seisfrag/common.hpp"
#include "seisfrag/parametric.hpp"
#include "seisfrag/stats.hpp"

using namespace seisfrag;
using namespace seisfrag::parametric;

namespace {

// Exceedance data drawn from a known lognormal curve.
SampleSet bernoulli_data(std::size_t n, double alpha, double beta, double delta0, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  SampleSet out(n);
  for (auto& s : out) {
    s.im = alpha * std::exp(0.7 * z(rng));
    const bool hit = u(rng) < stats::normal_cdf(std::log(s.im / alpha) / beta);
    s.delta = hit ? 2.0 * delta0 : 0.5 * delta0;
  }
  return out;
}

}  // namespace

TEST_CASE("lognormal curve is increasing and maps into (0,1)") {
  const LognormalCurve c{1.5, 0.4};
  double prev = 0.0;
  for (double im = 0.05; im < 20.0; im *= 1.3) {
    const double p = evaluate_lognormal(c, im);
    CHECK(p > prev);
    CHECK(p < 1.0);
    prev = p;
  }
  CHECK(evaluate_lognormal(c, 1.5) == doctest::Approx(0.5));
  CHECK_THROWS_AS(evaluate_lognormal(c, 0.0), PreconditionError);
  CHECK_THROWS_AS((LognormalCurve{-1.0, 0.3}.validate()), PreconditionError);
}

TEST_CASE("MLE recovers the generating curve") {
  const auto data = bernoulli_data(5000, 1.5, 0.4, 0.01, 1);
  const auto fit = fit_mle(data, 0.01);
  CHECK_FALSE(fit.degenerate);
  CHECK(fit.curve.median_alpha == doctest::Approx(1.5).epsilon(0.03));
  CHECK(fit.curve.logstd_beta == doctest::Approx(0.4).epsilon(0.10));
  CHECK(fit.n == 5000);
}

TEST_CASE("MLE is a stationary point of the likelihood") {
  const auto data = bernoulli_data(2000, 0.8, 0.6, 0.02, 2);
  const auto fit = fit_mle(data, 0.02);
  const double best = mle_log_likelihood(data, 0.02, fit.curve);
  CHECK(best == doctest::Approx(fit.log_likelihood).epsilon(1e-12));
  for (double da : {-0.01, 0.01})
    for (double db : {-0.01, 0.01}) {
      const LognormalCurve c{fit.curve.median_alpha * std::exp(da), fit.curve.logstd_beta * std::exp(db)};
      CHECK(mle_log_likelihood(data, 0.02, c) <= best);
    }
}

TEST_CASE("MLE scales with the intensity measure") {
  const auto data = bernoulli_data(3000, 1.5, 0.4, 0.01, 3);
  const auto base = fit_mle(data, 0.01);
  for (double c : {0.01, 3.0, 250.0}) {
    auto moved = data;
    for (auto& s : moved) s.im *= c;
    const auto fit = fit_mle(moved, 0.01);
    CHECK(fit.curve.median_alpha == doctest::Approx(c * base.curve.median_alpha).epsilon(1e-6));
    CHECK(fit.curve.logstd_beta == doctest::Approx(base.curve.logstd_beta).epsilon(1e-6));
  }
}

TEST_CASE("completely separated data is reported as a step") {
  SampleSet data;
  for (int i = 1; i <= 20; ++i) data.push_back({0.1 * i, i > 10 ? 0.02 : 0.001});
  const auto fit = fit_mle(data, 0.01);
  CHECK(fit.degenerate);
  REQUIRE(fit.step_im.has_value());
  CHECK(*fit.step_im == doctest::Approx(std::sqrt(1.0 * 1.1)));
  CHECK_FALSE(fit.diagnostic.empty());
}

TEST_CASE("MLE without exceedances is a precondition error") {
  SampleSet data{{0.1, 0.001}, {0.2, 0.002}, {0.3, 0.003}};
  CHECK_THROWS_AS(fit_mle(data, 0.01), PreconditionError);
  CHECK_THROWS_AS(fit_mle(data, 0.0001), PreconditionError);
}

TEST_CASE("MLE keeps zero-drift samples as non-exceedances") {
  auto data = bernoulli_data(1000, 1.0, 0.5, 0.01, 4);
  data.push_back({0.5, 0.0});
  CHECK(fit_mle(data, 0.01).n == 1001);
}

TEST_CASE("PSDM regression recovers slope, intercept and dispersion") {
  const auto data = oracle::psdm_samples(5000, 1.0, std::log(0.01), 0.3, 0.0, 0.6, 5);
  const auto fit = fit_psdm(data);
  CHECK(fit.slope_a == doctest::Approx(1.0).epsilon(0.02));
  CHECK(fit.intercept_b == doctest::Approx(std::log(0.01)).epsilon(0.02));
  CHECK(fit.dispersion_zeta == doctest::Approx(0.3).epsilon(0.05));
  CHECK(fit.r_squared > 0.0);
  CHECK(fit.r_squared <= 1.0);
}

TEST_CASE("PSDM residuals satisfy the normal equations") {
  const auto data = oracle::psdm_samples(800, 1.3, -4.0, 0.4, -0.5, 0.5, 6);
  const auto fit = fit_psdm(data);
  double s0 = 0.0, s1 = 0.0;
  for (const auto& s : data) {
    const double x = std::log(s.im);
    const double e = std::log(s.delta) - fit.slope_a * x - fit.intercept_b;
    s0 += e;
    s1 += e * x;
  }
  CHECK(std::abs(s0) < 1e-9);
  CHECK(std::abs(s1) < 1e-9);
}

TEST_CASE("PSDM drops zero drifts and needs three points") {
  SampleSet data{{1.0, 0.01}, {2.0, 0.02}, {3.0, 0.0}};
  CHECK_THROWS_AS(fit_psdm(data), PreconditionError);
  data.push_back({4.0, 0.05});
  CHECK(fit_psdm(data).n_used == 3);
}

TEST_CASE("regression curves share one log-std across thresholds") {
  const auto data = oracle::psdm_samples(1000, 0.9, std::log(0.01), 0.35, 0.0, 0.6, 7);
  const auto fit = fit_psdm(data);
  const auto c1 = curve_from_psdm(fit, 0.007);
  const auto c2 = curve_from_psdm(fit, 0.015);
  const auto c3 = curve_from_psdm(fit, 0.025);
  CHECK(c1.logstd_beta == c2.logstd_beta);
  CHECK(c2.logstd_beta == c3.logstd_beta);
  CHECK(c1.logstd_beta == doctest::Approx(fit.dispersion_zeta / fit.slope_a));
  CHECK(c2.median_alpha == doctest::Approx(std::exp((std::log(0.015) - fit.intercept_b) / fit.slope_a)));
}

TEST_CASE("regression back-solve reproduces the published LR medians") {
  // Published LR medians 0.7392 g and 1.6222 g at 0.7% and 1.5% fix A and B;
  // the 2.5% median then follows.
  const double a = std::log(0.015 / 0.007) / std::log(1.6222 / 0.7392);
  const double b = std::log(0.007) - a * std::log(0.7392);
  PsdmFit fit;
  fit.slope_a = a;
  fit.intercept_b = b;
  fit.dispersion_zeta = 0.6260 * a;
  CHECK(curve_from_psdm(fit, 0.025).median_alpha == doctest::Approx(2.7472).epsilon(5e-4));
}

TEST_CASE("non-positive regression slope is a numerical error") {
  PsdmFit fit;
  fit.slope_a = -0.2;
  fit.dispersion_zeta = 0.3;
  CHECK_THROWS_AS(curve_from_psdm(fit, 0.01), NumericalError);
}
