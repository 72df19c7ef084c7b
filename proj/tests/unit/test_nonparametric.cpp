#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "seisfrag/common.hpp"
#include "seisfrag/nonparametric.hpp"
#include "seisfrag/stats.hpp"

using namespace seisfrag;
using namespace seisfrag::nonparametric;

namespace {

KdeSettings user_settings(double h11, double h12, double h22, double h, MarginalMode mode) {
  KdeSettings k;
  k.selector = BandwidthSelector::kUserSupplied;
  k.bandwidth = {h11, h12, h22};
  k.marginal_bandwidth = h;
  k.marginal_mode = mode;
  return k;
}

SampleSet ten_samples() {
  return {{0.21, 0.0031}, {0.35, 0.0044}, {0.42, 0.0090}, {0.55, 0.0062}, {0.61, 0.0120},
          {0.80, 0.0110}, {0.95, 0.0210}, {1.20, 0.0160}, {1.45, 0.0330}, {2.10, 0.0290}};
}

}  // namespace

TEST_CASE("bMCS counts a bin centred on its members") {
  SampleSet data;
  for (int i = 0; i < 40; ++i) data.push_back({1.0, i % 2 ? 0.02 : 0.005});
  const std::vector<double> grid{1.0};
  const auto est = bmcs_fragility(data, 0.01, grid);
  CHECK(est.grid[0].probability == 0.5);
  CHECK(est.grid[0].support_count == 40);
  CHECK(est.method == "bmcs");
}

TEST_CASE("bMCS rescales drift to the bin centre") {
  SampleSet data(30, {1.1, 0.010});
  const std::vector<double> grid{1.0};
  // Rescaled drift 0.010 / 1.1 = 0.00909 lies below 0.0095 and above 0.009.
  CHECK(bmcs_fragility(data, 0.0095, grid).grid[0].probability == 0.0);
  CHECK(bmcs_fragility(data, 0.0090, grid).grid[0].probability == 1.0);
}

TEST_CASE("sparse bins are flagged rather than estimated") {
  SampleSet data(29, {1.0, 0.02});
  const std::vector<double> grid{1.0, 5.0};
  const auto est = bmcs_fragility(data, 0.01, grid);
  CHECK(std::isnan(est.grid[0].probability));
  CHECK(est.grid[0].support_count == 29);
  CHECK(est.grid[1].support_count == 0);
  CHECK_THROWS(bmcs_fragility(data, 0.01, std::vector<double>{}));
  CHECK_THROWS(bmcs_fragility(data, 0.01, std::vector<double>{2.0, 1.0}));
}

TEST_CASE("bMCS is exact for proportional drift at every half width") {
  std::mt19937_64 rng(1);
  std::lognormal_distribution<double> im(0.0, 0.7);
  const double c = 0.012;
  SampleSet data(3000);
  for (auto& s : data) {
    s.im = im(rng);
    s.delta = c * s.im;
  }
  const double d0 = 0.015;
  const auto grid = default_im_grid(data);
  for (double h : {0.05, 0.1, 0.2, 0.25}) {
    BmcsSettings bs;
    bs.relative_half_width = h;
    bs.min_bin_count = 5;
    const auto est = bmcs_fragility(data, d0, grid, bs);
    for (const auto& p : est.grid) {
      if (p.support_count < 5) continue;
      // Exact step 1{IM0 >= d0 / c}, up to rounding at the step itself.
      if (std::abs(p.im - d0 / c) < 1e-9) continue;
      CHECK(p.probability == (p.im >= d0 / c ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("bMCS settings are validated") {
  BmcsSettings bs;
  bs.relative_half_width = 0.3;
  CHECK_THROWS_AS(bs.validate(), ConfigError);
  bs.relative_half_width = 0.2;
  bs.min_bin_count = 4;
  CHECK_THROWS_AS(bs.validate(), ConfigError);
}

TEST_CASE("single-sample KDE at its own point gives one half") {
  const SampleSet one{{0.7, 0.012}};
  const auto k = user_settings(0.04, 0.02, 0.05, 0.2, MarginalMode::kMatrixConsistent);
  const std::vector<double> grid{0.7};
  CHECK(kde_fragility(one, 0.012, grid, k).grid[0].probability == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("closed-form KDE matches quadrature of the joint density") {
  const auto data = ten_samples();
  const auto grid = stats::log_space(0.25, 1.8, 12);
  struct Case {
    double h11, h12, h22;
  };
  for (const auto& H : {Case{0.09, 0.0, 0.11}, Case{0.0306, 0.0246, 0.0283}, Case{0.12, 0.08, 0.10}}) {
    for (double d0 : {0.007, 0.015, 0.025}) {
      const auto k = user_settings(H.h11, H.h12, H.h22, 0.1295, MarginalMode::kMatrixConsistent);
      const auto est = kde_fragility(data, d0, grid, k);
      for (const auto& p : est.grid) {
        const double ref = oracle::kde_quadrature(data, H.h11, H.h12, H.h22, 0.0, d0, p.im);
        CHECK(p.probability == doctest::Approx(ref).epsilon(1e-6));
      }
      const auto faithful = user_settings(H.h11, H.h12, H.h22, 0.1295, MarginalMode::kPaperFaithful);
      const auto est2 = kde_fragility(data, d0, grid, faithful);
      for (const auto& p : est2.grid) {
        const double ref = oracle::kde_quadrature(data, H.h11, H.h12, H.h22, 0.1295, d0, p.im);
        if (ref <= 1.0) CHECK(p.probability == doctest::Approx(ref).epsilon(1e-6));
        else CHECK(p.probability == 1.0);
      }
    }
  }
}

TEST_CASE("paper-faithful ratios outside [0,1] are counted") {
  const auto data = ten_samples();
  // A much narrower marginal bandwidth lets the ratio exceed one between samples.
  const auto k = user_settings(0.2, 0.0, 0.001, 0.02, MarginalMode::kPaperFaithful);
  const auto est = kde_fragility(data, 0.0001, stats::log_space(0.2, 2.0, 40), k);
  CHECK(est.range_violations > 0);
  for (const auto& p : est.grid) {
    CHECK(p.probability >= 0.0);
    CHECK(p.probability <= 1.0);
  }
}

TEST_CASE("KDE is permutation invariant, bounded and monotone in the threshold") {
  const auto data = oracle::psdm_samples(600, 1.0, std::log(0.01), 0.3, 0.0, 0.6, 9);
  auto shuffled = data;
  std::mt19937_64 rng(2);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto k = select_bandwidths(data);
  const auto grid = default_im_grid(data);
  const auto a = kde_fragility(data, 0.01, grid, k);
  const auto b = kde_fragility(shuffled, 0.01, grid, k);
  for (std::size_t j = 0; j < grid.size(); ++j) CHECK(a.grid[j].probability == doctest::Approx(b.grid[j].probability).epsilon(1e-13));

  for (auto mode : {MarginalMode::kMatrixConsistent, MarginalMode::kPaperFaithful}) {
    auto km = k;
    km.marginal_mode = mode;
    std::vector<double> prev(grid.size(), 1.0);
    for (double d0 : {0.004, 0.007, 0.01, 0.015, 0.025}) {
      const auto est = kde_fragility(data, d0, grid, km);
      for (std::size_t j = 0; j < grid.size(); ++j) {
        CHECK(est.grid[j].probability >= 0.0);
        CHECK(est.grid[j].probability <= 1.0);
        CHECK(est.grid[j].probability <= prev[j]);
        prev[j] = est.grid[j].probability;
      }
    }
  }
}

TEST_CASE("bMCS is monotone in the threshold") {
  const auto data = oracle::psdm_samples(2000, 1.0, std::log(0.01), 0.3, 0.0, 0.6, 10);
  const auto grid = default_im_grid(data);
  std::vector<double> prev(grid.size(), 1.0);
  for (double d0 : {0.004, 0.007, 0.01, 0.015, 0.025}) {
    const auto est = bmcs_fragility(data, d0, grid);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      if (std::isnan(est.grid[j].probability)) continue;
      CHECK(est.grid[j].probability <= prev[j]);
      prev[j] = est.grid[j].probability;
    }
  }
}

TEST_CASE("normal-reference bandwidths scale with sample size") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  auto make = [&](std::size_t n) {
    SampleSet s(n);
    for (auto& x : s) {
      const double a = z(rng), b = 0.5 * a + z(rng);
      x = {std::exp(a), std::exp(b)};
    }
    return s;
  };
  const auto small = make(20000), large = make(80000);
  const auto ks = select_bandwidths(small), kl = select_bandwidths(large);
  CHECK(kl.bandwidth.h11 / ks.bandwidth.h11 == doctest::Approx(std::pow(4.0, -1.0 / 3.0)).epsilon(0.03));
  CHECK(kl.bandwidth.h22 / ks.bandwidth.h22 == doctest::Approx(std::pow(4.0, -1.0 / 3.0)).epsilon(0.03));
  CHECK(kl.marginal_bandwidth / ks.marginal_bandwidth == doctest::Approx(std::pow(4.0, -0.2)).epsilon(0.03));
  CHECK(ks.bandwidth.is_spd());
}

TEST_CASE("perfectly correlated data has a singular bandwidth matrix") {
  SampleSet data;
  for (int i = 1; i <= 100; ++i) data.push_back({0.01 * i, 0.003 * 0.01 * i});
  CHECK_THROWS_AS(select_bandwidths(data), NumericalError);
  CHECK_THROWS_AS(select_bandwidths(SampleSet(10, {1.0, 0.01})), PreconditionError);
}

TEST_CASE("KDE recovers an analytic lognormal demand model") {
  const auto data = oracle::psdm_samples(5000, 1.0, std::log(0.01), 0.3, 0.0, 0.6, 11);
  std::vector<double> ims;
  for (const auto& s : data) ims.push_back(s.im);
  const auto grid = stats::log_space(stats::quantile(ims, 0.1), stats::quantile(ims, 0.9), 40);
  const auto k = select_bandwidths(data);
  for (double d0 : {0.007, 0.01, 0.015}) {
    const auto est = kde_fragility(data, d0, grid, k);
    for (const auto& p : est.grid) {
      const double exact = stats::normal_cdf((std::log(p.im) - (std::log(d0) - std::log(0.01))) / 0.3);
      CHECK(std::abs(p.probability - exact) < 0.05);
    }
  }
}

TEST_CASE("invalid KDE bandwidths are rejected") {
  auto k = user_settings(0.1, 0.2, 0.1, 0.1, MarginalMode::kMatrixConsistent);
  CHECK_THROWS_AS(k.validate(), ConfigError);
  k = user_settings(0.1, 0.0, 0.1, 0.0, MarginalMode::kMatrixConsistent);
  CHECK_THROWS_AS(k.validate(), ConfigError);
}

TEST_CASE("default grid spans the 2nd to 98th IM percentiles") {
  const auto data = oracle::psdm_samples(1000, 1.0, -4.0, 0.3, 0.0, 0.6, 12);
  std::vector<double> ims;
  for (const auto& s : data) ims.push_back(s.im);
  const auto g = default_im_grid(data);
  CHECK(g.size() == 60);
  CHECK(g.front() == doctest::Approx(stats::quantile(ims, 0.02)));
  CHECK(g.back() == doctest::Approx(stats::quantile(ims, 0.98)));
  for (std::size_t j = 1; j < g.size(); ++j) CHECK(g[j] > g[j - 1]);
}
