#include "seisfrag/parametric.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "seisfrag/common.hpp"
#include "seisfrag/stats.hpp"

namespace seisfrag::parametric {

void LognormalCurve::validate() const {
  if (!(median_alpha > 0.0 && std::isfinite(median_alpha)) || !(logstd_beta > 0.0 && std::isfinite(logstd_beta)))
    throw PreconditionError("lognormal curve needs finite positive median and log-std");
}

double evaluate_lognormal(const LognormalCurve& curve, double im) {
  if (!(im > 0.0)) throw PreconditionError("lognormal fragility needs im > 0");
  return stats::normal_cdf((std::log(im) - std::log(curve.median_alpha)) / curve.logstd_beta);
}

FragilityCurveEstimate tabulate(const LognormalCurve& curve, std::span<const double> im_grid, double delta0,
                                std::string method) {
  FragilityCurveEstimate est;
  est.method = std::move(method);
  est.delta0 = delta0;
  for (double im : im_grid) est.grid.push_back({im, evaluate_lognormal(curve, im), 0});
  est.settings = "median=" + std::to_string(curve.median_alpha) + ";logstd=" + std::to_string(curve.logstd_beta);
  return est;
}

// ---------------------------------------------------------------------------
// Maximum likelihood

namespace {

using Point = std::array<double, 2>;

struct Indicators {
  std::vector<double> log_im;
  std::vector<unsigned char> y;
};

Indicators indicators(std::span<const FragilitySample> samples, double delta0) {
  Indicators out;
  out.log_im.reserve(samples.size());
  out.y.reserve(samples.size());
  for (const auto& s : samples) {
    if (!(s.im > 0.0)) throw PreconditionError("fragility samples need im > 0");
    out.log_im.push_back(std::log(s.im));
    out.y.push_back(s.delta >= delta0 ? 1 : 0);
  }
  return out;
}

double log_likelihood(const Indicators& d, double log_alpha, double beta) {
  double ll = 0.0;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    const double z = (d.log_im[i] - log_alpha) / beta;
    ll += d.y[i] ? stats::log_normal_cdf(z) : stats::log_normal_cdf(-z);
  }
  return ll;
}

struct SimplexResult {
  Point x;
  double f;
};

// Nelder-Mead minimisation in two dimensions.
template <class F>
SimplexResult nelder_mead(F&& f, Point start, double step, const MleOptions& opt) {
  std::array<Point, 3> v{start, start, start};
  v[1][0] += step;
  v[2][1] += step;
  std::array<double, 3> fv{f(v[0]), f(v[1]), f(v[2])};
  int evals = 3;

  auto order = [&] {
    std::array<int, 3> idx{0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    const std::array<Point, 3> vv{v[idx[0]], v[idx[1]], v[idx[2]]};
    const std::array<double, 3> ff{fv[idx[0]], fv[idx[1]], fv[idx[2]]};
    v = vv;
    fv = ff;
  };

  while (evals < opt.max_evaluations) {
    order();
    double size = 0.0;
    for (int i = 1; i < 3; ++i)
      size = std::max({size, std::abs(v[i][0] - v[0][0]), std::abs(v[i][1] - v[0][1])});
    if (std::abs(fv[2] - fv[0]) < opt.f_tolerance && size < opt.x_tolerance) break;

    const Point c{0.5 * (v[0][0] + v[1][0]), 0.5 * (v[0][1] + v[1][1])};
    auto along = [&](double t) { return Point{c[0] + t * (v[2][0] - c[0]), c[1] + t * (v[2][1] - c[1])}; };

    const Point xr = along(-1.0);
    const double fr = f(xr);
    ++evals;
    if (fr < fv[0]) {
      const Point xe = along(-2.0);
      const double fe = f(xe);
      ++evals;
      if (fe < fr) {
        v[2] = xe;
        fv[2] = fe;
      } else {
        v[2] = xr;
        fv[2] = fr;
      }
      continue;
    }
    if (fr < fv[1]) {
      v[2] = xr;
      fv[2] = fr;
      continue;
    }
    const bool outside = fr < fv[2];
    const Point xc = along(outside ? -0.5 : 0.5);
    const double fc = f(xc);
    ++evals;
    if (fc < (outside ? fr : fv[2])) {
      v[2] = xc;
      fv[2] = fc;
      continue;
    }
    for (int i = 1; i < 3; ++i) {
      v[i] = {v[0][0] + 0.5 * (v[i][0] - v[0][0]), v[0][1] + 0.5 * (v[i][1] - v[0][1])};
      fv[i] = f(v[i]);
      ++evals;
    }
  }
  order();
  return {v[0], fv[0]};
}

}  // namespace

double mle_log_likelihood(std::span<const FragilitySample> samples, double delta0, const LognormalCurve& curve) {
  curve.validate();
  return log_likelihood(indicators(samples, delta0), std::log(curve.median_alpha), curve.logstd_beta);
}

MleFit fit_mle(std::span<const FragilitySample> samples, double delta0, const MleOptions& options) {
  const auto data = indicators(samples, delta0);
  MleFit fit;
  fit.n = data.y.size();
  fit.exceedances = static_cast<std::size_t>(std::count(data.y.begin(), data.y.end(), 1));
  if (fit.exceedances == 0 || fit.exceedances == fit.n)
    throw PreconditionError("maximum likelihood needs both exceedances and non-exceedances");

  double min_fail = std::numeric_limits<double>::infinity();
  double max_safe = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < fit.n; ++i) {
    if (data.y[i]) min_fail = std::min(min_fail, data.log_im[i]);
    else max_safe = std::max(max_safe, data.log_im[i]);
  }
  if (max_safe < min_fail) {
    // Complete separation: the likelihood increases without bound as beta -> 0.
    fit.degenerate = true;
    fit.step_im = std::exp(0.5 * (max_safe + min_fail));
    fit.curve = {*fit.step_im, options.degenerate_beta};
    fit.log_likelihood = 0.0;
    fit.diagnostic = "complete separation: exceedance indicator is a step at IM = " + std::to_string(*fit.step_im);
    return fit;
  }

  // Start from the median log-IM inside the region where outcomes overlap.
  std::vector<double> overlap;
  for (double x : data.log_im)
    if (x >= min_fail && x <= max_safe) overlap.push_back(x);
  const Point start{stats::median(overlap), std::log(options.initial_beta)};

  auto objective = [&](const Point& x) { return -log_likelihood(data, x[0], std::exp(x[1])); };

  SimplexResult best = nelder_mead(objective, start, 0.2, options);
  const std::array<Point, 3> offsets{Point{0.5, std::log(0.5)}, Point{-0.5, std::log(2.0)}, Point{0.25, std::log(1.5)}};
  for (int r = 0; r < std::min<int>(options.restarts, 3); ++r) {
    const Point s{start[0] + offsets[r][0], start[1] + offsets[r][1]};
    const auto candidate = nelder_mead(objective, s, 0.2, options);
    if (candidate.f < best.f) best = candidate;
  }
  // Polish from the best vertex with a fresh, small simplex.
  const auto polished = nelder_mead(objective, best.x, 0.01, options);
  if (polished.f <= best.f) best = polished;

  fit.curve = {std::exp(best.x[0]), std::exp(best.x[1])};
  fit.log_likelihood = -best.f;
  if (fit.curve.logstd_beta < options.degenerate_beta) {
    fit.degenerate = true;
    fit.step_im = fit.curve.median_alpha;
    fit.diagnostic = "log-std collapsed below " + std::to_string(options.degenerate_beta) + ": step-shaped fit";
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Demand model regression

PsdmFit fit_psdm(std::span<const FragilitySample> samples) {
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& s : samples) {
    if (!(s.delta > 0.0)) continue;
    if (!(s.im > 0.0)) throw PreconditionError("fragility samples need im > 0");
    x.push_back(std::log(s.im));
    y.push_back(std::log(s.delta));
  }
  PsdmFit fit;
  fit.n_used = x.size();
  if (fit.n_used < 3) throw PreconditionError("demand regression needs at least three samples with delta > 0");

  const double mx = stats::mean(x);
  const double my = stats::mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 1e-14 * static_cast<double>(x.size()) * (1.0 + mx * mx)))
    throw NumericalError("demand regression: log IM has zero variance");

  fit.slope_a = sxy / sxx;
  fit.intercept_b = my - fit.slope_a * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - fit.slope_a * x[i] - fit.intercept_b;
    sse += e * e;
  }
  fit.dispersion_zeta = std::sqrt(sse / static_cast<double>(x.size() - 2));
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 1.0;
  return fit;
}

LognormalCurve curve_from_psdm(const PsdmFit& fit, double delta0) {
  if (!(fit.slope_a > 0.0)) throw NumericalError("demand model slope must be positive for a monotone fragility");
  if (!(delta0 > 0.0)) throw PreconditionError("drift threshold must be positive");
  return {std::exp((std::log(delta0) - fit.intercept_b) / fit.slope_a), fit.dispersion_zeta / fit.slope_a};
}

}  // namespace seisfrag::parametric
