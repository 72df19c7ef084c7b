#include "seisfrag/nonparametric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "seisfrag/common.hpp"
#include "seisfrag/io.hpp"
#include "seisfrag/stats.hpp"

namespace seisfrag::nonparametric {

namespace {

void check_grid(std::span<const double> grid) {
  if (grid.empty()) throw PreconditionError("fragility grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0)) throw PreconditionError("fragility grid must be positive");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw PreconditionError("fragility grid must be strictly increasing");
  }
}

}  // namespace

void BmcsSettings::validate() const {
  if (!(relative_half_width > 0.0 && relative_half_width <= 0.25))
    throw ConfigError("bMCS relative half-width must lie in (0, 0.25]");
  if (min_bin_count < 5) throw ConfigError("bMCS minimum bin count must be >= 5");
}

FragilityCurveEstimate bmcs_fragility(std::span<const FragilitySample> samples, double delta0,
                                      std::span<const double> im_grid, const BmcsSettings& settings) {
  settings.validate();
  if (samples.empty()) throw PreconditionError("bMCS needs samples");
  check_grid(im_grid);

  std::vector<FragilitySample> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.im < b.im; });

  FragilityCurveEstimate est;
  est.method = "bmcs";
  est.delta0 = delta0;
  est.settings = "relative_half_width=" + io::format_double(settings.relative_half_width) +
                 ";min_bin_count=" + std::to_string(settings.min_bin_count);
  const double h = settings.relative_half_width;
  for (double im0 : im_grid) {
    const double lo = im0 * (1.0 - h);
    const double hi = im0 * (1.0 + h);
    auto first = std::lower_bound(sorted.begin(), sorted.end(), lo, [](const auto& s, double v) { return s.im < v; });
    auto last = std::upper_bound(sorted.begin(), sorted.end(), hi, [](double v, const auto& s) { return v < s.im; });
    std::size_t count = 0;
    std::size_t failures = 0;
    for (auto it = first; it != last; ++it) {
      ++count;
      // Local amplitude scaling of the response to the bin centre.
      if (it->delta * (im0 / it->im) >= delta0) ++failures;
    }
    CurvePoint p{im0, std::numeric_limits<double>::quiet_NaN(), count};
    if (count >= settings.min_bin_count) p.probability = static_cast<double>(failures) / static_cast<double>(count);
    est.grid.push_back(p);
  }
  return est;
}

// ---------------------------------------------------------------------------

void KdeSettings::validate() const {
  if (!bandwidth.is_spd()) throw ConfigError("KDE bandwidth matrix must be symmetric positive definite");
  if (!(marginal_bandwidth > 0.0))
    throw ConfigError("KDE marginal bandwidth must be positive");
}

double kde_marginal_pdf(std::span<const double> log_ims, double h, double u) {
  if (!(h > 0.0)) throw PreconditionError("kernel bandwidth must be positive");
  if (log_ims.empty()) throw PreconditionError("kernel density needs samples");
  double acc = 0.0;
  for (double ui : log_ims) acc += stats::normal_pdf((u - ui) / h);
  return acc / (static_cast<double>(log_ims.size()) * h);
}

KdeSettings select_bandwidths(std::span<const FragilitySample> samples) {
  if (samples.size() < 50) throw PreconditionError("bandwidth selection needs at least 50 samples");
  std::vector<double> u, v;
  u.reserve(samples.size());
  v.reserve(samples.size());
  for (const auto& s : samples) {
    if (!(s.im > 0.0 && s.delta > 0.0)) throw PreconditionError("bandwidth selection needs im > 0 and delta > 0");
    u.push_back(std::log(s.im));
    v.push_back(std::log(s.delta));
  }
  const double n = static_cast<double>(samples.size());
  const double suu = stats::covariance(u, u);
  const double svv = stats::covariance(v, v);
  const double suv = stats::covariance(u, v);
  if (!(suu > 0.0 && svv > 0.0) || 1.0 - suv * suv / (suu * svv) < 1e-10)
    throw NumericalError("bandwidth selection: sample covariance of (log IM, log delta) is singular");

  const double scale = std::pow(n, -1.0 / 3.0);
  KdeSettings k;
  k.selector = BandwidthSelector::kNormalReference;
  k.bandwidth = {scale * suu, scale * suv, scale * svv};
  k.marginal_bandwidth = std::pow(4.0 / 3.0, 0.2) * std::sqrt(suu) * std::pow(n, -0.2);
  return k;
}

FragilityCurveEstimate kde_fragility(std::span<const FragilitySample> samples, double delta0,
                                     std::span<const double> im_grid, const KdeSettings& settings) {
  settings.validate();
  check_grid(im_grid);
  if (samples.empty()) throw PreconditionError("KDE needs samples");
  if (!(delta0 > 0.0)) throw PreconditionError("drift threshold must be positive");
  const std::size_t n = samples.size();
  std::vector<double> u(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(samples[i].im > 0.0 && samples[i].delta > 0.0))
      throw PreconditionError("KDE needs im > 0 and delta > 0");
    u[i] = std::log(samples[i].im);
    v[i] = std::log(samples[i].delta);
  }

  const auto& H = settings.bandwidth;
  const double slope = H.h12 / H.h11;
  const double cond_sd = std::sqrt(H.h22 - H.h12 * H.h12 / H.h11);
  const double log_d0 = std::log(delta0);
  const bool faithful = settings.marginal_mode == MarginalMode::kPaperFaithful;
  const double h_joint = std::sqrt(H.h11);
  const double h_marg = settings.marginal_bandwidth;

  FragilityCurveEstimate est;
  est.method = "kde";
  est.delta0 = delta0;
  {
    std::ostringstream s;
    s << "selector=" << (settings.selector == BandwidthSelector::kNormalReference ? "normal-reference" : "user")
      << ";mode=" << (faithful ? "paper-faithful" : "matrix-consistent") << ";H11=" << io::format_double(H.h11)
      << ";H12=" << io::format_double(H.h12) << ";H22=" << io::format_double(H.h22)
      << ";h_im=" << io::format_double(h_marg);
    est.settings = s.str();
  }

  std::vector<double> log_w(n), tail(n), log_m(n);
  for (double a : im_grid) {
    const double ua = std::log(a);
    for (std::size_t i = 0; i < n; ++i) {
      const double z = (ua - u[i]) / h_joint;
      log_w[i] = -0.5 * z * z;
      const double mean_v = v[i] + slope * (ua - u[i]);
      tail[i] = stats::normal_sf((log_d0 - mean_v) / cond_sd);
    }
    const double top = *std::max_element(log_w.begin(), log_w.end());
    double wsum = 0.0, wsq = 0.0, num = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = std::exp(log_w[i] - top);
      wsum += w;
      wsq += w * w;
      num += w * tail[i];
    }
    CurvePoint p{a, 0.0, static_cast<std::size_t>(std::llround(wsum * wsum / wsq))};
    if (!faithful) {
      p.probability = std::clamp(num / wsum, 0.0, 1.0);
    } else {
      // Numerator mixture uses sqrt(H11); denominator uses h_IM, each with its own normalization.
      for (std::size_t i = 0; i < n; ++i) {
        const double z = (ua - u[i]) / h_marg;
        log_m[i] = -0.5 * z * z;
      }
      const double top_m = *std::max_element(log_m.begin(), log_m.end());
      double den = 0.0;
      for (double lm : log_m) den += std::exp(lm - top_m);
      const double ratio = std::exp(top - top_m) * (num / h_joint) / (den / h_marg);
      if (ratio > 1.0 || ratio < 0.0) ++est.range_violations;
      p.probability = std::clamp(ratio, 0.0, 1.0);
    }
    est.grid.push_back(p);
  }
  return est;
}

std::vector<double> default_im_grid(std::span<const FragilitySample> samples, std::size_t points) {
  if (samples.empty()) throw PreconditionError("grid needs samples");
  std::vector<double> ims;
  ims.reserve(samples.size());
  for (const auto& s : samples) ims.push_back(s.im);
  std::sort(ims.begin(), ims.end());
  return stats::log_space(stats::quantile_sorted(ims, 0.02), stats::quantile_sorted(ims, 0.98), points);
}

}  // namespace seisfrag::nonparametric
