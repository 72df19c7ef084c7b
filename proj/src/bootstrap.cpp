#include "seisfrag/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seisfrag/common.hpp"
#include "seisfrag/parallel.hpp"
#include "seisfrag/stats.hpp"

namespace seisfrag::bootstrap {

void BootstrapSettings::validate() const {
  if (replications < 2) throw ConfigError("bootstrap needs at least two replications");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("bootstrap confidence must lie in (0,1)");
}

SampleSet resample(std::span<const FragilitySample> samples, RandomStream& rng) {
  if (samples.empty()) throw PreconditionError("cannot resample an empty set");
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  SampleSet out(samples.size());
  for (auto& s : out) s = samples[pick(rng)];
  return out;
}

BootstrapSummary bootstrap_curves(const Estimator& estimator, std::span<const FragilitySample> samples,
                                  double delta0, std::span<const double> im_grid,
                                  const BootstrapSettings& settings) {
  settings.validate();
  const std::size_t m = settings.replications;
  std::vector<std::optional<FragilityCurveEstimate>> curves(m);
  parallel_for(m, settings.jobs, [&](std::size_t r) {
    auto rng = make_stream(derive_seed(settings.master_seed, r, StreamPurpose::kBootstrap));
    const auto replica = resample(samples, rng);
    try {
      curves[r] = estimator(replica, delta0, im_grid);
    } catch (const Error&) {
      // Counted as a dropped replication below.
    }
  });

  BootstrapSummary out;
  std::vector<const FragilityCurveEstimate*> ok;
  for (const auto& c : curves) {
    if (c) ok.push_back(&*c);
    else ++out.dropped;
  }
  if (static_cast<double>(out.dropped) > 0.3 * static_cast<double>(m))
    throw NumericalError("bootstrap: " + std::to_string(out.dropped) + " of " + std::to_string(m) +
                         " replications failed");
  const std::size_t g = im_grid.size();
  for (const auto* c : ok)
    if (c->grid.size() != g) throw NumericalError("bootstrap: estimator returned a curve on a different grid");

  auto blank = [&](const char* tag) {
    FragilityCurveEstimate e;
    e.method = ok.front()->method + "/bootstrap-" + tag;
    e.delta0 = delta0;
    e.settings = ok.front()->settings + ";replications=" + std::to_string(m);
    return e;
  };
  out.median_curve = blank(settings.mean_curve ? "mean" : "median");
  out.lower_envelope = blank("lower");
  out.upper_envelope = blank("upper");

  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double lo_p = 0.5 * (1.0 - settings.confidence);
  const double hi_p = 0.5 * (1.0 + settings.confidence);
  std::vector<double> values;
  for (std::size_t j = 0; j < g; ++j) {
    values.clear();
    for (const auto* c : ok)
      if (std::isfinite(c->grid[j].probability)) values.push_back(c->grid[j].probability);
    const std::size_t missing = ok.size() - values.size();
    CurvePoint mid{im_grid[j], nan, values.size()};
    CurvePoint lo = mid, hi = mid;
    if (!values.empty() && static_cast<double>(missing) <= 0.2 * static_cast<double>(ok.size())) {
      std::sort(values.begin(), values.end());
      mid.probability = settings.mean_curve ? stats::mean(values) : stats::quantile_sorted(values, 0.5);
      lo.probability = stats::quantile_sorted(values, lo_p);
      hi.probability = stats::quantile_sorted(values, hi_p);
    }
    out.median_curve.grid.push_back(mid);
    out.lower_envelope.grid.push_back(lo);
    out.upper_envelope.grid.push_back(hi);
  }

  for (const auto* c : ok) out.median_im_samples.push_back(median_im(*c));
  out.logstd_median_im = logstd_median_im(out.median_im_samples);
  if (!out.logstd_median_im) {
    const auto present = std::count_if(out.median_im_samples.begin(), out.median_im_samples.end(),
                                       [](const auto& x) { return x.has_value(); });
    out.diagnostic = "median IM present in only " + std::to_string(present) + " of " +
                     std::to_string(out.median_im_samples.size()) + " replications";
  }
  return out;
}

std::optional<double> median_im(const FragilityCurveEstimate& curve) {
  if (curve.grid.empty()) throw PreconditionError("median IM of an empty curve");
  const CurvePoint* prev = nullptr;
  for (const auto& p : curve.grid) {
    if (!std::isfinite(p.probability)) continue;
    if (p.probability >= 0.5) {
      if (prev == nullptr) return std::nullopt;  // crossing lies left of the grid
      const double w = (0.5 - prev->probability) / (p.probability - prev->probability);
      return std::exp(std::log(prev->im) + w * (std::log(p.im) - std::log(prev->im)));
    }
    prev = &p;
  }
  return std::nullopt;
}

std::optional<double> logstd_median_im(std::span<const std::optional<double>> median_ims, std::size_t min_present) {
  std::vector<double> logs;
  for (const auto& x : median_ims)
    if (x && *x > 0.0) logs.push_back(std::log(*x));
  if (logs.size() < std::max<std::size_t>(min_present, 2)) return std::nullopt;
  return stats::stddev(logs);
}

}  // namespace seisfrag::bootstrap
