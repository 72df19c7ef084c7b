#include "seisfrag/ground_motion.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>

#include "seisfrag/common.hpp"
#include "seisfrag/io.hpp"

namespace seisfrag::gm {

namespace {

constexpr double kAriasFactor = kPi / (2.0 * kGravity);
constexpr double kShapeLo = 0.55;  // bracket on alpha2
constexpr double kShapeHi = 500.0;

bool finite_positive(double x) { return std::isfinite(x) && x > 0.0; }

// Quantile-ratio (t95 - t5) / t45 of a Gamma law; depends on the shape only.
double quantile_ratio(double shape) {
  using boost::math::gamma_p_inv;
  const double q05 = gamma_p_inv(shape, 0.05);
  const double q45 = gamma_p_inv(shape, 0.45);
  const double q95 = gamma_p_inv(shape, 0.95);
  return (q95 - q05) / q45;
}

}  // namespace

// ---------------------------------------------------------------------------
// Types

void GroundMotionScenario::validate() const {
  if (!finite_positive(arias_intensity)) throw InfeasibleScenario("arias_intensity must be > 0");
  if (!finite_positive(strong_motion_duration))
    throw InfeasibleScenario("strong_motion_duration must be > 0");
  if (!finite_positive(t_mid)) throw InfeasibleScenario("t_mid must be > 0");
  if (!finite_positive(omega_mid)) throw InfeasibleScenario("omega_mid must be > 0");
  if (!std::isfinite(omega_slope)) throw InfeasibleScenario("omega_slope must be finite");
  if (!(filter_damping > 0.0 && filter_damping < 1.0))
    throw InfeasibleScenario("filter_damping must lie in (0,1)");
}

double ModulationParams::q(double t) const {
  if (t <= 0.0) return 0.0;
  return std::exp(std::log(alpha1) + (alpha2 - 1.0) * std::log(t) - alpha3 * t);
}

double ModulationParams::envelope_cdf(double t) const {
  if (t <= 0.0) return 0.0;
  return boost::math::gamma_p(envelope_shape(), envelope_rate() * t);
}

double ModulationParams::envelope_quantile(double p) const {
  return boost::math::gamma_p_inv(envelope_shape(), p) / envelope_rate();
}

FilterParams FilterParams::from(const GroundMotionScenario& s) {
  return {s.omega_mid, s.omega_slope, s.filter_damping, s.t_mid};
}

double FilterParams::frequency(double tau) const {
  return std::max(omega_mid + omega_slope * (tau - t_mid), kMinFrequency);
}

double FilterParams::impulse_response(double lag, double tau) const {
  if (lag < 0.0) return 0.0;
  const double w = frequency(tau);
  const double root = std::sqrt(1.0 - damping * damping);
  return w / root * std::exp(-damping * w * lag) * std::sin(w * root * lag);
}

void Accelerogram::validate() const {
  if (!finite_positive(dt)) throw PreconditionError("accelerogram dt must be > 0");
  if (samples.size() < 2) throw PreconditionError("accelerogram needs at least two samples");
  for (double x : samples)
    if (!std::isfinite(x)) throw PreconditionError("accelerogram holds a non-finite sample");
}

// ---------------------------------------------------------------------------
// Distributions

Marginal::Marginal(const MarginalSpec& spec) : spec_(spec) {
  const double mu = spec.mean;
  const double sd = spec.std;
  if (!std::isfinite(mu) || !finite_positive(sd)) throw ConfigError("marginal needs finite mean and std > 0");
  switch (spec.family) {
    case Family::kLognormal: {
      if (mu <= 0.0) throw ConfigError("lognormal mean must be > 0");
      const double var_ln = std::log1p((sd / mu) * (sd / mu));
      a_ = std::log(mu) - 0.5 * var_ln;
      b_ = std::sqrt(var_ln);
      break;
    }
    case Family::kGamma: {
      if (mu <= 0.0) throw ConfigError("gamma mean must be > 0");
      a_ = mu * mu / (sd * sd);
      b_ = mu / (sd * sd);
      break;
    }
    case Family::kBeta: {
      const double width = spec.upper - spec.lower;
      if (!(width > 0.0)) throw ConfigError("beta support must have upper > lower");
      const double m = (mu - spec.lower) / width;
      const double v = (sd / width) * (sd / width);
      if (!(m > 0.0 && m < 1.0) || !(v < m * (1.0 - m)))
        throw ConfigError("beta (mean, std) infeasible on its support");
      const double common = m * (1.0 - m) / v - 1.0;
      a_ = m * common;
      b_ = (1.0 - m) * common;
      break;
    }
    case Family::kTwoSidedExponential: {
      // Asymmetric Laplace with mode 0: mean = right - left, var = left^2 + right^2.
      if (!(spec.lower < 0.0 && spec.upper > 0.0))
        throw ConfigError("two-sided exponential support must contain 0");
      if (!(sd > std::abs(mu))) throw ConfigError("two-sided exponential needs std > |mean|");
      const double root = std::sqrt(2.0 * sd * sd - mu * mu);
      a_ = 0.5 * (root - mu);  // left scale
      b_ = 0.5 * (root + mu);  // right scale
      break;
    }
  }
}

double Marginal::sample(RandomStream& rng) const {
  switch (spec_.family) {
    case Family::kLognormal:
      return std::exp(std::normal_distribution<double>(a_, b_)(rng));
    case Family::kGamma:
      return std::gamma_distribution<double>(a_, 1.0 / b_)(rng);
    case Family::kBeta: {
      const double x = std::gamma_distribution<double>(a_, 1.0)(rng);
      const double y = std::gamma_distribution<double>(b_, 1.0)(rng);
      return spec_.lower + (spec_.upper - spec_.lower) * (x / (x + y));
    }
    case Family::kTwoSidedExponential: {
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      std::exponential_distribution<double> expo(1.0);
      const double p_right = b_ / (a_ + b_);
      for (int attempt = 0; attempt < 10000; ++attempt) {
        const double e = expo(rng);
        const double x = unit(rng) < p_right ? b_ * e : -a_ * e;
        if (x >= spec_.lower && x <= spec_.upper) return x;
      }
      throw NumericalError("two-sided exponential rejection sampling did not terminate");
    }
  }
  return 0.0;
}

ScenarioDistributions ScenarioDistributions::defaults() {
  ScenarioDistributions d;
  d.arias = {Family::kLognormal, 5.613, 10.486, 0.0, 0.0};
  d.strong_motion_duration = {Family::kBeta, 10.0, 2.0, 5.0, 20.0};
  d.t_mid = {Family::kBeta, 12.0, 2.0, 5.0, 15.0};
  d.omega_mid_hz = {Family::kGamma, 5.930, 3.180, 0.0, 0.0};
  d.omega_slope_hz = {Family::kTwoSidedExponential, -0.089, 0.185, -2.0, 0.5};
  d.filter_damping = {Family::kBeta, 0.210, 0.150, 0.02, 1.0};
  return d;
}

ScenarioSampler::ScenarioSampler(const ScenarioDistributions& d)
    : arias_(d.arias),
      d595_(d.strong_motion_duration),
      t_mid_(d.t_mid),
      omega_mid_(d.omega_mid_hz),
      omega_slope_(d.omega_slope_hz),
      damping_(d.filter_damping) {}

GroundMotionScenario ScenarioSampler::operator()(RandomStream& rng) const {
  GroundMotionScenario s;
  s.arias_intensity = arias_.sample(rng);
  s.strong_motion_duration = d595_.sample(rng);
  s.t_mid = t_mid_.sample(rng);
  s.omega_mid = 2.0 * kPi * omega_mid_.sample(rng);
  s.omega_slope = 2.0 * kPi * omega_slope_.sample(rng);
  s.filter_damping = damping_.sample(rng);
  return s;
}

GroundMotionScenario sample_scenario(RandomStream& rng, const ScenarioDistributions& dists) {
  return ScenarioSampler(dists)(rng);
}

// ---------------------------------------------------------------------------
// Envelope

ModulationParams solve_modulation_params(double arias, double d595, double t_mid) {
  if (!finite_positive(arias) || !finite_positive(d595) || !finite_positive(t_mid))
    throw InfeasibleScenario("modulation inputs must be positive");
  const double target = d595 / t_mid;
  auto residual = [target](double alpha2) { return quantile_ratio(2.0 * alpha2 - 1.0) - target; };

  const double f_lo = residual(kShapeLo);
  const double f_hi = residual(kShapeHi);
  if (f_lo * f_hi > 0.0)
    throw InfeasibleScenario("no envelope shape reproduces D5-95/t_mid = " + std::to_string(target));

  std::uintmax_t max_iter = 200;
  const auto [lo, hi] = boost::math::tools::toms748_solve(
      residual, kShapeLo, kShapeHi, f_lo, f_hi, boost::math::tools::eps_tolerance<double>(48),
      max_iter);
  ModulationParams p;
  p.alpha2 = 0.5 * (lo + hi);
  const double shape = p.envelope_shape();
  const double rate = boost::math::gamma_p_inv(shape, 0.45) / t_mid;
  p.alpha3 = 0.5 * rate;

  // integral of q^2 = alpha1^2 * Gamma(shape) / rate^shape
  const double energy = arias / kAriasFactor;
  p.alpha1 = std::exp(0.5 * (std::log(energy) + shape * std::log(rate) - std::lgamma(shape)));

  if (p.envelope_quantile(0.95) > kMaxRecordDuration)
    throw InfeasibleScenario("envelope strong phase ends after the maximum record duration");
  return p;
}

double total_duration(const ModulationParams& params) {
  return std::clamp(params.envelope_quantile(0.99), kMinRecordDuration, kMaxRecordDuration);
}

// ---------------------------------------------------------------------------
// Synthesis

std::size_t impulse_count(const GroundMotionScenario& scenario, double dt) {
  const auto params = solve_modulation_params(scenario.arias_intensity, scenario.strong_motion_duration,
                                              scenario.t_mid);
  return static_cast<std::size_t>(std::ceil(total_duration(params) / dt - 1e-9));
}

namespace {

void check_dt(double dt) {
  if (!(dt > 0.0 && dt <= 0.05)) throw PreconditionError("synthesis dt must lie in (0, 0.05]");
}

// Number of lags m >= 1 kept for an impulse with decay rate zeta * omega.
std::size_t kept_lags(double efolds, double decay, double dt, std::size_t available) {
  if (!std::isfinite(efolds)) return available;
  const double m = std::floor(efolds / (decay * dt));
  if (!(m < static_cast<double>(available))) return available;
  return std::max<std::size_t>(1, static_cast<std::size_t>(m));
}

}  // namespace

Accelerogram synthesize(const GroundMotionScenario& scenario, RandomStream& rng,
                        const SynthesisOptions& options) {
  check_dt(options.dt);
  const std::size_t n = impulse_count(scenario, options.dt);
  std::vector<double> impulses(n);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (double& u : impulses) u = unit(rng);
  return synthesize_from_impulses(scenario, impulses, options);
}

Accelerogram synthesize_from_impulses(const GroundMotionScenario& scenario,
                                      std::span<const double> impulses,
                                      const SynthesisOptions& options) {
  scenario.validate();
  check_dt(options.dt);
  const double dt = options.dt;
  const auto params = solve_modulation_params(scenario.arias_intensity, scenario.strong_motion_duration,
                                              scenario.t_mid);
  const auto filter = FilterParams::from(scenario);
  const std::size_t n = impulses.size();
  if (n < 1) throw PreconditionError("synthesis needs at least one impulse");

  // Sample k (k = 1..n) sits at t_k = k dt; impulse i excites at t_i = i dt.
  std::vector<double> numerator(n + 1, 0.0);
  std::vector<double> denominator(n + 1, 0.0);
  const double root = std::sqrt(1.0 - filter.damping * filter.damping);

  for (std::size_t i = 1; i <= n; ++i) {
    const double w = filter.frequency(static_cast<double>(i) * dt);
    const double amplitude = w / root;
    const double decay = filter.damping * w;
    const std::complex<double> step = std::exp(std::complex<double>(-decay * dt, w * root * dt));
    const std::size_t lags = kept_lags(options.truncation_efolds, decay, dt, n - i);
    const double u = impulses[i - 1];
    std::complex<double> z = step;
    for (std::size_t m = 1; m <= lags; ++m) {
      if (m % 64 == 0) z = std::exp(std::complex<double>(-decay * dt, w * root * dt) * static_cast<double>(m));
      const double h = amplitude * z.imag();
      numerator[i + m] += h * u;
      denominator[i + m] += h * h;
      z *= step;
    }
  }

  Accelerogram out;
  out.dt = dt;
  out.scenario = scenario;
  out.samples.assign(n + 1, 0.0);
  for (std::size_t k = 1; k <= n; ++k) {
    const double q = params.q(static_cast<double>(k) * dt);
    // At t_1 only the impulse at the same instant exists; its normalized
    // weight is the right limit h/|h| = 1.
    out.samples[k] = denominator[k] > 0.0 ? q * numerator[k] / std::sqrt(denominator[k])
                                          : q * impulses[k - 1];
  }
  return out;
}

std::vector<double> impulse_weights(const GroundMotionScenario& scenario, std::size_t k,
                                    const SynthesisOptions& options) {
  scenario.validate();
  if (k < 1) throw PreconditionError("impulse weights are defined for k >= 1");
  const double dt = options.dt;
  const auto filter = FilterParams::from(scenario);
  const double t_k = static_cast<double>(k) * dt;
  std::vector<double> s(k, 0.0);
  double total = 0.0;
  for (std::size_t i = 1; i <= k; ++i) {
    const double tau = static_cast<double>(i) * dt;
    const double decay = filter.damping * filter.frequency(tau);
    if (k - i > kept_lags(options.truncation_efolds, decay, dt, std::numeric_limits<std::size_t>::max()))
      continue;
    const double h = filter.impulse_response(t_k - tau, tau);
    s[i - 1] = h;
    total += h * h;
  }
  if (total == 0.0) {
    s.assign(k, 0.0);
    s[k - 1] = 1.0;
    return s;
  }
  const double norm = std::sqrt(total);
  for (double& x : s) x /= norm;
  return s;
}

double normalization_residual(const GroundMotionScenario& scenario, const SynthesisOptions& options) {
  const std::size_t n = impulse_count(scenario, options.dt);
  double worst = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const auto s = impulse_weights(scenario, k, options);
    double sum = 0.0;
    for (double x : s) sum += x * x;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Intensity measures

double compute_pga(const Accelerogram& a) {
  if (a.samples.empty()) throw PreconditionError("PGA of an empty record");
  double peak = 0.0;
  for (double x : a.samples) peak = std::max(peak, std::abs(x));
  return peak;
}

AriasEvolution compute_arias_evolution(const Accelerogram& a) {
  if (a.samples.empty()) throw PreconditionError("Arias intensity of an empty record");
  AriasEvolution ev;
  ev.cumulative.assign(a.samples.size(), 0.0);
  const double c = kAriasFactor * a.dt * 0.5;
  for (std::size_t k = 1; k < a.samples.size(); ++k) {
    const double x0 = a.samples[k - 1];
    const double x1 = a.samples[k];
    ev.cumulative[k] = ev.cumulative[k - 1] + c * (x0 * x0 + x1 * x1);
  }
  ev.total = ev.cumulative.back();
  return ev;
}

double compute_t_alpha(const Accelerogram& a, const AriasEvolution& ev, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw PreconditionError("alpha must lie in (0,1)");
  if (!(ev.total > 0.0)) throw UndefinedMeasure("t_alpha undefined for a zero-energy record");
  const double target = alpha * ev.total;
  const auto it = std::lower_bound(ev.cumulative.begin(), ev.cumulative.end(), target);
  const auto k = static_cast<std::size_t>(it - ev.cumulative.begin());
  if (k == 0) return 0.0;
  const double lo = ev.cumulative[k - 1];
  const double hi = ev.cumulative[k];
  const double frac = hi > lo ? (target - lo) / (hi - lo) : 0.0;
  return a.dt * (static_cast<double>(k - 1) + frac);
}

double compute_t_alpha(const Accelerogram& a, double alpha) {
  return compute_t_alpha(a, compute_arias_evolution(a), alpha);
}

double compute_d595(const Accelerogram& a) {
  const auto ev = compute_arias_evolution(a);
  return compute_t_alpha(a, ev, 0.95) - compute_t_alpha(a, ev, 0.05);
}

double compute_t_mid(const Accelerogram& a) { return compute_t_alpha(a, 0.45); }

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::string scenario_line(const GroundMotionScenario& s) {
  using io::format_double;
  return format_double(s.arias_intensity) + "," + format_double(s.strong_motion_duration) + "," +
         format_double(s.t_mid) + "," + format_double(s.omega_mid) + "," + format_double(s.omega_slope) +
         "," + format_double(s.filter_damping);
}

GroundMotionScenario parse_scenario(std::string_view text) {
  const auto f = io::split(text);
  if (f.size() != 6) throw Error("scenario header needs six values");
  return {io::parse_double(f[0]), io::parse_double(f[1]), io::parse_double(f[2]),
          io::parse_double(f[3]), io::parse_double(f[4]), io::parse_double(f[5])};
}

}  // namespace

void write_accelerogram(std::ostream& out, const Accelerogram& a) {
  out << "# dt=" << io::format_double(a.dt) << '\n';
  if (a.scenario) out << "# scenario=" << scenario_line(*a.scenario) << '\n';
  for (double x : a.samples) out << io::format_double(x) << '\n';
}

Accelerogram read_accelerogram(std::istream& in) {
  Accelerogram a;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = io::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      const auto body = io::trim(t.substr(1));
      if (body.starts_with("dt=")) a.dt = io::parse_double(body.substr(3));
      else if (body.starts_with("scenario=")) a.scenario = parse_scenario(body.substr(9));
      continue;
    }
    a.samples.push_back(io::parse_double(t));
  }
  a.validate();
  return a;
}

void write_accelerogram_csv(std::ostream& out, const Accelerogram& a) {
  out << "t,a\n";
  for (std::size_t k = 0; k < a.samples.size(); ++k)
    out << io::format_double(a.dt * static_cast<double>(k)) << ',' << io::format_double(a.samples[k]) << '\n';
}

Accelerogram read_accelerogram_csv(std::istream& in) {
  Accelerogram a;
  std::string line;
  std::vector<double> times;
  bool header = true;
  while (std::getline(in, line)) {
    const auto t = io::trim(line);
    if (t.empty()) continue;
    if (header) {
      header = false;
      if (t == "t,a") continue;
    }
    const auto f = io::split(t);
    if (f.size() != 2) throw Error("accelerogram CSV rows need two columns");
    times.push_back(io::parse_double(f[0]));
    a.samples.push_back(io::parse_double(f[1]));
  }
  if (times.size() < 2) throw PreconditionError("accelerogram needs at least two samples");
  a.dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  a.validate();
  return a;
}

}  // namespace seisfrag::gm
