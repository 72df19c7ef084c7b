#pragma once

// Stochastic ground-motion synthesis: modulated, filtered Gaussian white
// noise with a Gamma-shaped envelope, plus the Arias-intensity family of
// intensity measures that parameterize it.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seisfrag/random.hpp"

namespace seisfrag::gm {

// One synthetic earthquake. Frequencies in rad/s, times in s, Arias in m/s.
struct GroundMotionScenario {
  double arias_intensity = 0.0;
  double strong_motion_duration = 0.0;  // D5-95
  double t_mid = 0.0;                   // t45
  double omega_mid = 0.0;
  double omega_slope = 0.0;  // rad/s^2, may be negative
  double filter_damping = 0.0;

  void validate() const;  // throws InfeasibleScenario
  bool operator==(const GroundMotionScenario&) const = default;
};

// q(t) = alpha1 * t^(alpha2 - 1) * exp(-alpha3 * t).
// q^2 is proportional to a Gamma density with shape 2*alpha2 - 1 and rate 2*alpha3.
struct ModulationParams {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double alpha3 = 0.0;

  double envelope_shape() const { return 2.0 * alpha2 - 1.0; }
  double envelope_rate() const { return 2.0 * alpha3; }
  double q(double t) const;
  // Fraction of the total q^2 energy accumulated by time t.
  double envelope_cdf(double t) const;
  double envelope_quantile(double p) const;
};

// Time-varying filter: omega_f(tau) = omega_mid + omega_slope * (tau - t_mid),
// clamped from below at kMinFrequency.
struct FilterParams {
  static constexpr double kMinFrequency = 0.1;  // rad/s

  double omega_mid = 0.0;
  double omega_slope = 0.0;
  double damping = 0.0;
  double t_mid = 0.0;

  static FilterParams from(const GroundMotionScenario& s);
  double frequency(double tau) const;
  // Unit impulse response h(lag) of the filter excited at instant tau.
  double impulse_response(double lag, double tau) const;
};

struct Accelerogram {
  double dt = 0.0;
  std::vector<double> samples;  // m/s^2, samples[k] at t = k * dt
  std::optional<GroundMotionScenario> scenario;

  double duration() const { return dt * static_cast<double>(samples.size() - 1); }
  void validate() const;  // throws PreconditionError
};

// ---------------------------------------------------------------------------
// Scenario distributions
// ---------------------------------------------------------------------------

enum class Family { kLognormal, kBeta, kGamma, kTwoSidedExponential };

// A marginal described by its mean and standard deviation, plus a support
// for the bounded families (ignored by lognormal and gamma).
struct MarginalSpec {
  Family family = Family::kLognormal;
  double mean = 0.0;
  double std = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// Moment-matched native parameters of a MarginalSpec.
class Marginal {
 public:
  explicit Marginal(const MarginalSpec& spec);  // throws ConfigError when infeasible

  double sample(RandomStream& rng) const;
  const MarginalSpec& spec() const { return spec_; }

  // Native parameters, named per family:
  //   lognormal: (mu_ln, sigma_ln)      gamma: (shape, rate)
  //   beta: (p, q) on [lower, upper]    two-sided exponential: (left_scale, right_scale), mode 0
  double first() const { return a_; }
  double second() const { return b_; }

 private:
  MarginalSpec spec_;
  double a_ = 0.0;
  double b_ = 0.0;
};

struct ScenarioDistributions {
  MarginalSpec arias;
  MarginalSpec strong_motion_duration;
  MarginalSpec t_mid;
  MarginalSpec omega_mid_hz;    // omega_mid / 2pi
  MarginalSpec omega_slope_hz;  // omega' / 2pi
  MarginalSpec filter_damping;

  static ScenarioDistributions defaults();
};

class ScenarioSampler {
 public:
  explicit ScenarioSampler(const ScenarioDistributions& dists);
  GroundMotionScenario operator()(RandomStream& rng) const;

 private:
  Marginal arias_, d595_, t_mid_, omega_mid_, omega_slope_, damping_;
};

GroundMotionScenario sample_scenario(RandomStream& rng, const ScenarioDistributions& dists);

// ---------------------------------------------------------------------------
// Envelope inversion and synthesis
// ---------------------------------------------------------------------------

inline constexpr double kMinRecordDuration = 5.0;   // s
inline constexpr double kMaxRecordDuration = 40.0;  // s

// Throws InfeasibleScenario when no shape in the bracket reproduces the
// requested D5-95 / t_mid ratio, or when the envelope's 95% instant falls
// after kMaxRecordDuration.
ModulationParams solve_modulation_params(double arias, double d595, double t_mid);

// clamp(t99 of the q^2 envelope, kMinRecordDuration, kMaxRecordDuration).
double total_duration(const ModulationParams& params);

struct SynthesisOptions {
  double dt = 0.01;
  // Impulse responses are dropped once lag * zeta * omega exceeds this many
  // e-folds. Infinity keeps the full O(n^2) sum.
  double truncation_efolds = 8.0;
};

Accelerogram synthesize(const GroundMotionScenario& scenario, RandomStream& rng,
                        const SynthesisOptions& options = {});

// Deterministic core of the synthesis: one standard-normal impulse per grid
// instant t_i = i * dt, i = 1..n. impulses.size() fixes n.
Accelerogram synthesize_from_impulses(const GroundMotionScenario& scenario,
                                      std::span<const double> impulses,
                                      const SynthesisOptions& options = {});

// Number of impulses (= number of samples after t = 0) for a scenario.
std::size_t impulse_count(const GroundMotionScenario& scenario, double dt);

// Normalized weights s_i(t_k), i = 1..k, evaluated directly from the filter
// formula. Index 0 of the result corresponds to i = 1.
std::vector<double> impulse_weights(const GroundMotionScenario& scenario, std::size_t k,
                                    const SynthesisOptions& options = {});

// max_k |sum_i s_i(t_k)^2 - 1| over every sample of the record.
double normalization_residual(const GroundMotionScenario& scenario,
                              const SynthesisOptions& options = {});

// ---------------------------------------------------------------------------
// Intensity measures
// ---------------------------------------------------------------------------

double compute_pga(const Accelerogram& a);

struct AriasEvolution {
  std::vector<double> cumulative;  // I(t_k), m/s
  double total = 0.0;              // I_a
};

AriasEvolution compute_arias_evolution(const Accelerogram& a);

// First instant where I(t) reaches alpha * I_a. Throws UndefinedMeasure for
// a zero-energy record.
double compute_t_alpha(const Accelerogram& a, double alpha);
double compute_t_alpha(const Accelerogram& a, const AriasEvolution& evolution, double alpha);
double compute_d595(const Accelerogram& a);
double compute_t_mid(const Accelerogram& a);

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

// "# dt=<s>", optional "# scenario=<six values>", then one sample per line.
void write_accelerogram(std::ostream& out, const Accelerogram& a);
Accelerogram read_accelerogram(std::istream& in);

// "t,a" header then one row per sample.
void write_accelerogram_csv(std::ostream& out, const Accelerogram& a);
Accelerogram read_accelerogram_csv(std::istream& in);

}  // namespace seisfrag::gm
