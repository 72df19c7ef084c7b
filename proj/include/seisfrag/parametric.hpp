#pragma once

// Lognormal fragility curves fitted by maximum likelihood on exceedance
// indicators, or derived from a log-linear demand model.

#include <optional>
#include <span>
#include <string>

#include "seisfrag/fragility.hpp"

namespace seisfrag::parametric {

struct LognormalCurve {
  double median_alpha = 1.0;
  double logstd_beta = 1.0;

  void validate() const;
};

double evaluate_lognormal(const LognormalCurve& curve, double im);

FragilityCurveEstimate tabulate(const LognormalCurve& curve, std::span<const double> im_grid,
                                double delta0, std::string method);

struct MleOptions {
  // Convergence: best/worst log-likelihood spread and simplex size.
  double f_tolerance = 1e-10;
  double x_tolerance = 1e-8;
  int max_evaluations = 20000;
  int restarts = 3;
  double initial_beta = 0.6;
  double degenerate_beta = 1e-4;
};

struct MleFit {
  LognormalCurve curve;
  double log_likelihood = 0.0;
  std::size_t exceedances = 0;
  std::size_t n = 0;
  // Set when the data are completely separated (or beta collapsed): the
  // maximum-likelihood curve is a step. step_im is the separating IM.
  bool degenerate = false;
  std::optional<double> step_im;
  std::string diagnostic;
};

// Exceedance is delta >= delta0. Throws PreconditionError when all
// indicators are equal.
MleFit fit_mle(std::span<const FragilitySample> samples, double delta0, const MleOptions& options = {});

// Bernoulli log-likelihood of a curve for given exceedance threshold.
double mle_log_likelihood(std::span<const FragilitySample> samples, double delta0, const LognormalCurve& curve);

// log delta = A log IM + B + zeta Z.
struct PsdmFit {
  double slope_a = 0.0;
  double intercept_b = 0.0;
  double dispersion_zeta = 0.0;
  double r_squared = 0.0;
  std::size_t n_used = 0;
};

// Samples with delta <= 0 are skipped. Throws PreconditionError for fewer
// than three usable samples and NumericalError for zero IM variance.
PsdmFit fit_psdm(std::span<const FragilitySample> samples);

// Throws NumericalError when slope_a <= 0.
LognormalCurve curve_from_psdm(const PsdmFit& fit, double delta0);

}  // namespace seisfrag::parametric
