#pragma once

// Bootstrap quantification of estimator variability for fragility curves.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seisfrag/fragility.hpp"
#include "seisfrag/random.hpp"

namespace seisfrag::bootstrap {

struct BootstrapSettings {
  std::size_t replications = 100;
  double confidence = 0.95;
  std::uint64_t master_seed = 0;
  bool mean_curve = false;  // central curve is the pointwise median unless set
  std::size_t jobs = 1;

  void validate() const;  // throws ConfigError
};

struct BootstrapSummary {
  FragilityCurveEstimate median_curve;
  FragilityCurveEstimate lower_envelope;
  FragilityCurveEstimate upper_envelope;
  // One entry per successful replication; nullopt where the curve never
  // reached 0.5.
  std::vector<std::optional<double>> median_im_samples;
  std::optional<double> logstd_median_im;
  std::size_t dropped = 0;
  std::string diagnostic;
};

using Estimator =
    std::function<FragilityCurveEstimate(std::span<const FragilitySample>, double, std::span<const double>)>;

// N draws with replacement.
SampleSet resample(std::span<const FragilitySample> samples, RandomStream& rng);

// Throws NumericalError when more than 30% of replications fail.
BootstrapSummary bootstrap_curves(const Estimator& estimator, std::span<const FragilitySample> samples,
                                  double delta0, std::span<const double> im_grid,
                                  const BootstrapSettings& settings);

// First upward crossing of probability 0.5, interpolated linearly in
// (log IM, probability). nullopt when the curve never crosses.
std::optional<double> median_im(const FragilityCurveEstimate& curve);

// Sample standard deviation of log median IM; nullopt with fewer than
// `min_present` present values.
std::optional<double> logstd_median_im(std::span<const std::optional<double>> median_ims,
                                       std::size_t min_present = 10);

}  // namespace seisfrag::bootstrap
