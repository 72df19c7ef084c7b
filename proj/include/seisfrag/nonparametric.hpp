#pragma once

// Shape-free fragility estimators: binned Monte Carlo with local amplitude
// scaling, and conditional Gaussian kernel density estimation carried out
// in (log IM, log delta).

#include <span>

#include "seisfrag/fragility.hpp"

namespace seisfrag::nonparametric {

struct BmcsSettings {
  double relative_half_width = 0.2;  // bin = [IM0 (1 - h), IM0 (1 + h)]
  std::size_t min_bin_count = 30;

  void validate() const;  // throws ConfigError
};

// Bins with fewer than min_bin_count samples carry probability NaN.
FragilityCurveEstimate bmcs_fragility(std::span<const FragilitySample> samples, double delta0,
                                      std::span<const double> im_grid, const BmcsSettings& settings = {});

enum class BandwidthSelector { kNormalReference, kUserSupplied };

enum class MarginalMode {
  kMatrixConsistent,  // marginal bandwidth sqrt(H11); result is a convex combination
  kPaperFaithful,     // separately bandwidthed marginal in the denominator
};

// Symmetric bandwidth matrix in (log IM, log delta).
struct BandwidthMatrix {
  double h11 = 0.0;
  double h12 = 0.0;
  double h22 = 0.0;

  double determinant() const { return h11 * h22 - h12 * h12; }
  bool is_spd() const { return h11 > 0.0 && h22 > 0.0 && determinant() > 0.0; }
};

struct KdeSettings {
  double marginal_bandwidth = 0.0;  // h_IM, log-IM units
  BandwidthMatrix bandwidth;
  BandwidthSelector selector = BandwidthSelector::kNormalReference;
  MarginalMode marginal_mode = MarginalMode::kMatrixConsistent;

  void validate() const;  // throws ConfigError
};

// (1 / (N h)) sum phi((u - u_i) / h).
double kde_marginal_pdf(std::span<const double> log_ims, double h, double u);

// Normal-reference rule: H = N^(-1/3) Sigma, h_IM = (4/3)^(1/5) sigma_u N^(-1/5).
// Requires N >= 50 and strictly positive IM and delta. Throws NumericalError
// for a singular sample covariance.
KdeSettings select_bandwidths(std::span<const FragilitySample> samples);

FragilityCurveEstimate kde_fragility(std::span<const FragilitySample> samples, double delta0,
                                     std::span<const double> im_grid, const KdeSettings& settings);

// 60 log-spaced points between the 2nd and 98th percentile of the sample IMs.
std::vector<double> default_im_grid(std::span<const FragilitySample> samples, std::size_t points = 60);

}  // namespace seisfrag::nonparametric
