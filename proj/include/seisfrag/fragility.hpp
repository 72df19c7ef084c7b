#pragma once

// Types shared by every fragility estimator.

#include <cstddef>
#include <string>
#include <vector>

namespace seisfrag {

// One transient analysis: intensity measure and maximal inter-storey drift ratio.
struct FragilitySample {
  double im = 0.0;
  double delta = 0.0;
};

using SampleSet = std::vector<FragilitySample>;

struct CurvePoint {
  double im = 0.0;
  double probability = 0.0;  // NaN when the point is not supported
  std::size_t support_count = 0;
};

// Tabulated estimate of P[delta >= delta0 | IM].
struct FragilityCurveEstimate {
  std::string method;
  double delta0 = 0.0;
  std::vector<CurvePoint> grid;
  std::string settings;          // provenance, free-form key=value list
  std::size_t range_violations = 0;

  std::vector<double> ims() const {
    std::vector<double> out;
    out.reserve(grid.size());
    for (const auto& p : grid) out.push_back(p.im);
    return out;
  }
  std::vector<double> probabilities() const {
    std::vector<double> out;
    out.reserve(grid.size());
    for (const auto& p : grid) out.push_back(p.probability);
    return out;
  }
};

}  // namespace seisfrag
