#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "seisfrag/common.hpp"
#include "seisfrag/ground_motion.hpp"
#include "seisfrag/random.hpp"
#include "seisfrag/structural.hpp"

using namespace seisfrag;
using namespace seisfrag::structure;

namespace {

gm::Accelerogram record(std::uint64_t index) {
  auto rng = make_stream(derive_seed(31, index, StreamPurpose::kTest));
  const gm::ScenarioSampler sampler(gm::ScenarioDistributions::defaults());
  for (;;) {
    const auto s = sampler(rng);
    try {
      s.validate();
      gm::solve_modulation_params(s.arias_intensity, s.strong_motion_duration, s.t_mid);
    } catch (const InfeasibleScenario&) {
      continue;
    }
    return gm::synthesize(s, rng);
  }
}

gm::Accelerogram scaled(gm::Accelerogram a, double c) {
  for (double& x : a.samples) x *= c;
  return a;
}

}  // namespace

TEST_CASE("calibrated building hits the target fundamental period") {
  const auto m = ShearBuildingModel::calibrated();
  const auto T = modal_periods(m);
  REQUIRE(T.size() == 3);
  CHECK(T[0] == doctest::Approx(0.42).epsilon(1e-12));
  CHECK(T[0] > T[1]);
  CHECK(T[1] > T[2]);
  // Uniform chain: T1 / T2 = sin(3 pi / 14) / sin(pi / 14).
  CHECK(T[0] / T[1] == doctest::Approx(std::sin(3 * kPi / 14) / std::sin(kPi / 14)).epsilon(1e-10));

  ShearBuildingModel uneven;
  uneven.storey_mass = {40e3, 30e3, 20e3};
  uneven.storey_stiffness.assign(3, calibrate_stiffness(uneven.storey_mass, 0.5));
  CHECK(modal_periods(uneven)[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("mode shapes are mass-orthonormal") {
  const auto m = ShearBuildingModel::calibrated();
  const auto modal = modal_analysis(m);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (std::size_t f = 0; f < 3; ++f) dot += modal.shapes[i][f] * m.storey_mass[f] * modal.shapes[j][f];
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10).scale(1.0));
    }
}

TEST_CASE("non positive definite stiffness is a numerical error") {
  auto m = ShearBuildingModel::calibrated();
  m.storey_stiffness[1] = -1.0;
  CHECK_THROWS_AS(modal_analysis(m), NumericalError);
  CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("Rayleigh damping gives the target ratio on modes 1 and 2") {
  const auto m = ShearBuildingModel::calibrated();
  const auto c = rayleigh_coefficients(m);
  const auto w = modal_analysis(m).omegas;
  for (int j = 0; j < 2; ++j) CHECK(c.mass / (2 * w[j]) + c.stiffness * w[j] / 2 == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(c.mass / (2 * w[2]) + c.stiffness * w[2] / 2 > 0.02);
}

TEST_CASE("bilinear spring follows elastic, hardening and unloading branches") {
  const double k = 1000.0, dy = 0.01, b = 0.01;
  BilinearState s;
  auto r = bilinear_restoring(s, 0.005, dy, k, b);
  CHECK(r.force == doctest::Approx(5.0));
  CHECK(r.tangent == k);
  r = bilinear_restoring(s, 0.03, dy, k, b);
  CHECK(r.force == doctest::Approx(k * dy + b * k * (0.03 - dy)));
  CHECK(r.tangent == doctest::Approx(b * k));
  // Unloading by almost 2 yield displacements stays elastic under kinematic hardening.
  const auto u = bilinear_restoring(r.state, 0.03 - 1.9 * dy, dy, k, b);
  CHECK(u.force == doctest::Approx(r.force - 1.9 * k * dy));
  CHECK(u.tangent == k);
}

TEST_CASE("bilinear force stays inside the hardening bounds for arbitrary histories") {
  const double k = 2.5e6, dy = 0.018, b = 0.01;
  std::mt19937_64 rng(12);
  std::normal_distribution<double> step(0.0, 0.01);
  BilinearState s;
  double d = 0.0;
  for (int i = 0; i < 20000; ++i) {
    d += step(rng);
    const auto r = bilinear_restoring(s, d, dy, k, b);
    CHECK(std::abs(r.force - b * k * d) <= (1.0 - b) * k * dy * (1.0 + 1e-9));
    s = r.state;
  }
}

TEST_CASE("integration step respects the second-mode limit") {
  const auto m = ShearBuildingModel::calibrated();
  const double T2 = modal_periods(m)[1];
  const double h = integration_step(m, 0.01);
  CHECK(h <= T2 / 20.0 + 1e-15);
  CHECK(std::fmod(0.01 / h, 1.0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
}

TEST_CASE("linear model is homogeneous in the excitation") {
  const auto m = ShearBuildingModel::calibrated().linearized();
  for (std::uint64_t r = 0; r < 3; ++r) {
    const auto a = record(r);
    const double base = newmark_transient(m, a).max_interstorey_drift_ratio;
    for (double c : {0.5, 2.0, 10.0})
      CHECK(newmark_transient(m, scaled(a, c)).max_interstorey_drift_ratio ==
            doctest::Approx(c * base).epsilon(1e-10));
  }
}

TEST_CASE("linear response matches modal superposition") {
  const auto m = ShearBuildingModel::calibrated().linearized();
  for (std::uint64_t r = 0; r < 3; ++r) {
    const auto a = record(r);
    CHECK(newmark_transient(m, a).max_interstorey_drift_ratio ==
          doctest::Approx(oracle::modal_peak_drift(m, a)).epsilon(0.005));
  }
}

TEST_CASE("below yield the nonlinear and linear paths agree") {
  const auto m = ShearBuildingModel::calibrated();
  const auto a0 = record(4);
  const double lin = newmark_transient(m.linearized(), a0).max_interstorey_drift_ratio;
  const auto a = scaled(a0, 0.5 * m.yield_drift_ratio / lin);
  const auto nl = newmark_transient(m, a);
  const auto li = newmark_transient(m.linearized(), a);
  CHECK(nl.max_interstorey_drift_ratio < m.yield_drift_ratio);
  CHECK(nl.max_interstorey_drift_ratio == doctest::Approx(li.max_interstorey_drift_ratio).epsilon(0.005));
}

TEST_CASE("halving the step changes drift by under one percent") {
  const auto m = ShearBuildingModel::calibrated();
  TransientOptions fine;
  fine.step_refinement = 2;
  for (std::uint64_t r = 0; r < 20; ++r) {
    const auto a = record(100 + r);
    const double d1 = newmark_transient(m, a).max_interstorey_drift_ratio;
    const double d2 = newmark_transient(m, a, fine).max_interstorey_drift_ratio;
    CHECK(d2 == doctest::Approx(d1).epsilon(0.01));
  }
}

TEST_CASE("energy balance closes for yielding and elastic response") {
  const auto m = ShearBuildingModel::calibrated();
  for (std::uint64_t r = 0; r < 5; ++r) {
    const auto a = scaled(record(200 + r), 3.0);
    const auto res = newmark_transient(m, a);
    CHECK(res.converged);
    CHECK(res.energy.input > 0.0);
    CHECK(std::abs(res.energy.residual()) / res.energy.input < 0.02);
    const auto lin = newmark_transient(m.linearized(), a);
    CHECK(std::abs(lin.energy.residual()) / lin.energy.input < 0.02);
  }
}

TEST_CASE("yielding caps the storey forces") {
  const auto m = ShearBuildingModel::calibrated();
  for (std::uint64_t r = 0; r < 5; ++r) {
    const auto a = scaled(record(300 + r), 4.0);
    const auto nl = newmark_transient(m, a);
    const auto li = newmark_transient(m.linearized(), a);
    REQUIRE(nl.peak_storey_forces.size() == 3);
    for (std::size_t s = 0; s < 3; ++s) CHECK(nl.peak_storey_forces[s] <= li.peak_storey_forces[s] * (1 + 1e-9));
  }
}

TEST_CASE("drift is non-negative, finite and history is recorded on request") {
  const auto m = ShearBuildingModel::calibrated();
  TransientOptions opt;
  opt.record_history = true;
  const auto a = record(7);
  const auto res = newmark_transient(m, a, opt);
  CHECK(res.max_interstorey_drift_ratio >= 0.0);
  CHECK(std::isfinite(res.max_interstorey_drift_ratio));
  CHECK(res.history.time.size() == a.samples.size());
  CHECK(res.history.drift_max.back() == doctest::Approx(res.max_interstorey_drift_ratio));
}

TEST_CASE("spectral acceleration matches the Duhamel integral") {
  for (std::uint64_t r = 0; r < 4; ++r) {
    const auto a = record(400 + r);
    for (double T : {0.1, 0.42, 1.0, 3.0}) {
      const double w = 2.0 * kPi / T;
      const double sa = spectral_acceleration(T, 0.05, a);
      CHECK(sa == doctest::Approx(w * w * oracle::duhamel_peak(w, 0.05, a)).epsilon(1e-3));
    }
  }
}

TEST_CASE("spectral acceleration of a stiff oscillator tends to PGA") {
  const auto a = record(9);
  CHECK(spectral_acceleration(0.005, 0.05, a) == doctest::Approx(gm::compute_pga(a)).epsilon(0.02));
}
