#pragma once

// Nonlinear shear-building surrogate: lumped floor masses, one bilinear
// kinematic-hardening spring per storey, Rayleigh damping, and an
// average-acceleration Newmark integrator with Newton iterations.

#include <cstddef>
#include <cmath>
#include <limits>
#include <vector>

#include "seisfrag/ground_motion.hpp"

namespace seisfrag::structure {

struct ShearBuildingModel {
  std::vector<double> storey_mass;       // kg, floor 1 first
  std::vector<double> storey_stiffness;  // N/m, storey 1 (ground) first
  double storey_height = 3.0;            // m
  // Drift ratio at first yield; infinity gives a linear model.
  double yield_drift_ratio = 0.006;
  double hardening_ratio = 0.01;
  double damping_ratio = 0.02;  // Rayleigh, anchored on modes 1 and 2

  std::size_t n_storeys() const { return storey_mass.size(); }
  bool is_linear() const { return !std::isfinite(yield_drift_ratio); }
  double yield_displacement() const { return yield_drift_ratio * storey_height; }
  void validate() const;  // throws ConfigError

  // Uniform building whose stiffness reproduces target_t1.
  static ShearBuildingModel calibrated(std::size_t n_storeys = 3, double floor_mass = 30.58e3,
                                       double target_t1 = 0.42);
  ShearBuildingModel linearized() const;
};

struct ModalData {
  std::vector<double> omegas;  // rad/s, ascending
  std::vector<double> periods;  // s, descending
  // Mass-normalized mode shapes, shapes[j][floor].
  std::vector<std::vector<double>> shapes;
};

ModalData modal_analysis(const ShearBuildingModel& model);  // throws NumericalError
std::vector<double> modal_periods(const ShearBuildingModel& model);

// Uniform storey stiffness giving a fundamental period of target_t1 for the
// given floor masses.
double calibrate_stiffness(const std::vector<double>& masses, double target_t1);

// Rayleigh coefficients (a0, a1) with C = a0 M + a1 K.
struct RayleighCoefficients {
  double mass = 0.0;
  double stiffness = 0.0;
};
RayleighCoefficients rayleigh_coefficients(const ShearBuildingModel& model);

// ---------------------------------------------------------------------------

struct BilinearState {
  double plastic_offset = 0.0;  // m
  double back_force = 0.0;      // N, centre of the elastic range
  double last_force = 0.0;      // N
};

struct SpringResponse {
  double force = 0.0;
  double tangent = 0.0;
  BilinearState state;
};

// Bilinear spring with kinematic hardening: elastic slope k, post-yield slope
// b * k, elastic range of width 2 * k * yield_disp.
SpringResponse bilinear_restoring(const BilinearState& state, double drift, double yield_disp, double k,
                                  double b);

// ---------------------------------------------------------------------------

struct TransientOptions {
  bool record_history = false;
  int max_newton_iterations = 50;
  double newton_tolerance = 1e-8;  // relative to the reference storey force
  int max_halvings = 2;
  std::size_t step_refinement = 1;  // extra even split of the integration step
};

struct EnergyBalance {
  double input = 0.0;
  double kinetic = 0.0;
  double damping = 0.0;
  double restoring = 0.0;  // recoverable strain plus hysteretic work

  double residual() const { return input - (kinetic + damping + restoring); }
};

struct ResponseHistory {
  std::vector<double> time;
  std::vector<std::vector<double>> displacement;  // [floor][sample]
  std::vector<double> drift_max;                   // running max drift ratio
};

struct TransientResult {
  double max_interstorey_drift_ratio = 0.0;
  std::vector<double> peak_storey_forces;
  bool converged = true;
  std::size_t steps = 0;
  EnergyBalance energy;
  ResponseHistory history;  // empty unless requested
};

TransientResult newmark_transient(const ShearBuildingModel& model, const gm::Accelerogram& a,
                                  const TransientOptions& options = {});

// Integration step used for a record: a.dt split evenly so that the step
// does not exceed T2 / 20 (T1 / 20 for a single storey).
double integration_step(const ShearBuildingModel& model, double record_dt);

// ---------------------------------------------------------------------------

// Peak |relative displacement| of a linear SDOF oscillator under base
// acceleration a; exact for piecewise-linear excitation.
double linear_sdof_peak(double omega, double zeta, const gm::Accelerogram& a);

// Pseudo-spectral acceleration omega^2 * peak displacement, in m/s^2.
double spectral_acceleration(double period, double zeta, const gm::Accelerogram& a);

}  // namespace seisfrag::structure
