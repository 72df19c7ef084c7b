#include "seisfrag/structural.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "seisfrag/common.hpp"

namespace seisfrag::structure {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd mass_matrix(const ShearBuildingModel& m) {
  const auto n = static_cast<Eigen::Index>(m.n_storeys());
  MatrixXd M = MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) M(i, i) = m.storey_mass[static_cast<std::size_t>(i)];
  return M;
}

// Tridiagonal chain stiffness from per-storey spring stiffnesses.
MatrixXd chain_stiffness(const std::vector<double>& k) {
  const auto n = static_cast<Eigen::Index>(k.size());
  MatrixXd K = MatrixXd::Zero(n, n);
  for (Eigen::Index s = 0; s < n; ++s) {
    const double ks = k[static_cast<std::size_t>(s)];
    K(s, s) += ks;
    if (s > 0) {
      K(s - 1, s - 1) += ks;
      K(s - 1, s) -= ks;
      K(s, s - 1) -= ks;
    }
  }
  return K;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

void ShearBuildingModel::validate() const {
  if (storey_mass.empty() || storey_mass.size() != storey_stiffness.size())
    throw ConfigError("shear building needs one mass and one stiffness per storey");
  for (double m : storey_mass)
    if (!(m > 0.0 && std::isfinite(m))) throw ConfigError("storey masses must be positive");
  for (double k : storey_stiffness)
    if (!(k > 0.0 && std::isfinite(k))) throw ConfigError("storey stiffnesses must be positive");
  if (!(storey_height > 0.0)) throw ConfigError("storey height must be positive");
  if (!(yield_drift_ratio > 0.0)) throw ConfigError("yield drift ratio must be positive");
  if (!(hardening_ratio > 0.0 && hardening_ratio < 1.0)) throw ConfigError("hardening ratio must lie in (0,1)");
  if (!(damping_ratio > 0.0 && damping_ratio < 0.2)) throw ConfigError("damping ratio must lie in (0,0.2)");
}

ShearBuildingModel ShearBuildingModel::calibrated(std::size_t n_storeys, double floor_mass, double target_t1) {
  ShearBuildingModel m;
  m.storey_mass.assign(n_storeys, floor_mass);
  m.storey_stiffness.assign(n_storeys, calibrate_stiffness(m.storey_mass, target_t1));
  return m;
}

ShearBuildingModel ShearBuildingModel::linearized() const {
  ShearBuildingModel m = *this;
  m.yield_drift_ratio = std::numeric_limits<double>::infinity();
  return m;
}

ModalData modal_analysis(const ShearBuildingModel& model) {
  if (model.storey_mass.empty() || model.storey_mass.size() != model.storey_stiffness.size())
    throw ConfigError("shear building needs one mass and one stiffness per storey");
  const MatrixXd M = mass_matrix(model);
  const MatrixXd K = chain_stiffness(model.storey_stiffness);
  if (Eigen::LLT<MatrixXd>(M).info() != Eigen::Success || Eigen::LLT<MatrixXd>(K).info() != Eigen::Success)
    throw NumericalError("mass and stiffness matrices must be symmetric positive definite");

  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> solver(K, M);
  if (solver.info() != Eigen::Success) throw NumericalError("modal eigenproblem failed");

  ModalData out;
  const auto n = K.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    const double lambda = solver.eigenvalues()(j);
    if (!(lambda > 0.0)) throw NumericalError("non-positive modal eigenvalue");
    out.omegas.push_back(std::sqrt(lambda));
    // Eigen normalizes generalized eigenvectors to phi^T M phi = 1.
    std::vector<double> shape(static_cast<std::size_t>(n));
    const double sign = solver.eigenvectors()(n - 1, j) < 0.0 ? -1.0 : 1.0;
    for (Eigen::Index i = 0; i < n; ++i) shape[static_cast<std::size_t>(i)] = sign * solver.eigenvectors()(i, j);
    out.shapes.push_back(std::move(shape));
  }
  for (double w : out.omegas) out.periods.push_back(2.0 * kPi / w);
  return out;
}

std::vector<double> modal_periods(const ShearBuildingModel& model) { return modal_analysis(model).periods; }

double calibrate_stiffness(const std::vector<double>& masses, double target_t1) {
  if (!(target_t1 > 0.0)) throw ConfigError("target period must be positive");
  if (masses.empty()) throw ConfigError("need at least one storey");
  const auto n = masses.size();
  const bool uniform = std::all_of(masses.begin(), masses.end(), [&](double m) { return m == masses.front(); });
  const double omega = 2.0 * kPi / target_t1;
  if (uniform) {
    // Fixed-free uniform chain: omega_1^2 = 4 (k/m) sin^2(pi / (2 (2n + 1))).
    const double s = std::sin(kPi / (2.0 * (2.0 * static_cast<double>(n) + 1.0)));
    return masses.front() * omega * omega / (4.0 * s * s);
  }
  // Periods scale as 1/sqrt(k) for a common storey stiffness.
  ShearBuildingModel probe;
  probe.storey_mass = masses;
  probe.storey_stiffness.assign(n, 1.0);
  const double t_unit = modal_periods(probe).front();
  return (t_unit / target_t1) * (t_unit / target_t1);
}

RayleighCoefficients rayleigh_coefficients(const ShearBuildingModel& model) {
  const auto modal = modal_analysis(model);
  const double zeta = model.damping_ratio;
  if (modal.omegas.size() == 1) return {0.0, 2.0 * zeta / modal.omegas[0]};
  const double w1 = modal.omegas[0];
  const double w2 = modal.omegas[1];
  return {2.0 * zeta * w1 * w2 / (w1 + w2), 2.0 * zeta / (w1 + w2)};
}

// ---------------------------------------------------------------------------
// Spring

SpringResponse bilinear_restoring(const BilinearState& state, double drift, double yield_disp, double k,
                                  double b) {
  if (!(yield_disp > 0.0)) throw PreconditionError("yield displacement must be positive");
  SpringResponse r;
  r.state = state;
  const double trial = k * (drift - state.plastic_offset);
  const double relative = trial - state.back_force;
  const double excess = std::abs(relative) - k * yield_disp;
  if (!(excess > 0.0)) {
    r.force = trial;
    r.tangent = k;
  } else {
    const double hardening = b * k / (1.0 - b);
    const double increment = excess / (k + hardening);
    const double dir = relative > 0.0 ? 1.0 : -1.0;
    r.state.plastic_offset += dir * increment;
    r.state.back_force += dir * hardening * increment;
    r.force = k * (drift - r.state.plastic_offset);
    r.tangent = b * k;
  }
  r.state.last_force = r.force;
  return r;
}

// ---------------------------------------------------------------------------
// Newmark

double integration_step(const ShearBuildingModel& model, double record_dt) {
  const auto periods = modal_periods(model);
  const double limit = (periods.size() > 1 ? periods[1] : periods[0]) / 20.0;
  const double pieces = std::ceil(record_dt / limit - 1e-12);
  return record_dt / std::max(1.0, pieces);
}

namespace {

class Integrator {
 public:
  Integrator(const ShearBuildingModel& model, const TransientOptions& options)
      : model_(model),
        options_(options),
        n_(static_cast<Eigen::Index>(model.n_storeys())),
        M_(mass_matrix(model)),
        springs_(model.n_storeys()),
        u_(VectorXd::Zero(n_)),
        v_(VectorXd::Zero(n_)),
        a_(VectorXd::Zero(n_)),
        storey_force_(VectorXd::Zero(n_)),
        peak_force_(model.n_storeys(), 0.0) {
    const auto ray = rayleigh_coefficients(model);
    C_ = ray.mass * M_ + ray.stiffness * chain_stiffness(model.storey_stiffness);
    yield_disp_ = model.yield_displacement();
    double kmax = *std::max_element(model.storey_stiffness.begin(), model.storey_stiffness.end());
    const double ref_disp = model.is_linear() ? 0.01 * model.storey_height : yield_disp_;
    tolerance_ = options.newton_tolerance * kmax * ref_disp;
  }

  void start(double ag0) { a_ = VectorXd::Constant(n_, -ag0); }

  // Advance by h with ground acceleration going from ag0 to ag1.
  void advance(double h, double ag0, double ag1, int level = 0) {
    if (try_step(h, ag1)) {
      commit(ag0, ag1);
      ++steps_;
      return;
    }
    if (level < options_.max_halvings) {
      const double mid = 0.5 * (ag0 + ag1);
      advance(0.5 * h, ag0, mid, level + 1);
      advance(0.5 * h, mid, ag1, level + 1);
      return;
    }
    // Accept the last iterate and flag the analysis.
    converged_ = false;
    commit(ag0, ag1);
    ++steps_;
  }

  double max_drift() const { return max_drift_; }
  double current_drift_ratio() const {
    double worst = 0.0;
    for (Eigen::Index s = 0; s < n_; ++s) {
      const double d = u_(s) - (s > 0 ? u_(s - 1) : 0.0);
      worst = std::max(worst, std::abs(d) / model_.storey_height);
    }
    return worst;
  }
  const VectorXd& displacement() const { return u_; }
  bool converged() const { return converged_; }
  std::size_t steps() const { return steps_; }
  const std::vector<double>& peak_forces() const { return peak_force_; }
  EnergyBalance energy() const {
    EnergyBalance e = energy_;
    e.kinetic = 0.5 * v_.dot(M_ * v_);
    return e;
  }

 private:
  // Storey forces and nodal internal force / tangent for trial u, evaluated
  // from the committed spring states.
  void evaluate(const VectorXd& u, VectorXd& internal, MatrixXd& tangent) {
    internal.setZero(n_);
    std::vector<double> kt(model_.n_storeys());
    for (Eigen::Index s = 0; s < n_; ++s) {
      const auto si = static_cast<std::size_t>(s);
      const double drift = u(s) - (s > 0 ? u(s - 1) : 0.0);
      const double k = model_.storey_stiffness[si];
      if (model_.is_linear()) {
        trial_springs_[si] = springs_[si];
        trial_springs_[si].last_force = k * drift;
        trial_force_(s) = k * drift;
        kt[si] = k;
      } else {
        const auto r = bilinear_restoring(springs_[si], drift, yield_disp_, k, model_.hardening_ratio);
        trial_springs_[si] = r.state;
        trial_force_(s) = r.force;
        kt[si] = r.tangent;
      }
      internal(s) += trial_force_(s);
      if (s > 0) internal(s - 1) -= trial_force_(s);
    }
    tangent = chain_stiffness(kt);
  }

  bool try_step(double h, double ag1) {
    trial_springs_.assign(springs_.begin(), springs_.end());
    trial_force_ = VectorXd::Zero(n_);
    const double c1 = 4.0 / (h * h);
    const double c2 = 2.0 / h;
    const VectorXd ones = VectorXd::Ones(n_);
    VectorXd u1 = u_;
    VectorXd internal(n_);
    MatrixXd tangent(n_, n_);
    for (int iter = 0; iter <= options_.max_newton_iterations; ++iter) {
      evaluate(u1, internal, tangent);
      const VectorXd a1 = c1 * (u1 - u_) - (2.0 * c2) * v_ - a_;
      const VectorXd v1 = c2 * (u1 - u_) - v_;
      const VectorXd residual = M_ * a1 + C_ * v1 + internal + M_ * ones * ag1;
      if (iter > 0 && residual.norm() < tolerance_) {
        next_u_ = u1;
        next_v_ = v1;
        next_a_ = a1;
        return true;
      }
      if (iter == options_.max_newton_iterations) break;
      const MatrixXd jac = c1 * M_ + c2 * C_ + tangent;
      u1 -= jac.ldlt().solve(residual);
    }
    next_u_ = u1;
    next_v_ = c2 * (u1 - u_) - v_;
    next_a_ = c1 * (u1 - u_) - (2.0 * c2) * v_ - a_;
    evaluate(u1, internal, tangent);
    return false;
  }

  void commit(double ag0, double ag1) {
    const VectorXd du = next_u_ - u_;
    const VectorXd ones = VectorXd::Ones(n_);
    const double ag_mid = 0.5 * (ag0 + ag1);
    energy_.input += -ag_mid * ones.dot(M_ * du);
    energy_.damping += 0.5 * (C_ * (v_ + next_v_)).dot(du);
    for (Eigen::Index s = 0; s < n_; ++s) {
      const double d_old = u_(s) - (s > 0 ? u_(s - 1) : 0.0);
      const double d_new = next_u_(s) - (s > 0 ? next_u_(s - 1) : 0.0);
      energy_.restoring += 0.5 * (storey_force_(s) + trial_force_(s)) * (d_new - d_old);
    }
    u_ = next_u_;
    v_ = next_v_;
    a_ = next_a_;
    springs_.assign(trial_springs_.begin(), trial_springs_.end());
    storey_force_ = trial_force_;
    for (Eigen::Index s = 0; s < n_; ++s) {
      const auto si = static_cast<std::size_t>(s);
      peak_force_[si] = std::max(peak_force_[si], std::abs(storey_force_(s)));
    }
    max_drift_ = std::max(max_drift_, current_drift_ratio());
  }

  const ShearBuildingModel& model_;
  const TransientOptions& options_;
  Eigen::Index n_;
  MatrixXd M_;
  MatrixXd C_;
  double yield_disp_ = 0.0;
  double tolerance_ = 0.0;
  std::vector<BilinearState> springs_;
  std::vector<BilinearState> trial_springs_;
  VectorXd u_, v_, a_;
  VectorXd next_u_, next_v_, next_a_;
  VectorXd storey_force_;
  VectorXd trial_force_;
  std::vector<double> peak_force_;
  EnergyBalance energy_;
  double max_drift_ = 0.0;
  bool converged_ = true;
  std::size_t steps_ = 0;
};

}  // namespace

TransientResult newmark_transient(const ShearBuildingModel& model, const gm::Accelerogram& a,
                                  const TransientOptions& options) {
  model.validate();
  a.validate();
  if (options.step_refinement < 1) throw PreconditionError("step refinement must be at least 1");
  const double h = integration_step(model, a.dt) / static_cast<double>(options.step_refinement);
  const auto pieces = static_cast<std::size_t>(std::llround(a.dt / h));

  Integrator integ(model, options);
  integ.start(a.samples.front());

  TransientResult result;
  auto record = [&](double t) {
    if (!options.record_history) return;
    auto& hist = result.history;
    if (hist.displacement.empty()) hist.displacement.resize(model.n_storeys());
    hist.time.push_back(t);
    for (std::size_t s = 0; s < model.n_storeys(); ++s)
      hist.displacement[s].push_back(integ.displacement()(static_cast<Eigen::Index>(s)));
    hist.drift_max.push_back(integ.max_drift());
  };
  record(0.0);

  for (std::size_t k = 1; k < a.samples.size(); ++k) {
    const double g0 = a.samples[k - 1];
    const double g1 = a.samples[k];
    for (std::size_t p = 0; p < pieces; ++p) {
      const double w0 = static_cast<double>(p) / static_cast<double>(pieces);
      const double w1 = static_cast<double>(p + 1) / static_cast<double>(pieces);
      integ.advance(h, g0 + w0 * (g1 - g0), g0 + w1 * (g1 - g0));
    }
    record(a.dt * static_cast<double>(k));
  }

  result.max_interstorey_drift_ratio = integ.max_drift();
  result.peak_storey_forces = integ.peak_forces();
  result.converged = integ.converged();
  result.steps = integ.steps();
  result.energy = integ.energy();
  return result;
}

// ---------------------------------------------------------------------------
// Linear SDOF

double linear_sdof_peak(double omega, double zeta, const gm::Accelerogram& a) {
  if (!(omega > 0.0)) throw PreconditionError("oscillator frequency must be positive");
  if (!(zeta > 0.0 && zeta < 1.0)) throw PreconditionError("oscillator damping must lie in (0,1)");
  a.validate();

  // Sub-steps no longer than T/100 keep the sampled peak close to the true one;
  // the recurrence itself is exact at any step for piecewise-linear input.
  const double period = 2.0 * kPi / omega;
  const auto pieces = static_cast<std::size_t>(std::max(1.0, std::ceil(a.dt / (period / 100.0) - 1e-12)));
  const double h = a.dt / static_cast<double>(pieces);

  const double k = omega * omega;
  const double root = std::sqrt(1.0 - zeta * zeta);
  const double wd = omega * root;
  const double e = std::exp(-zeta * omega * h);
  const double s = std::sin(wd * h);
  const double c = std::cos(wd * h);
  const double r = zeta / root;

  const double A = e * (r * s + c);
  const double B = e * s / wd;
  const double C = (2.0 * zeta / (omega * h) + e * (((1.0 - 2.0 * zeta * zeta) / (wd * h) - r) * s -
                                                    (1.0 + 2.0 * zeta / (omega * h)) * c)) / k;
  const double D = (1.0 - 2.0 * zeta / (omega * h) +
                    e * ((2.0 * zeta * zeta - 1.0) / (wd * h) * s + 2.0 * zeta / (omega * h) * c)) / k;
  const double Ap = -e * (omega / root) * s;
  const double Bp = e * (c - r * s);
  const double Cp = (-1.0 / h + e * ((omega / root + zeta / (h * root)) * s + c / h)) / k;
  const double Dp = (1.0 - e * (r * s + c)) / (k * h);

  double u = 0.0;
  double v = 0.0;
  double peak = 0.0;
  for (std::size_t i = 1; i < a.samples.size(); ++i) {
    const double g0 = a.samples[i - 1];
    const double g1 = a.samples[i];
    for (std::size_t p = 0; p < pieces; ++p) {
      const double p0 = -(g0 + (g1 - g0) * static_cast<double>(p) / static_cast<double>(pieces));
      const double p1 = -(g0 + (g1 - g0) * static_cast<double>(p + 1) / static_cast<double>(pieces));
      const double un = A * u + B * v + C * p0 + D * p1;
      const double vn = Ap * u + Bp * v + Cp * p0 + Dp * p1;
      u = un;
      v = vn;
      peak = std::max(peak, std::abs(u));
    }
  }
  return peak;
}

double spectral_acceleration(double period, double zeta, const gm::Accelerogram& a) {
  if (!(period > 0.0)) throw PreconditionError("period must be positive");
  const double omega = 2.0 * kPi / period;
  return omega * omega * linear_sdof_peak(omega, zeta, a);
}

}  // namespace seisfrag::structure
