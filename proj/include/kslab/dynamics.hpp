#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "kslab/grid.hpp"
#include "kslab/norms.hpp"
#include "kslab/spectral.hpp"

namespace kslab {

// ---------------------------------------------------------------------------
// Sensitivity models
// ---------------------------------------------------------------------------

struct Mat2 {
  double a11 = 0.0, a12 = 0.0, a21 = 0.0, a22 = 0.0;
};

/// Largest singular value of a 2x2 matrix.
inline double operator_norm(const Mat2& m) {
  const double fro2 = m.a11 * m.a11 + m.a12 * m.a12 + m.a21 * m.a21 + m.a22 * m.a22;
  const double det = m.a11 * m.a22 - m.a12 * m.a21;
  const double disc = std::max(0.0, fro2 * fro2 - 4.0 * det * det);
  return std::sqrt(0.5 * (fro2 + std::sqrt(disc)));
}

struct ScalarSensitivity {
  double chi = 1.0;
};

/// Matrix-valued sensitivity S(u, v, x, y), bounded by C_S, damped near the
/// boundary by the cutoff of width eta (eta = 0 disables the cutoff).
struct TensorSensitivity {
  std::function<Mat2(double u, double v, double x, double y)> entries;
  double bound = 1.0;
  double eta = 0.0;
  // false: entries ignore (u, v) and are tabulated once per node
  bool state_dependent = true;
};

using Sensitivity = std::variant<ScalarSensitivity, TensorSensitivity>;

inline Sensitivity scalar_sensitivity(double chi) {
  if (!std::isfinite(chi)) throw std::invalid_argument("sensitivity: chi must be finite");
  return ScalarSensitivity{chi};
}

/// cs * R(angle) with R the counterclockwise rotation [[cos, -sin], [sin, cos]].
inline Sensitivity rotation_sensitivity(double angle, double cs, double eta) {
  if (!(cs > 0.0) || !std::isfinite(cs)) throw std::invalid_argument("sensitivity: C_S must be > 0");
  if (!(eta >= 0.0)) throw std::invalid_argument("sensitivity: eta must be >= 0");
  const double c = cs * std::cos(angle), s = cs * std::sin(angle);
  TensorSensitivity t;
  t.entries = [c, s](double, double, double, double) { return Mat2{c, -s, s, c}; };
  t.bound = cs;
  t.eta = eta;
  t.state_dependent = false;
  return t;
}

inline Sensitivity zero_tensor_sensitivity(double eta, double cs = 1.0) {
  TensorSensitivity t;
  t.entries = [](double, double, double, double) { return Mat2{}; };
  t.bound = cs;
  t.eta = eta;
  t.state_dependent = false;
  return t;
}

/// |chi| for scalar sensitivities, C_S for tensors.
inline double sensitivity_bound(const Sensitivity& s) {
  if (const auto* sc = std::get_if<ScalarSensitivity>(&s)) return std::abs(sc->chi);
  return std::get<TensorSensitivity>(s).bound;
}

/// Tensor runs without cutoff keep the coupled flux boundary condition,
/// outside the regularized framework; they are allowed but flagged.
inline bool outside_framework(const Sensitivity& s) {
  const auto* t = std::get_if<TensorSensitivity>(&s);
  return t != nullptr && t->eta == 0.0;
}

/// Boundary cutoff rho_eta(x, y) = q(d(x)/eta) q(d(y)/eta) with the
/// smoothstep q(s) = s^2 (3 - 2s) on [0,1] and d the distance to the nearer
/// wall along that axis. eta = 0 gives 1.
inline double cutoff_weight(double x, double y, double lx, double ly, double eta) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw std::invalid_argument("cutoff_rho: eta must be >= 0");
  if (eta == 0.0) return 1.0;
  auto q = [eta](double d) {
    const double s = std::clamp(d / eta, 0.0, 1.0);
    return s * s * (3.0 - 2.0 * s);
  };
  return q(std::min(x, lx - x)) * q(std::min(y, ly - y));
}

inline ScalarField cutoff_rho(const Grid& grid, double eta) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw std::invalid_argument("cutoff_rho: eta must be >= 0");
  if (eta == 0.0) return ScalarField(grid, 1.0);
  return sample([&](double x, double y) { return cutoff_weight(x, y, grid.lx(), grid.ly(), eta); }, grid);
}

namespace detail {

inline void bound_violation(std::size_t i, std::size_t j, double norm, double bound) {
  std::ostringstream msg;
  msg.precision(17);
  msg << "sensitivity: |S| = " << norm << " exceeds C_S = " << bound << " at node (" << i << ", " << j
      << ")";
  throw std::domain_error(msg.str());
}

/// Evaluates u (rho S)(u, v, x) grad v and its divergence for one sensitivity.
class AdvectionOperator {
 public:
  AdvectionOperator(const Grid& grid, const Sensitivity& s, bool dealias)
      : grid_(grid), sensitivity_(s), dealias_(dealias), rho_(grid, 1.0) {
    if (const auto* t = std::get_if<TensorSensitivity>(&sensitivity_)) {
      if (!t->entries) throw std::invalid_argument("sensitivity: tensor entries not set");
      if (!(t->bound > 0.0)) throw std::invalid_argument("sensitivity: C_S must be > 0");
      rho_ = cutoff_rho(grid, t->eta);
      if (!t->state_dependent) {
        table_.resize(grid.size());
        for (std::size_t j = 0; j < grid.ny(); ++j)
          for (std::size_t i = 0; i < grid.nx(); ++i) {
            const Mat2 m = t->entries(0.0, 0.0, grid.x(i), grid.y(j));
            check_bound(m, i, j, t->bound);
            table_[grid.index(i, j)] = m;
          }
      }
    }
  }

  const Grid& grid() const { return grid_; }
  bool dealias() const { return dealias_; }

  /// Gradient of v as used by the flux (low-passed when dealiasing).
  VectorField grad_v(const ScalarField& v) const {
    Spectrum vs = dct_forward(v);
    if (dealias_) low_pass(vs);
    return gradient(vs);
  }

  /// (rho S)(u, v, x) grad v at every node.
  VectorField drift(const ScalarField& u, const ScalarField& v, const VectorField& gv) const {
    VectorField d(grid_);
    if (const auto* sc = std::get_if<ScalarSensitivity>(&sensitivity_)) {
      for (std::size_t n = 0; n < grid_.size(); ++n) {
        d.x[n] = sc->chi * gv.x[n];
        d.y[n] = sc->chi * gv.y[n];
      }
      return d;
    }
    const auto& t = std::get<TensorSensitivity>(sensitivity_);
    for (std::size_t j = 0; j < grid_.ny(); ++j)
      for (std::size_t i = 0; i < grid_.nx(); ++i) {
        const std::size_t n = grid_.index(i, j);
        Mat2 m;
        if (t.state_dependent) {
          m = t.entries(u[n], v[n], grid_.x(i), grid_.y(j));
          check_bound(m, i, j, t.bound);
        } else {
          m = table_[n];
        }
        const double r = rho_[n];
        d.x[n] = r * (m.a11 * gv.x[n] + m.a12 * gv.y[n]);
        d.y[n] = r * (m.a21 * gv.x[n] + m.a22 * gv.y[n]);
      }
    return d;
  }

  VectorField grad_v(Spectrum vs) const {
    if (dealias_) low_pass(vs);
    return gradient(vs);
  }

  /// u as it enters the product (low-passed when dealiasing).
  ScalarField density(const ScalarField& u) const {
    if (!dealias_) return u;
    return density(dct_forward(u));
  }
  ScalarField density(Spectrum us) const {
    if (dealias_) low_pass(us);
    return dct_inverse(us);
  }

  bool needs_state() const {
    const auto* t = std::get_if<TensorSensitivity>(&sensitivity_);
    return t != nullptr && t->state_dependent;
  }

  VectorField flux(const ScalarField& u, const VectorField& drift_field) const {
    return product(density(u), drift_field);
  }

  VectorField product(const ScalarField& uf, const VectorField& drift_field) const {
    VectorField w(grid_);
    for (std::size_t n = 0; n < grid_.size(); ++n) {
      w.x[n] = uf[n] * drift_field.x[n];
      w.y[n] = uf[n] * drift_field.y[n];
    }
    return w;
  }

  /// Cosine spectrum of div(u * drift); zero mean mode.
  Spectrum flux_divergence(const ScalarField& u, const VectorField& drift_field) const {
    return product_divergence(density(u), drift_field);
  }

  /// Same, with the density already filtered.
  Spectrum product_divergence(const ScalarField& uf, const VectorField& drift_field) const {
    VectorSpectrum ws = vector_forward(product(uf, drift_field));
    if (dealias_) low_pass(ws);
    return divergence_spectrum(ws);
  }

 private:
  static void check_bound(const Mat2& m, std::size_t i, std::size_t j, double bound) {
    const double norm = operator_norm(m);
    if (!(norm <= bound * (1.0 + 1e-12) + 1e-12)) bound_violation(i, j, norm, bound);
  }

  Grid grid_;
  Sensitivity sensitivity_;
  bool dealias_;
  ScalarField rho_;
  std::vector<Mat2> table_;
};

}  // namespace detail

/// w = u (rho_eta S)(u, v, x) grad v at cell centers. With dealias, u and v
/// are low-passed before the product and the product after it.
inline VectorField chemotactic_flux(const ScalarField& u, const ScalarField& v, const Sensitivity& s,
                                    bool dealias = false) {
  u.check_same(v);
  const detail::AdvectionOperator op(u.grid(), s, dealias);
  const VectorField gv = op.grad_v(v);
  VectorField w = op.flux(u, op.drift(u, v, gv));
  if (!dealias) return w;
  VectorSpectrum ws = vector_forward(w);
  low_pass(ws);
  return vector_inverse(ws);
}

// ---------------------------------------------------------------------------
// Time stepping
// ---------------------------------------------------------------------------

enum class Scheme { Strang, LieTrotter };

struct SimConfig {
  double dt = 1e-3;
  double t_end = 10.0;
  int record_every = 10;
  double blowup_linf = 1e6;
  bool dealias = true;
  Scheme scheme = Scheme::Strang;
  // exponent of the L^theta probe columns
  double theta = 2.0;

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("config: dt must be > 0");
    if (!(t_end > 0.0) || !std::isfinite(t_end)) throw std::invalid_argument("config: t_end must be > 0");
    if (!(blowup_linf > 0.0)) throw std::invalid_argument("config: blowup_linf must be > 0");
    if (record_every < 1) throw std::invalid_argument("config: record_every must be >= 1");
    if (!(theta >= 1.0)) throw std::invalid_argument("config: theta must be >= 1");
  }
};

inline constexpr int kMaxHalvings = 10;
inline constexpr double kMassDriftTolerance = 1e-8;
inline constexpr double kNegativityTolerance = 1e-10;

struct State {
  double t = 0.0;
  ScalarField u;
  ScalarField v;
};

enum class EventKind { BlowupSuspected, CompletedT, MassDrift };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::BlowupSuspected: return "BlowupSuspected";
    case EventKind::CompletedT: return "CompletedT";
    case EventKind::MassDrift: return "MassDrift";
  }
  return "?";
}

struct Event {
  EventKind kind = EventKind::CompletedT;
  double t = 0.0;
  // the violating quantity (L^inf value, relative drift); 0 for CompletedT
  double value = 0.0;
  std::string detail;
};

struct StepResult {
  State state;
  std::optional<Event> event;
  int substeps = 0;
  int halvings = 0;
};

namespace detail {

// Exact flow of u' = Lap u, v' = (Lap - 1) v + u over tau, per mode.
inline void linear_flow(Spectrum& us, Spectrum& vs, double tau) {
  const double source = -std::expm1(-tau);  // 1 - e^{-tau}
  const double damp = std::exp(-tau);
  auto& uc = us.coeffs();
  auto& vc = vs.coeffs();
  const Grid& g = us.grid();
  for (std::size_t k = 0; k < g.ny(); ++k)
    for (std::size_t j = 0; j < g.nx(); ++j) {
      const std::size_t n = k * g.nx() + j;
      const double eu = std::exp(-us.mu(j, k) * tau);
      vc[n] = eu * damp * vc[n] + eu * source * uc[n];
      uc[n] *= eu;
    }
}

inline double max_abs(const ScalarField& f) {
  double m = 0.0;
  for (double x : f.values()) m = std::max(m, std::abs(x));
  return m;
}

inline double max_magnitude(const VectorField& w) {
  double m = 0.0;
  for (std::size_t n = 0; n < w.x.size(); ++n) m = std::max(m, w.x[n] * w.x[n] + w.y[n] * w.y[n]);
  return std::sqrt(m);
}

inline void axpy(Spectrum& y, double a, const Spectrum& x) {
  for (std::size_t n = 0; n < y.coeffs().size(); ++n) y.coeffs()[n] += a * x.coeffs()[n];
}

// Spectral state of one substep.
struct Stage {
  Spectrum us;
  Spectrum vs;
};

// Physical u, v are only materialized when the sensitivity reads them.
inline VectorField stage_drift(const AdvectionOperator& op, const Spectrum& us, const ScalarField* v,
                               const VectorField& gv) {
  if (!op.needs_state()) return op.drift(ScalarField(op.grid()), ScalarField(op.grid()), gv);
  return op.drift(dct_inverse(us), *v, gv);
}

// u <- u - tau div(u rho S grad v), explicit midpoint, v frozen.
// Returns false without touching st when tau breaks the CFL limit.
inline bool advect(const AdvectionOperator& op, Stage& st, double tau, double& limit) {
  const VectorField gv = op.grad_v(st.vs);
  std::optional<ScalarField> v;
  if (op.needs_state()) v = dct_inverse(st.vs);
  const VectorField d = stage_drift(op, st.us, v ? &*v : nullptr, gv);
  limit = 0.5 * std::min(op.grid().hx(), op.grid().hy()) / (1.0 + max_magnitude(d));
  if (tau > limit) return false;
  Spectrum half = st.us;
  axpy(half, -0.5 * tau, op.product_divergence(op.density(st.us), d));
  const VectorField d_half = op.needs_state() ? stage_drift(op, half, &*v, gv) : d;
  axpy(st.us, -tau, op.product_divergence(op.density(half), d_half));
  return true;
}

inline bool substep(const AdvectionOperator& op, Stage& st, double tau, Scheme scheme, double& limit) {
  Stage trial = st;
  if (scheme == Scheme::Strang) {
    linear_flow(trial.us, trial.vs, 0.5 * tau);
    if (!advect(op, trial, tau, limit)) return false;
    linear_flow(trial.us, trial.vs, 0.5 * tau);
  } else {
    linear_flow(trial.us, trial.vs, tau);
    if (!advect(op, trial, tau, limit)) return false;
  }
  st = std::move(trial);
  return true;
}

inline std::string describe(const char* what, double value, double dt) {
  std::ostringstream msg;
  msg.precision(17);
  msg << what << " (value " << value << ", dt " << dt << ")";
  return msg.str();
}

struct StepOutcome {
  StepResult result;
  Stage spectra;
};

/// Advances by h using substeps of h / 2^k; halves on CFL violation or on
/// a negativity undershoot beyond tolerance, at most kMaxHalvings times.
inline StepOutcome step_with(const AdvectionOperator& op, const State& start, Stage spectra, double h,
                             const SimConfig& cfg) {
  StepOutcome out{StepResult{start, std::nullopt, 0, 0}, std::move(spectra)};
  StepResult& res = out.result;
  State& s = res.state;
  const double mass_before = integrate(s.u);
  const double t_target = start.t + h;
  double tau = h;
  double remaining = h;
  auto fail = [&](double value, std::string detail) {
    res.event = Event{EventKind::BlowupSuspected, s.t, value, std::move(detail)};
    return out;
  };
  while (remaining > 0.0) {
    tau = std::min(tau, remaining);
    Stage trial = out.spectra;
    double limit = 0.0;
    if (!substep(op, trial, tau, cfg.scheme, limit)) {
      if (res.halvings == kMaxHalvings)
        return fail(max_abs(s.u), describe("CFL violation persists after maximal step halving", limit, tau));
      tau *= 0.5;
      ++res.halvings;
      continue;
    }
    ++res.substeps;
    ScalarField u = dct_inverse(trial.us);
    if (!u.all_finite()) {
      s.u = std::move(u);
      s.t += tau;
      return fail(std::numeric_limits<double>::infinity(), "non-finite value in state");
    }
    const double linf = max_abs(u);
    if (linf > cfg.blowup_linf) {
      s.u = std::move(u);
      s.t += tau;
      return fail(linf, describe("||u||_inf exceeded blowup threshold", linf, tau));
    }
    const double umin = *std::min_element(u.values().begin(), u.values().end());
    if (umin < -kNegativityTolerance * linf) {
      if (res.halvings == kMaxHalvings) {
        s.u = std::move(u);
        s.t += tau;
        return fail(linf, describe("negative undershoot persists after maximal step halving", umin, tau));
      }
      tau *= 0.5;
      ++res.halvings;
      continue;
    }
    s.u = std::move(u);
    s.t += tau;
    out.spectra = std::move(trial);
    remaining = t_target - s.t;
    if (remaining < 1e-12 * h) remaining = 0.0;
  }
  s.v = dct_inverse(out.spectra.vs);
  if (!s.v.all_finite()) return fail(std::numeric_limits<double>::infinity(), "non-finite value in state");
  s.t = t_target;
  const double mass_after = integrate(s.u);
  const double scale = std::max(std::abs(mass_before), std::numeric_limits<double>::min());
  const double drift = std::abs(mass_after - mass_before) / scale;
  if (mass_before != mass_after && drift > kMassDriftTolerance)
    res.event = Event{EventKind::MassDrift, s.t, drift, describe("relative mass drift in one step", drift, h)};
  return out;
}

}  // namespace detail

/// One step of size cfg.dt: Strang (or Lie-Trotter) splitting of the exact
/// linear semigroup flow and the explicit chemotactic advection.
inline StepResult step(const State& state, const Sensitivity& s, const SimConfig& cfg) {
  cfg.validate();
  state.u.check_same(state.v);
  const detail::AdvectionOperator op(state.u.grid(), s, cfg.dealias);
  return detail::step_with(op, state, detail::Stage{dct_forward(state.u), dct_forward(state.v)}, cfg.dt, cfg).result;
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct NormRecord {
  double t = 0.0;
  double mass = 0.0;
  double linf_dev_u = 0.0;
  double l1_u = 0.0;
  double l2_u = 0.0;
  double ltheta_u = 0.0;
  double l2_grad_v = 0.0;
  double linf_dev_v = 0.0;
  double energy_u = 0.0;
  double energy_v = 0.0;
  double dual_ut = 0.0;
  double dual_vt = 0.0;
  // probe columns, not part of the CSV
  double linf_u = 0.0;
  double l2_dev_u = 0.0;
  double ltheta_dev_u = 0.0;
  double ltheta_grad_v = 0.0;
};

/// Time integrals accumulated per step (trapezoid in time).
struct RunIntegrals {
  double grad_u_sq = 0.0;     // int int |grad u|^2
  double grad_v_sq = 0.0;     // int int |grad v|^2
  double grad_uv = 0.0;       // int ||grad u|| ||grad v||
  double diff_uv_sq = 0.0;    // int ||u - v||^2
  double grad_v_diff = 0.0;   // int ||grad v|| ||u - v||
  double dual_ut_sq = 0.0;    // int ||(u^{n+1} - u^n)/dt||_*^2, piecewise constant
  double dual_vt_sq = 0.0;
};

struct Trajectory {
  Grid grid;
  std::vector<NormRecord> records;
  State final_state;
  Event terminal;
  double theta = 2.0;
  double ubar0 = 0.0;
  double mass0 = 0.0;
  double initial_l2_sq = 0.0;  // int u0^2
  double sup_linf_u = 0.0;     // M
  double sensitivity_bound = 0.0;
  RunIntegrals integrals;
  std::size_t steps = 0;
  std::size_t substeps = 0;
  bool outside_framework = false;

  bool completed() const { return terminal.kind == EventKind::CompletedT; }
};

namespace detail {

struct Snapshot {
  Spectrum us;
  Spectrum vs;
  double grad_u_sq;
  double grad_v_sq;
  double diff_uv_sq;
};

inline Snapshot snapshot(Spectrum us, Spectrum vs) {
  Snapshot out{std::move(us), std::move(vs), 0.0, 0.0, 0.0};
  out.grad_u_sq = grad_l2_norm_squared(out.us);
  out.grad_v_sq = grad_l2_norm_squared(out.vs);
  Spectrum diff = out.us;
  for (std::size_t n = 0; n < diff.coeffs().size(); ++n) diff.coeffs()[n] -= out.vs.coeffs()[n];
  out.diff_uv_sq = l2_norm_squared(diff);
  return out;
}

inline double dual_of_difference(const Spectrum& a, const Spectrum& b, double h) {
  Spectrum d = a;
  for (std::size_t n = 0; n < d.coeffs().size(); ++n) d.coeffs()[n] = (a.coeffs()[n] - b.coeffs()[n]) / h;
  return dual_w12_norm(d);
}

inline NormRecord make_record(const State& s, const Snapshot& snap, double ubar0, double theta,
                              const RunIntegrals& acc, double dual_ut, double dual_vt) {
  NormRecord r;
  r.t = s.t;
  r.mass = integrate(s.u);
  ScalarField dev_u = s.u;
  dev_u += -ubar0;
  ScalarField dev_v = s.v;
  dev_v += -ubar0;
  r.linf_dev_u = lp_norm(dev_u, kInf);
  r.linf_dev_v = lp_norm(dev_v, kInf);
  r.l1_u = lp_norm(s.u, 1.0);
  r.l2_u = lp_norm(s.u, 2.0);
  r.ltheta_u = lp_norm(s.u, theta);
  r.l2_dev_u = lp_norm(dev_u, 2.0);
  r.ltheta_dev_u = theta == 2.0 ? r.l2_dev_u : lp_norm(dev_u, theta);
  r.l2_grad_v = std::sqrt(snap.grad_v_sq);
  r.ltheta_grad_v = theta == 2.0 ? r.l2_grad_v : vector_lp_norm(gradient(snap.vs), theta);
  r.linf_u = lp_norm(s.u, kInf);
  r.energy_u = acc.grad_u_sq;
  r.energy_v = acc.grad_v_sq;
  r.dual_ut = dual_ut;
  r.dual_vt = dual_vt;
  return r;
}

}  // namespace detail

/// Integrates the system from (u0, v0) to cfg.t_end, recording norms every
/// cfg.record_every steps. Step failures end the run with a terminal event.
inline Trajectory run(const ScalarField& u0, const ScalarField& v0, const Sensitivity& s, const SimConfig& cfg) {
  cfg.validate();
  u0.check_same(v0);
  if (!u0.all_finite() || !v0.all_finite()) throw std::invalid_argument("run: non-finite initial data");
  for (std::size_t n = 0; n < u0.size(); ++n)
    if (u0[n] < 0.0 || v0[n] < 0.0) throw std::invalid_argument("run: initial data must be nonnegative");

  const Grid& grid = u0.grid();
  const detail::AdvectionOperator op(grid, s, cfg.dealias);

  Trajectory traj{grid, {}, State{0.0, u0, v0}, Event{}, cfg.theta};
  traj.ubar0 = mean(u0);
  traj.mass0 = integrate(u0);
  traj.initial_l2_sq = std::pow(lp_norm(u0, 2.0), 2);
  traj.sensitivity_bound = sensitivity_bound(s);
  traj.outside_framework = outside_framework(s);

  State state{0.0, u0, v0};
  detail::Snapshot snap = detail::snapshot(dct_forward(state.u), dct_forward(state.v));
  traj.sup_linf_u = detail::max_abs(u0);

  // t = 0 record: dual norms of the instantaneous right-hand side
  {
    const VectorField gv = op.grad_v(state.v);
    Spectrum ut = laplacian(snap.us);
    const Spectrum div = op.flux_divergence(state.u, op.drift(state.u, state.v, gv));
    for (std::size_t n = 0; n < ut.coeffs().size(); ++n) ut.coeffs()[n] -= div.coeffs()[n];
    Spectrum vt = laplacian(snap.vs);
    for (std::size_t n = 0; n < vt.coeffs().size(); ++n)
      vt.coeffs()[n] += snap.us.coeffs()[n] - snap.vs.coeffs()[n];
    traj.records.push_back(detail::make_record(state, snap, traj.ubar0, cfg.theta, traj.integrals,
                                               dual_w12_norm(ut), dual_w12_norm(vt)));
  }

  const double mass_scale = std::max(std::abs(traj.mass0), std::numeric_limits<double>::min());
  std::size_t n = 0;
  for (;;) {
    const double t_next = std::min(cfg.t_end, static_cast<double>(n + 1) * cfg.dt);
    const double h = t_next - state.t;
    if (h <= 1e-12 * cfg.dt) {
      traj.terminal = Event{EventKind::CompletedT, state.t, 0.0, "reached t_end"};
      break;
    }
    detail::StepOutcome outcome = detail::step_with(op, state, detail::Stage{snap.us, snap.vs}, h, cfg);
    StepResult& res = outcome.result;
    traj.substeps += static_cast<std::size_t>(res.substeps);
    if (res.event) {
      traj.terminal = *res.event;
      if (res.event->kind == EventKind::BlowupSuspected) traj.sup_linf_u = std::max(traj.sup_linf_u, res.event->value);
      break;
    }
    ++n;
    ++traj.steps;
    res.state.t = t_next;
    detail::Snapshot next = detail::snapshot(std::move(outcome.spectra.us), std::move(outcome.spectra.vs));

    RunIntegrals& acc = traj.integrals;
    acc.grad_u_sq += 0.5 * h * (snap.grad_u_sq + next.grad_u_sq);
    acc.grad_v_sq += 0.5 * h * (snap.grad_v_sq + next.grad_v_sq);
    acc.grad_uv += 0.5 * h * (std::sqrt(snap.grad_u_sq * snap.grad_v_sq) + std::sqrt(next.grad_u_sq * next.grad_v_sq));
    acc.diff_uv_sq += 0.5 * h * (snap.diff_uv_sq + next.diff_uv_sq);
    acc.grad_v_diff += 0.5 * h * (std::sqrt(snap.grad_v_sq * snap.diff_uv_sq) + std::sqrt(next.grad_v_sq * next.diff_uv_sq));
    const double dual_ut = detail::dual_of_difference(next.us, snap.us, h);
    const double dual_vt = detail::dual_of_difference(next.vs, snap.vs, h);
    acc.dual_ut_sq += h * dual_ut * dual_ut;
    acc.dual_vt_sq += h * dual_vt * dual_vt;

    traj.sup_linf_u = std::max(traj.sup_linf_u, detail::max_abs(res.state.u));
    state = std::move(res.state);
    snap = std::move(next);

    // total drift against the initial mass, on top of the per-step check
    const double drift = std::abs(integrate(state.u) - traj.mass0) / mass_scale;
    if (traj.mass0 != 0.0 && drift > kMassDriftTolerance) {
      traj.terminal = Event{EventKind::MassDrift, state.t, drift, "cumulative relative mass drift"};
      break;
    }

    if (n % static_cast<std::size_t>(cfg.record_every) == 0 || state.t >= cfg.t_end)
      traj.records.push_back(detail::make_record(state, snap, traj.ubar0, cfg.theta, acc, dual_ut, dual_vt));
  }
  traj.final_state = state;
  return traj;
}

// ---------------------------------------------------------------------------
// Trajectory-level bounds
// ---------------------------------------------------------------------------

/// int_0^T int |grad u|^2 <= int u0^2 + C_S^2 M^2 int_0^T int |grad v|^2.
struct EnergyBound {
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio() const { return rhs > 0.0 ? lhs / rhs : (lhs > 0.0 ? kInf : 0.0); }
};

inline EnergyBound energy_bound(const Trajectory& tr) {
  const double cm = tr.sensitivity_bound * tr.sup_linf_u;
  return {tr.integrals.grad_u_sq, tr.initial_l2_sq + cm * cm * tr.integrals.grad_v_sq};
}

/// Time-integrated squared dual norms of the discrete time derivatives
/// against the pointwise-in-time bounds
///   ||u_t||_* <= ||grad u|| + M C_S ||grad v||,
///   ||v_t||_* <= ||grad v|| + ||u - v||,
/// squared and integrated.
struct DualBound {
  double lhs_u = 0.0, rhs_u = 0.0;
  double lhs_v = 0.0, rhs_v = 0.0;
};

inline DualBound dual_bound(const Trajectory& tr) {
  const RunIntegrals& a = tr.integrals;
  const double cm = tr.sensitivity_bound * tr.sup_linf_u;
  DualBound b;
  b.lhs_u = a.dual_ut_sq;
  b.rhs_u = a.grad_u_sq + 2.0 * cm * a.grad_uv + cm * cm * a.grad_v_sq;
  b.lhs_v = a.dual_vt_sq;
  b.rhs_v = a.grad_v_sq + 2.0 * a.grad_v_diff + a.diff_uv_sq;
  return b;
}

}  // namespace kslab
