#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kslab/dynamics.hpp"
#include "kslab/norms.hpp"
#include "kslab/parallel.hpp"
#include "kslab/profiles.hpp"
#include "kslab/verification.hpp"

namespace kslab {

struct TimePoint {
  double t = 0.0;
  double value = 0.0;
};
using Series = std::vector<TimePoint>;

struct FitWindow {
  double t_lo = 0.0;
  double t_hi = 0.0;
};

struct DecayFit {
  double rate = 0.0;       // lambda in value ~ amplitude e^{-lambda t}
  double amplitude = 0.0;
  double t_lo = 0.0;
  double t_hi = 0.0;
  double r_squared = 0.0;
  bool floor_hit = false;  // some in-window values were at or below the noise floor
  bool warning = false;    // r^2 undefined (no variation in log value)
  std::size_t samples = 0;
};

template <class Get>
Series series_of(const std::vector<NormRecord>& records, Get get) {
  Series s;
  s.reserve(records.size());
  for (const auto& r : records) s.push_back({r.t, get(r)});
  return s;
}

/// Default window: second half of the stretch that is still above the noise floor.
inline FitWindow default_fit_window(const Series& series) {
  if (series.empty()) throw std::invalid_argument("fit_decay: empty series");
  double last = series.front().t;
  for (const auto& p : series)
    if (p.value > kNoiseFloor) last = p.t;
  const double first = series.front().t;
  return {first + 0.5 * (last - first), last};
}

/// Least-squares line through (t, log value) on the window.
inline DecayFit fit_decay(const Series& series, const FitWindow& window) {
  if (!(window.t_lo < window.t_hi)) throw std::invalid_argument("fit_decay: window needs t_lo < t_hi");
  DecayFit fit;
  fit.t_lo = window.t_lo;
  fit.t_hi = window.t_hi;
  std::vector<double> ts, ys;
  for (const auto& p : series) {
    if (p.t < window.t_lo || p.t > window.t_hi) continue;
    if (!(p.value > kNoiseFloor)) {
      fit.floor_hit = true;
      continue;
    }
    ts.push_back(p.t);
    ys.push_back(std::log(p.value));
  }
  if (ts.size() < 10) {
    std::ostringstream msg;
    msg << "fit_decay: only " << ts.size() << " samples above " << kNoiseFloor << " in [" << window.t_lo << ", "
        << window.t_hi << "]; at least 10 are needed, choose a different window";
    throw std::invalid_argument(msg.str());
  }
  const double n = static_cast<double>(ts.size());
  double tm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    tm += ts[i];
    ym += ys[i];
  }
  tm /= n;
  ym /= n;
  double stt = 0.0, sty = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double dt = ts[i] - tm, dy = ys[i] - ym;
    stt += dt * dt;
    sty += dt * dy;
    syy += dy * dy;
  }
  if (!(stt > 0.0)) throw std::invalid_argument("fit_decay: all samples share one time");
  const double slope = sty / stt;
  fit.rate = -slope;
  fit.amplitude = std::exp(ym - slope * tm);
  fit.samples = ts.size();
  // relative test: log values that differ only by rounding count as constant
  if (syy <= 1e-28 * n * std::max(1.0, ym * ym)) {
    fit.rate = 0.0;
    fit.amplitude = std::exp(ym);
    fit.r_squared = 0.0;
    fit.warning = true;
  } else {
    fit.r_squared = std::clamp(sty * sty / (stt * syy), 0.0, 1.0);
  }
  return fit;
}

inline DecayFit fit_decay(const Series& series) { return fit_decay(series, default_fit_window(series)); }

// ---------------------------------------------------------------------------
// Smallness threshold along a ray in (||u0||_1, ||grad v0||_2)
// ---------------------------------------------------------------------------

struct InitialData {
  ScalarField u;
  ScalarField v;
};

/// Profiles scaled as a whole so that ||u0||_1 = target_u and
/// ||grad v0||_2 = target_v; a missing target leaves that profile as built.
inline InitialData scaled_initial_data(const Grid& g, const ProfileSpec& u_shape, const ProfileSpec& v_shape,
                                       std::optional<double> target_u, std::optional<double> target_v) {
  ScalarField u = build_profile(u_shape, g);
  if (target_u) u = scale_to_l1(std::move(u), *target_u);
  ScalarField v = build_profile(v_shape, g);
  if (target_v) v = scale_grad_to_l2(std::move(v), *target_v);
  return {std::move(u), std::move(v)};
}

struct Probe {
  double eps = 0.0;
  bool pass = false;
  std::string reason;  // empty on pass
};

struct ThresholdResult {
  double direction_u = 0.0;
  double direction_v = 0.0;
  double eps_lo = 0.0;
  double eps_hi = 0.0;  // +inf when no failure was found
  int bisection_steps = 0;
  std::vector<Probe> probes;
  std::string diagnostic;

  bool unbounded() const { return std::isinf(eps_hi); }
};

struct ThresholdOptions {
  double eps_start = 1e-3;
  double eps_max = 1e3;
  double gap = 1.1;
  int max_downward = 20;
};

/// Empty string when the run completed and decayed; the failure otherwise.
inline std::string classify_run(const Trajectory& traj) {
  if (!traj.completed()) return std::string(to_string(traj.terminal.kind)) + ": " + traj.terminal.detail;
  const double first = traj.records.front().linf_dev_u;
  const double last = traj.records.back().linf_dev_u;
  if (last > std::max(first, kNoiseFloor)) return "non-decay: final ||u - ubar0||_inf exceeds its initial value";
  const Series s = series_of(traj.records, [](const NormRecord& r) { return r.linf_dev_u; });
  try {
    const DecayFit fit = fit_decay(s);
    if (fit.rate < 0.0) return "non-decay: fitted rate " + format_double(fit.rate) + " < 0";
  } catch (const std::invalid_argument&) {
    // at the noise floor through most of the run: decayed
  }
  return {};
}

namespace detail {

inline std::pair<double, double> normalized_direction(double du, double dv) {
  if (!(du >= 0.0) || !(dv >= 0.0) || !std::isfinite(du) || !std::isfinite(dv) || du + dv == 0.0)
    throw std::invalid_argument("bisect_threshold: direction must be componentwise >= 0 and nonzero");
  const double n = std::hypot(du, dv);
  return {du / n, dv / n};
}

}  // namespace detail

inline Probe probe_threshold(double eps, double du, double dv, const Sensitivity& s, const SimConfig& cfg,
                             const Grid& g, const ProfileSpec& u_shape, const ProfileSpec& v_shape) {
  std::optional<double> tu, tv;
  if (du > 0.0) tu = eps * du;
  if (dv > 0.0) tv = eps * dv;
  const InitialData d = scaled_initial_data(g, u_shape, v_shape, tu, tv);
  const Trajectory traj = run(d.u, d.v, s, cfg);
  Probe p{eps, false, classify_run(traj)};
  p.pass = p.reason.empty();
  return p;
}

/// Doubling from eps_start until a failure, then geometric bisection until
/// eps_hi / eps_lo <= gap.
inline ThresholdResult bisect_threshold(double direction_u, double direction_v, const Sensitivity& s,
                                        const SimConfig& cfg, const Grid& g, const ProfileSpec& u_shape,
                                        const ProfileSpec& v_shape, const ThresholdOptions& opt = {}) {
  cfg.validate();
  if (!(opt.eps_start > 0.0) || !(opt.eps_max > opt.eps_start) || !(opt.gap > 1.0))
    throw std::invalid_argument("bisect_threshold: bad search options");
  const auto [du, dv] = detail::normalized_direction(direction_u, direction_v);
  ThresholdResult out;
  out.direction_u = du;
  out.direction_v = dv;
  auto probe = [&](double eps) {
    out.probes.push_back(probe_threshold(eps, du, dv, s, cfg, g, u_shape, v_shape));
    return out.probes.back().pass;
  };

  double eps = opt.eps_start;
  if (!probe(eps)) {
    out.eps_hi = eps;
    int k = 0;
    for (; k < opt.max_downward; ++k) {
      eps *= 0.5;
      if (probe(eps)) break;
      out.eps_hi = eps;
    }
    if (k == opt.max_downward)
      throw std::runtime_error("bisect_threshold: no passing amplitude down to eps = " + format_double(eps));
    out.eps_lo = eps;
  } else {
    out.eps_lo = eps;
    out.eps_hi = std::numeric_limits<double>::infinity();
    while (eps < opt.eps_max) {
      eps = std::min(2.0 * eps, opt.eps_max);
      if (!probe(eps)) {
        out.eps_hi = eps;
        break;
      }
      out.eps_lo = eps;
    }
    if (out.unbounded()) {
      out.diagnostic = "no failure up to eps = " + format_double(opt.eps_max) +
                       "; the threshold is one-sided along this ray";
      return out;
    }
  }
  while (out.eps_hi / out.eps_lo > opt.gap) {
    const double mid = std::sqrt(out.eps_lo * out.eps_hi);
    ++out.bisection_steps;
    (probe(mid) ? out.eps_lo : out.eps_hi) = mid;
  }
  for (auto it = out.probes.rbegin(); it != out.probes.rend(); ++it)
    if (it->eps == out.eps_hi) {
      out.diagnostic = it->reason;
      break;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Regularization limit eta -> 0
// ---------------------------------------------------------------------------

struct EtaLimitReport {
  std::vector<double> etas;
  std::vector<double> pairwise_l2;  // ||u_{eta_k} - u_{eta_{k+1}}||_2 at t_end
  bool monotone = true;             // pairwise_l2 strictly decreasing
  std::vector<ScalarField> final_u;

  bool halves() const { return pairwise_l2.size() < 2 || pairwise_l2.back() <= 0.5 * pairwise_l2.front(); }
};

inline EtaLimitReport eta_limit_study(const ScalarField& u0, const ScalarField& v0, const Sensitivity& s,
                                      const SimConfig& cfg, const std::vector<double>& etas) {
  const auto* tensor = std::get_if<TensorSensitivity>(&s);
  if (!tensor) throw std::invalid_argument("eta_limit_study: needs a tensor sensitivity");
  if (etas.empty()) throw std::invalid_argument("eta_limit_study: empty eta list");
  for (std::size_t k = 0; k < etas.size(); ++k) {
    if (!(etas[k] > 0.0)) throw std::invalid_argument("eta_limit_study: etas must be positive");
    if (k && !(etas[k] < etas[k - 1])) throw std::invalid_argument("eta_limit_study: etas must be strictly decreasing");
  }
  cfg.validate();
  std::vector<std::optional<Trajectory>> runs(etas.size());
  parallel_for(etas.size(), [&](std::size_t k) {
    TensorSensitivity t = *tensor;
    t.eta = etas[k];
    runs[k] = run(u0, v0, Sensitivity(t), cfg);
  });
  EtaLimitReport out;
  out.etas = etas;
  for (std::size_t k = 0; k < etas.size(); ++k) {
    const Trajectory& tr = *runs[k];
    if (!tr.completed())
      throw std::runtime_error("eta_limit_study: run with eta = " + format_double(etas[k]) + " ended with " +
                               to_string(tr.terminal.kind) + " at t = " + format_double(tr.terminal.t));
    out.final_u.push_back(tr.final_state.u);
  }
  for (std::size_t k = 0; k + 1 < etas.size(); ++k) {
    out.pairwise_l2.push_back(lp_norm(out.final_u[k] - out.final_u[k + 1], 2.0));
    if (k && !(out.pairwise_l2[k] < out.pairwise_l2[k - 1])) out.monotone = false;
  }
  return out;
}

}  // namespace kslab
