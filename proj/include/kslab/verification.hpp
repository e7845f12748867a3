#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kslab/dynamics.hpp"
#include "kslab/grid.hpp"
#include "kslab/norms.hpp"
#include "kslab/parallel.hpp"
#include "kslab/quadrature.hpp"
#include "kslab/spectral.hpp"

namespace kslab {

enum class Estimate { L21i, L21ii, L21iii, L21iv, L24, Env313, Env316 };

inline const char* to_string(Estimate e) {
  switch (e) {
    case Estimate::L21i: return "L21i";
    case Estimate::L21ii: return "L21ii";
    case Estimate::L21iii: return "L21iii";
    case Estimate::L21iv: return "L21iv";
    case Estimate::L24: return "L24";
    case Estimate::Env313: return "Env313";
    case Estimate::Env316: return "Env316";
  }
  return "?";
}

struct IntegralParams {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 1.0;
  double delta = 2.0;
};

/// Arguments that produced a sampled ratio; enough to recompute it.
struct Witness {
  double ratio = 0.0;
  double t = 0.0;
  double p = 0.0;
  double q = 0.0;
  std::optional<ScalarField> field;
  std::optional<VectorField> vector_field;
  IntegralParams integral;
  std::size_t record = 0;  // trajectory record index for envelope witnesses
};

struct BoundCheckReport {
  Estimate estimate_id = Estimate::L21i;
  std::size_t samples = 0;
  double max_ratio = 0.0;
  double empirical_constant = 0.0;
  std::vector<Witness> witnesses;

  void offer(Witness w) {
    ++samples;
    if (witnesses.empty() || w.ratio > max_ratio) {
      max_ratio = w.ratio;
      empirical_constant = w.ratio;
      witnesses.assign(1, std::move(w));
    }
  }
};

// ---------------------------------------------------------------------------
// Random band-limited fields
// ---------------------------------------------------------------------------

/// Modes kept by the random field model: mu <= (2/3 of the smaller Nyquist wavenumber)^2.
inline double band_limit_mu(const Grid& g) {
  using std::numbers::pi;
  const double k = (2.0 / 3.0) * std::min(pi * g.nx() / g.lx(), pi * g.ny() / g.ly());
  return k * k;
}

inline ScalarField random_band_limited(const Grid& g, std::mt19937_64& rng, bool zero_mean) {
  std::normal_distribution<double> normal;
  Spectrum s(g);
  const double cap = band_limit_mu(g);
  for (std::size_t k = 0; k < g.ny(); ++k)
    for (std::size_t j = 0; j < g.nx(); ++j)
      if (s.mu(j, k) <= cap) s.at(j, k) = normal(rng);
  if (zero_mean) s.at(0, 0) = 0.0;
  return dct_inverse(s);
}

/// Random field in the sine-cosine basis of vector fields with w.nu = 0.
inline VectorField random_band_limited_vector(const Grid& g, std::mt19937_64& rng) {
  using std::numbers::pi;
  std::normal_distribution<double> normal;
  VectorSpectrum s(g);
  const double cap = band_limit_mu(g);
  auto mu = [&](std::size_t j, std::size_t k) {
    const double a = pi * j / g.lx(), b = pi * k / g.ly();
    return a * a + b * b;
  };
  for (std::size_t k = 0; k < g.ny(); ++k)
    for (std::size_t m = 1; m <= g.nx(); ++m)
      if (mu(m, k) <= cap) s.sx[k * g.nx() + (m - 1)] = normal(rng);
  for (std::size_t m = 1; m <= g.ny(); ++m)
    for (std::size_t j = 0; j < g.nx(); ++j)
      if (mu(j, m) <= cap) s.sy[(m - 1) * g.nx() + j] = normal(rng);
  return vector_inverse(s);
}

// ---------------------------------------------------------------------------
// Semigroup estimates
// ---------------------------------------------------------------------------

namespace detail {

inline double inv(double p) { return std::isinf(p) ? 0.0 : 1.0 / p; }

// (1 + t^e) e^{-lambda1 t}; t^0 = 1.
inline double envelope(double t, double exponent, double lambda) {
  return (1.0 + std::pow(t, exponent)) * std::exp(-lambda * t);
}

inline void check_order(double p, double q, const char* who) {
  if (std::isnan(p) || std::isnan(q)) throw std::invalid_argument(std::string(who) + ": p and q must be numbers");
  if (p < q) throw std::invalid_argument(std::string(who) + ": requires q <= p");
}

inline void validate(Estimate e, double p, double q) {
  switch (e) {
    case Estimate::L21i:
    case Estimate::L21ii:
      check_order(p, q, e == Estimate::L21i ? "check_semigroup_i" : "check_semigroup_ii");
      if (q < 1.0) throw std::invalid_argument("semigroup estimate: requires q >= 1");
      break;
    case Estimate::L21iii:
      check_order(p, q, "check_semigroup_iii");
      if (q < 2.0 || std::isinf(p)) throw std::invalid_argument("check_semigroup_iii: requires 2 <= q <= p < inf");
      break;
    case Estimate::L21iv:
      check_order(p, q, "check_semigroup_iv");
      if (!(q > 1.0)) throw std::invalid_argument("check_semigroup_iv: requires q > 1");
      break;
    default: throw std::invalid_argument("semigroup estimate: not a semigroup estimate id");
  }
}

inline double exponent(Estimate e, double p, double q) {
  const double base = -(inv(q) - inv(p));  // n/2 = 1
  return (e == Estimate::L21ii || e == Estimate::L21iv) ? base - 0.5 : base;
}

inline Spectrum heat(Spectrum s, double t) {
  return apply_multiplier(std::move(s), [t](double mu) { return std::exp(-mu * t); });
}

// Left side for one time from a precomputed spectrum (of w, or of div w for iv).
inline double semigroup_lhs(Estimate e, const Spectrum& s, double t, double p) {
  const Spectrum h = heat(s, t);
  if (e == Estimate::L21ii || e == Estimate::L21iii) return vector_lp_norm(gradient(h), p);
  return lp_norm(dct_inverse(h), p);
}

inline double semigroup_denominator(Estimate e, const ScalarField& w, double q) {
  if (e == Estimate::L21iii) return vector_lp_norm(gradient(w), q);
  return lp_norm(w, q);
}

}  // namespace detail

/// Ratio of left side to the constant-one envelope for a scalar w (i, ii, iii).
inline double semigroup_ratio(Estimate e, const ScalarField& w, double t, double p, double q) {
  detail::validate(e, p, q);
  if (e == Estimate::L21iv) throw std::invalid_argument("semigroup_ratio: estimate iv takes a vector field");
  check_time(t);
  const double denom = detail::semigroup_denominator(e, w, q);
  if (denom == 0.0) return 0.0;
  Spectrum s = dct_forward(w);
  // (i) acts on mean-zero data; a grid field's rounding-level mean would
  // otherwise be amplified by e^{lambda1 t} in the ratio
  if (e == Estimate::L21i) s.at(0, 0) = 0.0;
  const double lhs = detail::semigroup_lhs(e, s, t, p);
  return lhs / (detail::envelope(t, detail::exponent(e, p, q), lambda1(w.grid())) * denom);
}

/// Ratio for estimate iv: ||e^{t Lap} div w||_p against ||w||_q.
inline double semigroup_ratio(const VectorField& w, double t, double p, double q) {
  detail::validate(Estimate::L21iv, p, q);
  check_time(t);
  const double denom = vector_lp_norm(w, q);
  if (denom == 0.0) return 0.0;
  const double lhs = detail::semigroup_lhs(Estimate::L21iv, divergence_spectrum(vector_forward(w)), t, p);
  return lhs / (detail::envelope(t, detail::exponent(Estimate::L21iv, p, q), lambda1(w.grid())) * denom);
}

struct SemigroupOptions {
  std::uint64_t seed = 0;
  int times_per_trial = 16;
  double t_min = 1e-3;
  double t_max = 10.0;
};

namespace detail {

struct TrialSample {
  std::optional<ScalarField> field;
  std::optional<VectorField> vector_field;
  Spectrum spectrum;
  double denominator = 0.0;
};

// One stream per trial: more trials extend, never reshuffle, the sample.
inline std::mt19937_64 trial_rng(Estimate e, const SemigroupOptions& opt, int trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(e)};
  return std::mt19937_64(seq);
}

inline TrialSample draw_trial(Estimate e, const Grid& grid, double q, std::mt19937_64& rng) {
  TrialSample out{std::nullopt, std::nullopt, Spectrum(grid), 0.0};
  if (e == Estimate::L21iv) {
    VectorField vw = random_band_limited_vector(grid, rng);
    const double n = vector_lp_norm(vw, q);
    vw.x *= 1.0 / n;
    vw.y *= 1.0 / n;
    out.denominator = vector_lp_norm(vw, q);
    out.spectrum = divergence_spectrum(vector_forward(vw));
    out.vector_field = std::move(vw);
  } else {
    ScalarField w = random_band_limited(grid, rng, e == Estimate::L21i);
    w *= 1.0 / semigroup_denominator(e, w, q);
    out.denominator = semigroup_denominator(e, w, q);
    out.spectrum = dct_forward(w);
    if (e == Estimate::L21i) out.spectrum.at(0, 0) = 0.0;
    out.field = std::move(w);
  }
  return out;
}

inline BoundCheckReport check_semigroup(Estimate e, const Grid& grid, double p, double q, int trials,
                                        const SemigroupOptions& opt) {
  validate(e, p, q);
  if (trials < 1) throw std::invalid_argument("semigroup check: trials must be >= 1");
  if (opt.times_per_trial < 1 || !(opt.t_min > 0.0) || !(opt.t_max > opt.t_min))
    throw std::invalid_argument("semigroup check: bad time sampling options");
  const double lambda = lambda1(grid);
  const double ex = exponent(e, p, q);
  const std::uniform_real_distribution<double> log_t(std::log(opt.t_min), std::log(opt.t_max));
  struct Best {
    double ratio = 0.0;
    double t = 0.0;
  };
  std::vector<Best> best(static_cast<std::size_t>(trials));
  parallel_for(best.size(), [&](std::size_t i) {
    std::mt19937_64 rng = trial_rng(e, opt, static_cast<int>(i));
    const TrialSample sample = draw_trial(e, grid, q, rng);
    auto dist = log_t;
    for (int k = 0; k < opt.times_per_trial; ++k) {
      const double t = std::exp(dist(rng));
      const double r = semigroup_lhs(e, sample.spectrum, t, p) / (envelope(t, ex, lambda) * sample.denominator);
      if (k == 0 || r > best[i].ratio) best[i] = {r, t};
    }
  });
  std::size_t arg = 0;
  for (std::size_t i = 1; i < best.size(); ++i)
    if (best[i].ratio > best[arg].ratio) arg = i;
  std::mt19937_64 rng = trial_rng(e, opt, static_cast<int>(arg));
  TrialSample sample = draw_trial(e, grid, q, rng);
  BoundCheckReport report;
  report.estimate_id = e;
  Witness wit;
  wit.ratio = best[arg].ratio;
  wit.t = best[arg].t;
  wit.p = p;
  wit.q = q;
  wit.field = std::move(sample.field);
  wit.vector_field = std::move(sample.vector_field);
  report.offer(std::move(wit));
  report.samples = static_cast<std::size_t>(trials) * static_cast<std::size_t>(opt.times_per_trial);
  return report;
}

}  // namespace detail

/// Estimate (i): ||e^{t Lap} w||_p <= k1 (1 + t^{-(1/q - 1/p)}) e^{-lambda1 t} ||w||_q, mean-zero w.
inline BoundCheckReport check_semigroup_i(const Grid& grid, double p, double q, int trials,
                                          const SemigroupOptions& opt = {}) {
  return detail::check_semigroup(Estimate::L21i, grid, p, q, trials, opt);
}

/// Estimate (ii): ||grad e^{t Lap} w||_p against (1 + t^{-1/2 - (1/q - 1/p)}) e^{-lambda1 t} ||w||_q.
inline BoundCheckReport check_semigroup_ii(const Grid& grid, double p, double q, int trials,
                                           const SemigroupOptions& opt = {}) {
  return detail::check_semigroup(Estimate::L21ii, grid, p, q, trials, opt);
}

/// Estimate (iii): ||grad e^{t Lap} w||_p against (1 + t^{-(1/q - 1/p)}) e^{-lambda1 t} ||grad w||_q.
inline BoundCheckReport check_semigroup_iii(const Grid& grid, double p, double q, int trials,
                                            const SemigroupOptions& opt = {}) {
  return detail::check_semigroup(Estimate::L21iii, grid, p, q, trials, opt);
}

/// Estimate (iv): ||e^{t Lap} div w||_p against (1 + t^{-1/2 - (1/q - 1/p)}) e^{-lambda1 t} ||w||_q.
inline BoundCheckReport check_semigroup_iv(const Grid& grid, double p, double q, int trials,
                                           const SemigroupOptions& opt = {}) {
  return detail::check_semigroup(Estimate::L21iv, grid, p, q, trials, opt);
}

// ---------------------------------------------------------------------------
// Integral inequality
// ---------------------------------------------------------------------------

inline void validate(const IntegralParams& c) {
  const bool finite = std::isfinite(c.alpha) && std::isfinite(c.beta) && std::isfinite(c.gamma) && std::isfinite(c.delta);
  if (!finite || !(c.alpha < 1.0) || !(c.beta < 1.0))
    throw std::invalid_argument("integral lemma: requires alpha < 1 and beta < 1");
  if (!(c.gamma > 0.0) || !(c.delta > 0.0)) throw std::invalid_argument("integral lemma: requires gamma, delta > 0");
  if (c.gamma == c.delta) throw std::invalid_argument("integral lemma: requires gamma != delta");
}

namespace detail {

// Integrand of int_0^{t/2} (1 + r^{-e}) e^{-c r} (1 + (t-r)^{-e2}) e^{-c2 (t-r)} dr
// after r = (t/2) sigma^k, k = 1/(1-e) for e > 0 (which removes the
// endpoint singularity) and k = 1 otherwise. Variable sigma in [0, 1].
struct HalfIntegrand {
  double t, e, c, e2, c2;
  double k;
  double half_pow;  // (t/2)^{-e}

  HalfIntegrand(double t_, double e_, double c_, double e2_, double c2_)
      : t(t_), e(e_), c(c_), e2(e2_), c2(c2_), k(e_ > 0.0 ? 1.0 / (1.0 - e_) : 1.0),
        half_pow(std::pow(0.5 * t_, -e_)) {}

  double operator()(double sigma) const {
    const double h = 0.5 * t;
    const double sk = k == 1.0 ? sigma : std::pow(sigma, k);
    const double r = h * sk;
    const double far = t - r;
    const double decay = std::exp(-c * r - c2 * far);
    const double other = 1.0 + std::pow(far, -e2);
    double near;
    if (k == 1.0)
      near = h * (1.0 + (e == 0.0 ? 1.0 : std::pow(r, -e)));
    else
      near = h * k * (sk / sigma + half_pow);  // sigma^{k-1} + (t/2)^{-e}
    return near * other * decay;
  }
};

inline double check_integral_time(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("integral lemma: t must be positive and finite");
  return t;
}

}  // namespace detail

inline constexpr double kIntegralRelTol = 1e-12;
inline constexpr double kIntegralMaxRelError = 1e-8;

/// int_0^t (1 + (t-s)^{-alpha}) e^{-gamma (t-s)} (1 + s^{-beta}) e^{-delta s} ds by
/// adaptive Gauss-Kronrod on each half with the endpoint substitution.
/// Throws std::runtime_error when the relative error estimate exceeds 1e-8.
inline double integral_lemma_lhs(const IntegralParams& c, double t, double* rel_error = nullptr) {
  validate(c);
  detail::check_integral_time(t);
  const detail::HalfIntegrand left(t, c.beta, c.delta, c.alpha, c.gamma);
  const detail::HalfIntegrand right(t, c.alpha, c.gamma, c.beta, c.delta);
  const QuadratureResult a = integrate_adaptive(left, 0.0, 1.0, kIntegralRelTol);
  const QuadratureResult b = integrate_adaptive(right, 0.0, 1.0, kIntegralRelTol);
  const double value = a.value + b.value;
  const double rel = (a.error + b.error) / std::abs(value);
  if (rel_error != nullptr) *rel_error = rel;
  if (!(rel <= kIntegralMaxRelError) || !std::isfinite(value)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "integral lemma: quadrature did not converge (relative error " << rel << " at t = " << t << ")";
    throw std::runtime_error(msg.str());
  }
  return value;
}

/// Independent route: composite midpoint with `panels` panels split evenly
/// over the two halves, same substitution.
inline double integral_lemma_lhs_midpoint(const IntegralParams& c, double t, std::size_t panels = 1000000) {
  validate(c);
  detail::check_integral_time(t);
  const detail::HalfIntegrand left(t, c.beta, c.delta, c.alpha, c.gamma);
  const detail::HalfIntegrand right(t, c.alpha, c.gamma, c.beta, c.delta);
  const std::size_t half = std::max<std::size_t>(1, panels / 2);
  return integrate_midpoint(left, 0.0, 1.0, half) + integrate_midpoint(right, 0.0, 1.0, half);
}

/// (1 + t^{min(0, 1-alpha-beta)}) e^{-min(gamma,delta) t} (1/|delta-gamma| + 1/(1-alpha) + 1/(1-beta)).
inline double integral_lemma_envelope(const IntegralParams& c, double t) {
  const double shape = 1.0 / std::abs(c.delta - c.gamma) + 1.0 / (1.0 - c.alpha) + 1.0 / (1.0 - c.beta);
  return (1.0 + std::pow(t, std::min(0.0, 1.0 - c.alpha - c.beta))) * std::exp(-std::min(c.gamma, c.delta) * t) * shape;
}

inline double integral_lemma_ratio(const IntegralParams& c, double t) {
  return integral_lemma_lhs(c, t) / integral_lemma_envelope(c, t);
}

namespace detail {

// Golden-section maximization of the ratio in log t on [lo, hi].
inline Witness refine_integral_max(const IntegralParams& c, double lo, double hi) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(lo), b = std::log(hi);
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = integral_lemma_ratio(c, std::exp(x1)), f2 = integral_lemma_ratio(c, std::exp(x2));
  while (b - a > 1e-9) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = integral_lemma_ratio(c, std::exp(x2));
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = integral_lemma_ratio(c, std::exp(x1));
    }
  }
  Witness w;
  w.t = std::exp(f1 > f2 ? x1 : x2);
  w.ratio = std::max(f1, f2);
  w.integral = c;
  return w;
}

}  // namespace detail

/// Max over tgrid of LHS / envelope. The best grid point is then refined by
/// golden-section search over its neighbouring cells, so max_ratio is the
/// local supremum and does not move when the grid is refined.
inline BoundCheckReport check_integral_lemma(const IntegralParams& c, const std::vector<double>& tgrid) {
  validate(c);
  if (tgrid.empty()) throw std::invalid_argument("integral lemma: empty t-grid");
  std::vector<double> ts = tgrid;
  for (double t : ts) detail::check_integral_time(t);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  BoundCheckReport report;
  report.estimate_id = Estimate::L24;
  std::size_t best = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    Witness w;
    w.t = ts[i];
    w.ratio = integral_lemma_ratio(c, ts[i]);
    w.integral = c;
    const double before = report.max_ratio;
    report.offer(std::move(w));
    if (report.max_ratio != before || i == 0) best = i;
  }
  if (ts.size() > 1) {
    const double lo = ts[best == 0 ? 0 : best - 1];
    const double hi = ts[std::min(best + 1, ts.size() - 1)];
    Witness refined = detail::refine_integral_max(c, lo, hi);
    if (refined.ratio > report.max_ratio) {
      report.max_ratio = refined.ratio;
      report.empirical_constant = refined.ratio;
      report.witnesses.assign(1, std::move(refined));
    }
  }
  return report;
}

/// 9 log-spaced times on [1e-2, 1e2].
inline std::vector<double> standard_integral_tgrid() {
  std::vector<double> t;
  for (int i = 0; i <= 8; ++i) t.push_back(std::pow(10.0, -2.0 + 0.5 * i));
  return t;
}

/// alpha, beta in {-1, 0, 0.5, 0.9}, (gamma, delta) in {(1,2), (2,1), (0.1,5)}.
inline std::vector<IntegralParams> standard_integral_sweep() {
  std::vector<IntegralParams> out;
  const double ab[] = {-1.0, 0.0, 0.5, 0.9};
  const std::pair<double, double> gd[] = {{1.0, 2.0}, {2.0, 1.0}, {0.1, 5.0}};
  for (auto [g, d] : gd)
    for (double a : ab)
      for (double b : ab) out.push_back({a, b, g, d});
  return out;
}

struct IntegralSweepRow {
  IntegralParams params;
  BoundCheckReport report;
  double cross_check_rel = 0.0;  // max over the grid of |adaptive - midpoint| / |adaptive|
  bool at_grid_end = false;      // witness at the largest grid time (ratio still growing)
};

struct IntegralSweep {
  std::vector<IntegralSweepRow> rows;
  double max_ratio = 0.0;          // the single constant bounding every row
  double max_cross_check_rel = 0.0;
};

inline IntegralSweep check_integral_sweep(const std::vector<IntegralParams>& params, const std::vector<double>& tgrid,
                                          bool cross_check, std::size_t midpoint_panels = 1000000) {
  IntegralSweep sweep;
  const double t_end = *std::max_element(tgrid.begin(), tgrid.end());
  sweep.rows.resize(params.size());
  parallel_for(params.size(), [&](std::size_t k) {
    const IntegralParams& c = params[k];
    IntegralSweepRow row{c, check_integral_lemma(c, tgrid)};
    row.at_grid_end = row.report.witnesses.front().t >= t_end * (1.0 - 1e-12);
    if (cross_check)
      for (double t : tgrid) {
        const double a = integral_lemma_lhs(c, t);
        const double b = integral_lemma_lhs_midpoint(c, t, midpoint_panels);
        row.cross_check_rel = std::max(row.cross_check_rel, std::abs(a - b) / std::abs(a));
      }
    sweep.rows[k] = std::move(row);
  });
  for (const auto& row : sweep.rows) {
    sweep.max_ratio = std::max(sweep.max_ratio, row.report.max_ratio);
    sweep.max_cross_check_rel = std::max(sweep.max_cross_check_rel, row.cross_check_rel);
  }
  return sweep;
}

// ---------------------------------------------------------------------------
// Decay envelopes along trajectories
// ---------------------------------------------------------------------------

/// Values at or below this are rounding noise, not dynamics.
inline constexpr double kNoiseFloor = 1e-12;

struct EnvelopeReport {
  BoundCheckReport u;  // ||u - ubar0||_theta / [eps (1 + t^{-1 + 1/theta}) e^{-lambda' t}]
  BoundCheckReport v;  // ||grad v||_theta     / [eps (1 + t^{-1/2 + 1/theta}) e^{-lambda' t}]
  std::size_t below_floor = 0;
};

namespace detail {

inline double envelope_ratio(double value, double t, double exponent, double eps, double lambda_prime) {
  if (t == 0.0 && exponent < 0.0) return 0.0;  // envelope infinite at t = 0
  const double env = eps * (1.0 + (exponent == 0.0 ? 1.0 : std::pow(t, exponent))) * std::exp(-lambda_prime * t);
  return value / env;
}

inline double envelope_exponent(Estimate e, double theta) {
  return (e == Estimate::Env313 ? -1.0 : -0.5) + 1.0 / theta;  // n/(2 theta) with n = 2
}

}  // namespace detail

/// Empirical c4 (u) and c7 (v) over the recorded times t >= t_min whose
/// numerator is above the noise floor.
inline EnvelopeReport check_decay_envelope(const Trajectory& traj, double theta, double eps, double lambda_prime,
                                           double t_min = 0.0) {
  if (!traj.completed()) throw std::invalid_argument("check_decay_envelope: trajectory did not complete");
  if (!(theta >= 1.0)) throw std::invalid_argument("check_decay_envelope: requires theta >= 1");
  if (theta != traj.theta)
    throw std::invalid_argument("check_decay_envelope: trajectory was recorded with a different theta");
  if (!(eps > 0.0)) throw std::invalid_argument("check_decay_envelope: requires eps > 0");
  const double l1 = lambda1(traj.grid);
  if (!(lambda_prime > 0.0) || !(lambda_prime < l1))
    throw std::invalid_argument("check_decay_envelope: requires 0 < lambda' < lambda1");
  EnvelopeReport out;
  out.u.estimate_id = Estimate::Env313;
  out.v.estimate_id = Estimate::Env316;
  const double eu = detail::envelope_exponent(Estimate::Env313, theta);
  const double ev = detail::envelope_exponent(Estimate::Env316, theta);
  for (std::size_t i = 0; i < traj.records.size(); ++i) {
    const NormRecord& r = traj.records[i];
    if (r.t < t_min) continue;
    auto take = [&](BoundCheckReport& rep, double value, double exponent) {
      if (value <= kNoiseFloor) {
        ++out.below_floor;
        return;
      }
      Witness w;
      w.t = r.t;
      w.p = theta;
      w.record = i;
      w.ratio = detail::envelope_ratio(value, r.t, exponent, eps, lambda_prime);
      rep.offer(std::move(w));
    };
    take(out.u, r.ltheta_dev_u, eu);
    take(out.v, r.ltheta_grad_v, ev);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Witness re-evaluation
// ---------------------------------------------------------------------------

inline double reevaluate(const BoundCheckReport& report, const Witness& w) {
  switch (report.estimate_id) {
    case Estimate::L21i:
    case Estimate::L21ii:
    case Estimate::L21iii:
      if (!w.field) throw std::invalid_argument("reevaluate: witness carries no field");
      return semigroup_ratio(report.estimate_id, *w.field, w.t, w.p, w.q);
    case Estimate::L21iv:
      if (!w.vector_field) throw std::invalid_argument("reevaluate: witness carries no vector field");
      return semigroup_ratio(*w.vector_field, w.t, w.p, w.q);
    case Estimate::L24: return integral_lemma_ratio(w.integral, w.t);
    default: throw std::invalid_argument("reevaluate: envelope witnesses need their trajectory");
  }
}

inline double reevaluate(const BoundCheckReport& report, const Witness& w, const Trajectory& traj, double eps,
                         double lambda_prime) {
  if (report.estimate_id != Estimate::Env313 && report.estimate_id != Estimate::Env316) return reevaluate(report, w);
  const NormRecord& r = traj.records.at(w.record);
  const bool is_u = report.estimate_id == Estimate::Env313;
  return detail::envelope_ratio(is_u ? r.ltheta_dev_u : r.ltheta_grad_v, r.t,
                                detail::envelope_exponent(report.estimate_id, w.p), eps, lambda_prime);
}

}  // namespace kslab
