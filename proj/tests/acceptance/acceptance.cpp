// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "kslab/analysis.hpp"
#include "kslab/dynamics.hpp"
#include "kslab/io.hpp"
#include "kslab/norms.hpp"
#include "kslab/spectral.hpp"
#include "kslab/verification.hpp"

#ifndef KSLAB_CLI
#define KSLAB_CLI "kslab"
#endif
#ifndef KSLAB_CONFIG_DIR
#define KSLAB_CONFIG_DIR "configs"
#endif

using namespace kslab;
using std::numbers::pi;

namespace {

int failures = 0;
double worst_mass_drift = 0.0;

void report(int id, bool pass, const std::string& what, double seconds) {
  std::printf("%s criterion %d: %s [%.1f s]\n", pass ? "PASS" : "FAIL", id, what.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string g(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

void track_mass(const Trajectory& tr) {
  for (const auto& r : tr.records)
    worst_mass_drift = std::max(worst_mass_drift, std::abs(r.mass - tr.mass0) / tr.mass0);
}

Series column(const Trajectory& tr, double NormRecord::*field) {
  return series_of(tr.records, [field](const NormRecord& r) { return r.*field; });
}

// u0 Gaussian bump with ||u0||_1 = 1e-2, v0 ~ 1 + cos(pi x) with ||grad v0||_2 = 1e-2
InitialData small_data(const Grid& grid) {
  ProfileSpec u, v;
  u.kind = ProfileKind::GaussianBump;
  u.width = 0.1;
  v.kind = ProfileKind::CosineMode;
  v.base = 1.0;
  v.mode_j = 1;
  return scaled_initial_data(grid, u, v, 1e-2, 1e-2);
}

void criterion1() {
  Timer timer;
  const Grid grid(64, 64, 1, 1);
  const ScalarField f = sample([](double x, double) { return std::cos(pi * x); }, grid);
  double worst = 0.0;
  for (double t : {0.01, 0.1, 1.0}) {
    const ScalarField h = heat_semigroup(f, t);
    double err = 0.0;
    for (std::size_t j = 0; j < grid.ny(); ++j)
      for (std::size_t i = 0; i < grid.nx(); ++i)
        err = std::max(err, std::abs(h(i, j) - std::exp(-pi * pi * t) * std::cos(pi * grid.x(i))));
    worst = std::max(worst, err / (1e-12 * std::exp(-pi * pi * t)));
  }
  const double l1 = lambda1(grid);
  const bool lambda_ok = std::abs(l1 - pi * pi) <= 4.0 * std::numeric_limits<double>::epsilon() * pi * pi;
  const double secs = timer.seconds();
  report(1, worst <= 1.0 && lambda_ok && secs < 1.0,
         "heat semigroup exact: max err/(1e-12 e^{-pi^2 t}) = " + g(worst) + ", |lambda1 - pi^2| = " +
             g(std::abs(l1 - pi * pi)),
         secs);
}

void criterion2() {
  Timer timer;
  const Grid grid(32, 32, 1, 1);
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = 10.0;  // 10^4 steps
  cfg.record_every = 100;
  double worst = 0.0;
  bool completed = true;
  std::size_t steps = 0;
  for (double m : {0.1, 1.0, 5.0}) {
    const ScalarField c(grid, m);
    const Trajectory tr = run(c, c, scalar_sensitivity(1), cfg);
    completed = completed && tr.completed();
    steps = tr.steps;
    track_mass(tr);
    for (const auto& r : tr.records) worst = std::max({worst, r.linf_dev_u, r.linf_dev_v});
    for (std::size_t n = 0; n < c.size(); ++n)
      worst = std::max({worst, std::abs(tr.final_state.u[n] - m), std::abs(tr.final_state.v[n] - m)});
  }
  const double secs = timer.seconds();
  report(2, completed && steps == 10000 && worst <= 1e-13 && secs < 10.0,
         "(m,m) fixed over " + std::to_string(steps) + " steps, m in {0.1,1,5}: max |dev| = " + g(worst), secs);
}

void criterion3() {
  Timer timer;
  const double m = 0.1;
  const Grid grid(64, 64, 1, 1);
  const ScalarField u0 = sample([m](double x, double) { return m + 1e-3 * std::cos(pi * x); }, grid);
  const ScalarField v0(grid, m);
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = 5.0;
  cfg.record_every = 10;
  const Trajectory tr = run(u0, v0, scalar_sensitivity(1), cfg);
  track_mass(tr);
  // dominant eigenvalue of [[-pi^2, m pi^2], [1, -(pi^2 + 1)]]
  const double a = -pi * pi, b = m * pi * pi, c = 1.0, d = -(pi * pi + 1.0);
  const double tr2 = 0.5 * (a + d), det = a * d - b * c;
  const double lambda_oracle = -(tr2 + std::sqrt(tr2 * tr2 - det));
  bool pass = tr.completed();
  std::string what;
  if (pass) {
    const DecayFit fu = fit_decay(column(tr, &NormRecord::l2_dev_u), {1.0, 5.0});
    const DecayFit fv = fit_decay(column(tr, &NormRecord::linf_dev_v), {1.0, 5.0});
    const double rel = std::abs(fu.rate - lambda_oracle) / lambda_oracle;
    pass = rel <= 0.02 && fv.rate >= 0.9 * std::min(lambda_oracle, 1.0);
    what = "rate ||u-ubar||_2 = " + g(fu.rate) + " vs oracle " + g(lambda_oracle) + " (rel " + g(rel) +
           ", window [1,5], " + std::to_string(fu.samples) + " samples above floor" +
           "); rate ||v-ubar||_inf = " + g(fv.rate) + " >= " + g(0.9 * std::min(lambda_oracle, 1.0));
  } else {
    what = std::string("run ended with ") + to_string(tr.terminal.kind);
  }
  const double secs = timer.seconds();
  report(3, pass && secs < 60.0, what, secs);
}

struct EnvelopeRun {
  bool completed = false;
  double sup_linf = 0.0;
  double c4 = 0.0;
  double c7 = 0.0;
};

EnvelopeRun envelope_run(int n, double lambda_prime) {
  const Grid grid(n, n, 1, 1);
  const InitialData d = small_data(grid);
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = 20.0;
  cfg.record_every = 10;
  cfg.theta = 2.0;
  const Trajectory tr = run(d.u, d.v, scalar_sensitivity(1), cfg);
  track_mass(tr);
  EnvelopeRun out;
  out.completed = tr.completed();
  out.sup_linf = tr.sup_linf_u;
  if (!out.completed) return out;
  const EnvelopeReport env = check_decay_envelope(tr, 2.0, 1e-2, lambda_prime);
  out.c4 = env.u.empirical_constant;
  out.c7 = env.v.empirical_constant;
  return out;
}

void criterion4() {
  Timer timer;
  const double lambda_prime = 0.5 * pi * pi;
  const EnvelopeRun a = envelope_run(64, lambda_prime);
  const EnvelopeRun b = envelope_run(128, lambda_prime);
  auto rel = [](double x, double y) { return std::abs(x - y) / std::max(std::abs(x), std::abs(y)); };
  const bool finite = std::isfinite(a.sup_linf) && std::isfinite(b.sup_linf) && std::isfinite(a.c4) &&
                      std::isfinite(a.c7) && std::isfinite(b.c4) && std::isfinite(b.c7) && a.c4 > 0 && a.c7 > 0;
  const bool pass = a.completed && b.completed && finite && rel(a.c4, b.c4) <= 0.1 && rel(a.c7, b.c7) <= 0.1;
  const double secs = timer.seconds();
  report(4, pass && secs < 300.0,
         "t_end=20 completed at 64^2/128^2, sup ||u||_inf = " + g(a.sup_linf) + "/" + g(b.sup_linf) + "; c4 = " +
             g(a.c4) + "/" + g(b.c4) + " (rel " + g(rel(a.c4, b.c4)) + "), c7 = " + g(a.c7) + "/" + g(b.c7) +
             " (rel " + g(rel(a.c7, b.c7)) + "), lambda' = pi^2/2",
         secs);
}

void criterion5() {
  Timer timer;
  const Grid grid(64, 64, 1, 1);
  const InitialData d = small_data(grid);
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = 10.0;
  cfg.record_every = 10;
  const Trajectory tr = run(d.u, d.v, rotation_sensitivity(pi / 2, 1.0, 0.05), cfg);
  track_mass(tr);
  std::string what;
  bool pass = tr.completed();
  if (pass) {
    const DecayFit fu = fit_decay(column(tr, &NormRecord::linf_dev_u));
    const DecayFit fv = fit_decay(column(tr, &NormRecord::linf_dev_v));
    const EnergyBound e = energy_bound(tr);
    const DualBound db = dual_bound(tr);
    const bool dual_ok = std::isfinite(db.lhs_u) && std::isfinite(db.lhs_v) && db.lhs_u <= 1.05 * db.rhs_u &&
                         db.lhs_v <= 1.05 * db.rhs_v;
    pass = fu.rate > 0 && fv.rate > 0 && e.lhs <= 1.05 * e.rhs && dual_ok;
    what = "rates u/v = " + g(fu.rate) + "/" + g(fv.rate) + "; energy lhs/rhs = " + g(e.ratio()) +
           "; dual u lhs/rhs = " + g(db.lhs_u / db.rhs_u) + ", dual v lhs/rhs = " + g(db.lhs_v / db.rhs_v);
  } else {
    what = std::string("run ended with ") + to_string(tr.terminal.kind);
  }
  const double secs = timer.seconds();
  report(5, pass && secs < 300.0, what, secs);
}

void criterion6() {
  Timer timer;
  const Grid grid(64, 64, 1, 1);
  const InitialData d = small_data(grid);
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = 0.5;
  cfg.record_every = 50;
  std::string what;
  bool pass = false;
  try {
    const EtaLimitReport r =
        eta_limit_study(d.u, d.v, rotation_sensitivity(pi / 2, 1.0, 0.2), cfg, {0.2, 0.1, 0.05, 0.025});
    const double m0 = integrate(d.u);
    for (const auto& u : r.final_u) worst_mass_drift = std::max(worst_mass_drift, std::abs(integrate(u) - m0) / m0);
    pass = r.monotone && r.halves();
    what = "pairwise L2 differences";
    for (double x : r.pairwise_l2) what += " " + g(x);
    what += std::string("; strictly decreasing=") + (r.monotone ? "yes" : "no") +
            ", last/first = " + g(r.pairwise_l2.back() / r.pairwise_l2.front());
  } catch (const std::exception& e) {
    what = e.what();
  }
  const double secs = timer.seconds();
  report(6, pass && secs < 600.0, what, secs);
}

void criterion7() {
  Timer timer;
  const Grid grid(32, 32, 1, 1);
  const double inf = kInf;
  bool pass = true;
  std::ostringstream what;
  {
    const BoundCheckReport r = check_semigroup_i(grid, 2, 2, 200, {});
    pass = pass && r.max_ratio <= 1 + 1e-10;
    what << "(i,2,2) max " << g(r.max_ratio);
  }
  struct Case {
    Estimate e;
    double p, q;
  };
  const std::vector<Case> cases = {{Estimate::L21i, inf, 1},    {Estimate::L21i, 2, 1},     {Estimate::L21i, inf, 2},
                                   {Estimate::L21ii, 2, 2},     {Estimate::L21ii, 4, 2},    {Estimate::L21iii, 2, 2},
                                   {Estimate::L21iii, 4, 2},    {Estimate::L21iv, 2, 2},    {Estimate::L21iv, inf, 2}};
  for (const auto& c : cases) {
    double k[2];
    for (int seed = 0; seed < 2; ++seed) {
      SemigroupOptions opt;
      opt.seed = static_cast<std::uint64_t>(seed);
      switch (c.e) {
        case Estimate::L21i: k[seed] = check_semigroup_i(grid, c.p, c.q, 2000, opt).empirical_constant; break;
        case Estimate::L21ii: k[seed] = check_semigroup_ii(grid, c.p, c.q, 2000, opt).empirical_constant; break;
        case Estimate::L21iii: k[seed] = check_semigroup_iii(grid, c.p, c.q, 2000, opt).empirical_constant; break;
        default: k[seed] = check_semigroup_iv(grid, c.p, c.q, 2000, opt).empirical_constant; break;
      }
    }
    const double rel = std::abs(k[0] - k[1]) / std::max(k[0], k[1]);
    pass = pass && std::isfinite(k[0]) && std::isfinite(k[1]) && rel <= 0.2;
    what << "; (" << to_string(c.e) << "," << (std::isinf(c.p) ? std::string("inf") : g(c.p)) << "," << g(c.q)
         << ") " << g(k[0]) << "/" << g(k[1]);
  }
  const double secs = timer.seconds();
  report(7, pass && secs < 120.0, what.str(), secs);
}

void criterion8() {
  Timer timer;
  const double closed = 4.0 * (std::exp(-1.0) - std::exp(-2.0));
  const double value = integral_lemma_lhs({0, 0, 1, 2}, 1.0);
  const IntegralSweep sweep = check_integral_sweep(standard_integral_sweep(), standard_integral_tgrid(), true);
  const bool pass = std::abs(value - closed) <= 1e-8 && std::isfinite(sweep.max_ratio) &&
                    sweep.max_cross_check_rel <= 1e-6;
  const double secs = timer.seconds();
  report(8, pass && secs < 60.0,
         "closed form err " + g(std::abs(value - closed)) + "; sweep constant " + g(sweep.max_ratio) + " over " +
             std::to_string(sweep.rows.size()) + " parameter sets; quadrature agreement " +
             g(sweep.max_cross_check_rel),
         secs);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion9() {
  Timer timer;
  bool pass = true;
  std::string what;
  for (const char* name : {"simulate_small_data", "verify_semigroup"}) {
    std::string out[2];
    for (int k = 0; k < 2; ++k) {
      const std::string path = std::string("acceptance_") + name + "_" + std::to_string(k) + ".out";
      const std::string cmd =
          std::string("\"") + KSLAB_CLI + "\" \"" + KSLAB_CONFIG_DIR + "/" + name + ".cfg\" -o " + path;
      const int rc = std::system(cmd.c_str());
      pass = pass && rc == 0;
      out[k] = slurp(path);
      std::remove(path.c_str());
    }
    const bool same = !out[0].empty() && out[0] == out[1];
    pass = pass && same;
    what += std::string(what.empty() ? "" : "; ") + name + " " + std::to_string(out[0].size()) + " bytes " +
            (same ? "identical" : "DIFFER");
  }
  report(9, pass, what, timer.seconds());
}

}  // namespace

int main() {
  criterion1();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion2();  // also closes the mass audit over every simulation above
  std::printf("  mass audit: worst relative drift over all acceptance simulations = %.3g (<= 1e-10 required)\n",
              worst_mass_drift);
  if (worst_mass_drift > 1e-10) {
    std::printf("FAIL criterion 2: mass drift %.3g exceeds 1e-10\n", worst_mass_drift);
    ++failures;
  }
  criterion7();
  criterion8();
  criterion9();
  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
