#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "kslab/verification.hpp"

using namespace kslab;
using std::numbers::pi;

namespace {

ScalarField cosx(const Grid& g, double base, double amp) {
  return sample([=](double x, double) { return base + amp * std::cos(pi * x); }, g);
}

// alpha = beta = -1: int_0^t (1 + t - s)(1 + s) e^{-gamma (t-s) - delta s} ds in closed
// form with moments I_k = int_0^t s^k e^{-a s} ds, a = delta - gamma.
double lhs_alpha_beta_minus_one(double gamma, double delta, double t) {
  const double a = delta - gamma;
  const double e = std::exp(-a * t);
  const double i0 = (1.0 - e) / a;
  const double i1 = (-t * e + i0) / a;
  const double i2 = (-t * t * e + 2.0 * i1) / a;
  return std::exp(-gamma * t) * ((1.0 + t) * i0 + t * i1 - i2);
}

std::vector<double> refine(const std::vector<double>& t) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    out.push_back(t[i]);
    out.push_back(std::sqrt(t[i] * t[i + 1]));
  }
  out.push_back(t.back());
  return out;
}

}  // namespace

// ---- integral inequality ----

TEST(IntegralLemma, ClosedFormCase) {
  const double lhs = integral_lemma_lhs({0.0, 0.0, 1.0, 2.0}, 1.0);
  EXPECT_NEAR(lhs, 4.0 * (std::exp(-1.0) - std::exp(-2.0)), 1e-12);
}

TEST(IntegralLemma, NegativeExponentsMatchClosedForm) {
  for (auto [g, d] : {std::pair{1.0, 2.0}, std::pair{2.0, 1.0}, std::pair{0.1, 5.0}})
    for (double t : {0.01, 0.3, 1.0, 10.0, 100.0}) {
      const double exact = lhs_alpha_beta_minus_one(g, d, t);
      EXPECT_NEAR(integral_lemma_lhs({-1.0, -1.0, g, d}, t) / exact, 1.0, 1e-11) << g << " " << d << " " << t;
    }
}

TEST(IntegralLemma, DualQuadratureAgreesForSingularCase) {
  const IntegralParams c{0.5, 0.5, 1.0, 2.0};
  for (double t : {0.1, 1.0, 10.0}) {
    const double a = integral_lemma_lhs(c, t);
    const double b = integral_lemma_lhs_midpoint(c, t);
    EXPECT_LE(std::abs(a - b) / a, 1e-6) << "t=" << t;
  }
}

TEST(IntegralLemma, SymmetricUnderSwap) {
  // s -> t - s exchanges (alpha, gamma) with (beta, delta)
  for (double t : {0.05, 2.0, 30.0})
    EXPECT_NEAR(integral_lemma_lhs({0.9, -1.0, 0.1, 5.0}, t) / integral_lemma_lhs({-1.0, 0.9, 5.0, 0.1}, t), 1.0, 1e-11);
}

TEST(IntegralLemma, RejectsParameterDomain) {
  EXPECT_THROW(integral_lemma_lhs({1.0, 0.0, 1.0, 2.0}, 1.0), std::invalid_argument);
  EXPECT_THROW(integral_lemma_lhs({0.0, 1.5, 1.0, 2.0}, 1.0), std::invalid_argument);
  EXPECT_THROW(integral_lemma_lhs({0.0, 0.0, 0.0, 2.0}, 1.0), std::invalid_argument);
  EXPECT_THROW(integral_lemma_lhs({0.0, 0.0, 2.0, 2.0}, 1.0), std::invalid_argument);
  EXPECT_THROW(integral_lemma_lhs({0.0, 0.0, 1.0, 2.0}, 0.0), std::invalid_argument);
  EXPECT_THROW(check_integral_lemma({0.0, 0.0, 1.0, 2.0}, {}), std::invalid_argument);
}

TEST(IntegralLemma, RefinedMaximumIsStableUnderGridRefinement) {
  const std::vector<double> grid = standard_integral_tgrid();
  for (const IntegralParams& c : {IntegralParams{0.5, 0.5, 1.0, 2.0}, IntegralParams{0.0, 0.9, 0.1, 5.0},
                                  IntegralParams{0.9, -1.0, 1.0, 2.0}, IntegralParams{-1.0, -1.0, 1.0, 2.0}}) {
    const BoundCheckReport coarse = check_integral_lemma(c, grid);
    const BoundCheckReport fine = check_integral_lemma(c, refine(grid));
    EXPECT_LT(std::abs(coarse.max_ratio - fine.max_ratio), 1e-6) << c.alpha << " " << c.beta;
    EXPECT_GE(coarse.max_ratio, integral_lemma_ratio(c, 1.0));
  }
}

TEST(IntegralLemma, WitnessReevaluates) {
  const BoundCheckReport r = check_integral_lemma({0.5, 0.5, 1.0, 2.0}, standard_integral_tgrid());
  ASSERT_EQ(r.witnesses.size(), 1u);
  EXPECT_NEAR(reevaluate(r, r.witnesses[0]) / r.max_ratio, 1.0, 1e-10);
  EXPECT_EQ(r.samples, 9u);
}

TEST(IntegralLemma, NonnegativeExponentSweepBelowTen) {
  std::vector<IntegralParams> sub;
  for (const IntegralParams& c : standard_integral_sweep())
    if (c.alpha >= 0.0 && c.beta >= 0.0) sub.push_back(c);
  const IntegralSweep s = check_integral_sweep(sub, standard_integral_tgrid(), false);
  EXPECT_EQ(s.rows.size(), 27u);
  EXPECT_LE(s.max_ratio, 10.0);
}

TEST(IntegralLemma, FullSweepHasFiniteConstant) {
  const IntegralSweep s = check_integral_sweep(standard_integral_sweep(), standard_integral_tgrid(), false);
  EXPECT_EQ(s.rows.size(), 48u);
  EXPECT_TRUE(std::isfinite(s.max_ratio));
  // largest row: linear growth in the slower-decaying factor, witnessed at t = 100
  const double t = 100.0;
  const double exact = lhs_alpha_beta_minus_one(1.0, 2.0, t) / integral_lemma_envelope({-1.0, -1.0, 1.0, 2.0}, t);
  EXPECT_NEAR(s.max_ratio, exact, 1e-9 * exact);
  bool flagged = false;
  for (const auto& row : s.rows)
    if (row.params.alpha == -1.0 && row.params.beta == -1.0) flagged = flagged || row.at_grid_end;
  EXPECT_TRUE(flagged);
}

// ---- integral helpers ----

TEST(Quadrature, AdaptiveIntegratesPolynomialsAndPeaks) {
  const QuadratureResult r = integrate_adaptive([](double x) { return x * x * x; }, 0.0, 2.0);
  EXPECT_NEAR(r.value, 4.0, 1e-14);
  const QuadratureResult peak =
      integrate_adaptive([](double x) { return 1.0 / (1e-4 + (x - 0.3) * (x - 0.3)); }, 0.0, 1.0, 1e-12);
  const double exact = 100.0 * (std::atan(70.0) + std::atan(30.0));
  EXPECT_NEAR(peak.value / exact, 1.0, 1e-11);
}

TEST(Quadrature, MidpointSecondOrder) {
  const double e1 = std::abs(integrate_midpoint([](double x) { return std::exp(x); }, 0.0, 1.0, 100) - (std::numbers::e - 1));
  const double e2 = std::abs(integrate_midpoint([](double x) { return std::exp(x); }, 0.0, 1.0, 200) - (std::numbers::e - 1));
  EXPECT_NEAR(e1 / e2, 4.0, 0.01);
}

// ---- semigroup estimates ----

TEST(SemigroupI, L2ContractionBelowOne) {
  const Grid g(32, 32, 1.0, 1.0);
  const BoundCheckReport r = check_semigroup_i(g, 2.0, 2.0, 200);
  EXPECT_LE(r.max_ratio, 1.0 + 1e-10);
  EXPECT_EQ(r.samples, 200u * 16u);
  EXPECT_EQ(r.estimate_id, Estimate::L21i);
}

TEST(SemigroupI, EigenmodeRatioIsOneHalf) {
  const Grid g(32, 32, 1.0, 1.0);
  for (double t : {1e-3, 0.1, 1.0, 10.0}) EXPECT_NEAR(semigroup_ratio(Estimate::L21i, cosx(g, 0.0, 1.0), t, 2, 2), 0.5, 1e-12);
}

TEST(SemigroupI, IgnoresRoundingLevelMean) {
  const Grid g(32, 32, 1.0, 1.0);
  EXPECT_NEAR(semigroup_ratio(Estimate::L21i, cosx(g, 1e-15, 1.0), 10.0, 2, 2), 0.5, 1e-10);
}

TEST(SemigroupI, RejectsPBelowQ) {
  const Grid g(8, 8, 1.0, 1.0);
  EXPECT_THROW(check_semigroup_i(g, 1.0, 2.0, 1), std::invalid_argument);
  EXPECT_THROW(check_semigroup_i(g, 2.0, 2.0, 0), std::invalid_argument);
}

TEST(SemigroupI, MonotoneInTrials) {
  const Grid g(16, 16, 1.0, 1.0);
  double last = 0.0;
  for (int trials : {5, 10, 20, 40}) {
    const double m = check_semigroup_i(g, kInf, 1.0, trials).max_ratio;
    EXPECT_GE(m, last);
    last = m;
  }
}

TEST(SemigroupI, WitnessReevaluates) {
  const Grid g(16, 16, 1.0, 1.0);
  const BoundCheckReport r = check_semigroup_i(g, kInf, 1.0, 20, {7});
  ASSERT_TRUE(r.witnesses.at(0).field.has_value());
  EXPECT_NEAR(reevaluate(r, r.witnesses[0]) / r.max_ratio, 1.0, 1e-10);
}

TEST(SemigroupII, ConstantGivesZero) {
  const Grid g(16, 16, 1.0, 1.0);
  EXPECT_NEAR(semigroup_ratio(Estimate::L21ii, ScalarField(g, 3.0), 0.5, 2, 2), 0.0, 1e-14);
}

TEST(SemigroupII, EigenmodeRatio) {
  const Grid g(64, 64, 1.0, 1.0);
  for (double t : {0.01, 1.0, 10.0})
    EXPECT_NEAR(semigroup_ratio(Estimate::L21ii, cosx(g, 0.0, 1.0), t, 2, 2), pi / (1 + 1 / std::sqrt(t)), 1e-12);
}

TEST(SemigroupII, WitnessReevaluates) {
  const Grid g(16, 16, 1.0, 1.0);
  const BoundCheckReport r = check_semigroup_ii(g, 4.0, 2.0, 10);
  EXPECT_NEAR(reevaluate(r, r.witnesses[0]) / r.max_ratio, 1.0, 1e-10);
}

TEST(SemigroupIII, EigenmodeRatioIsOneHalf) {
  const Grid g(32, 32, 1.0, 1.0);
  for (double t : {1e-3, 1.0}) EXPECT_NEAR(semigroup_ratio(Estimate::L21iii, cosx(g, 0.0, 1.0), t, 2, 2), 0.5, 1e-12);
}

TEST(SemigroupIII, L2GradientContraction) {
  const Grid g(16, 16, 1.0, 1.0);
  EXPECT_LE(check_semigroup_iii(g, 2.0, 2.0, 50).max_ratio, 1.0 + 1e-10);
}

TEST(SemigroupIII, RejectsRange) {
  const Grid g(8, 8, 1.0, 1.0);
  EXPECT_THROW(check_semigroup_iii(g, kInf, 2.0, 1), std::invalid_argument);
  EXPECT_THROW(check_semigroup_iii(g, 4.0, 1.5, 1), std::invalid_argument);
  EXPECT_THROW(check_semigroup_iii(g, 2.0, 4.0, 1), std::invalid_argument);
}

TEST(SemigroupIV, GradientOfConstantGivesZero) {
  const Grid g(16, 16, 1.0, 1.0);
  EXPECT_EQ(semigroup_ratio(gradient(ScalarField(g, 2.0)), 0.5, 2, 2), 0.0);
}

TEST(SemigroupIV, GradientEigenmodeRatio) {
  const Grid g(64, 64, 1.0, 1.0);
  for (double t : {0.01, 1.0, 10.0})
    EXPECT_NEAR(semigroup_ratio(gradient(cosx(g, 0.0, 1.0)), t, 2, 2), pi / (1 + 1 / std::sqrt(t)), 1e-12);
}

TEST(SemigroupIV, RejectsQAtMostOne) {
  const Grid g(8, 8, 1.0, 1.0);
  EXPECT_THROW(check_semigroup_iv(g, 2.0, 1.0, 1), std::invalid_argument);
}

TEST(SemigroupIV, WitnessReevaluates) {
  const Grid g(16, 16, 1.0, 1.0);
  const BoundCheckReport r = check_semigroup_iv(g, kInf, 2.0, 10);
  ASSERT_TRUE(r.witnesses.at(0).vector_field.has_value());
  EXPECT_NEAR(reevaluate(r, r.witnesses[0]) / r.max_ratio, 1.0, 1e-10);
}

TEST(RandomFields, BandLimitedAndReproducible) {
  const Grid g(32, 32, 1.0, 1.0);
  std::mt19937_64 a(5), b(5);
  const ScalarField fa = random_band_limited(g, a, true);
  const ScalarField fb = random_band_limited(g, b, true);
  EXPECT_EQ(fa.values(), fb.values());
  const Spectrum s = dct_forward(fa);
  EXPECT_NEAR(s.mean(), 0.0, 1e-14);
  EXPECT_NEAR(s.at(31, 31), 0.0, 1e-12);  // mu above the band cap
  EXPECT_NE(s.at(1, 0), 0.0);
}

// ---- decay envelopes ----

TEST(DecayEnvelope, ZeroDeviationGivesZero) {
  const Grid g(16, 16, 1.0, 1.0);
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.t_end = 0.5;
  const Trajectory tr = run(ScalarField(g, 0.3), ScalarField(g, 0.3), scalar_sensitivity(1.0), cfg);
  const EnvelopeReport r = check_decay_envelope(tr, 2.0, 1e-2, 0.9 * pi * pi);
  EXPECT_EQ(r.u.max_ratio, 0.0);
  EXPECT_EQ(r.v.max_ratio, 0.0);
}

TEST(DecayEnvelope, PureDiffusionClosedForm) {
  const Grid g(32, 32, 1.0, 1.0);
  const double m = 1.0, eps = 0.1, lp = 0.9 * pi * pi;
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = 1.0;
  cfg.record_every = 10;
  const Trajectory tr = run(cosx(g, m, eps), ScalarField(g, m), scalar_sensitivity(0.0), cfg);
  const EnvelopeReport r = check_decay_envelope(tr, 2.0, eps, lp, 0.1);
  // ||u - m||_2 = eps e^{-pi^2 t} sqrt(1/2); envelope exponent -1 + 2/(2*2) = -1/2
  double expected = 0.0;
  for (const NormRecord& rec : tr.records)
    if (rec.t >= 0.1)
      expected = std::max(expected, std::exp(-(pi * pi - lp) * rec.t) * std::sqrt(0.5) / (1 + 1 / std::sqrt(rec.t)));
  EXPECT_NEAR(r.u.max_ratio / expected, 1.0, 1e-9);
  EXPECT_NEAR(reevaluate(r.u, r.u.witnesses[0], tr, eps, lp) / r.u.max_ratio, 1.0, 1e-10);
  EXPECT_GT(r.v.max_ratio, 0.0);
}

TEST(DecayEnvelope, RejectsBadArguments) {
  const Grid g(16, 16, 1.0, 1.0);
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.t_end = 0.1;
  const Trajectory tr = run(ScalarField(g, 0.3), ScalarField(g, 0.3), scalar_sensitivity(1.0), cfg);
  EXPECT_THROW(check_decay_envelope(tr, 2.0, 1e-2, pi * pi), std::invalid_argument);
  EXPECT_THROW(check_decay_envelope(tr, 3.0, 1e-2, 1.0), std::invalid_argument);
  cfg.blowup_linf = 0.1;
  const Trajectory blown = run(ScalarField(g, 0.3), ScalarField(g, 0.3), scalar_sensitivity(1.0), cfg);
  EXPECT_THROW(check_decay_envelope(blown, 2.0, 1e-2, 1.0), std::invalid_argument);
}
