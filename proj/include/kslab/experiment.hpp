#pragma once

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kslab/analysis.hpp"
#include "kslab/config.hpp"
#include "kslab/dynamics.hpp"
#include "kslab/io.hpp"
#include "kslab/profiles.hpp"
#include "kslab/verification.hpp"

namespace kslab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitBlowup = 2;

/// Command-line overrides; they do not enter the config hash.
struct RunOverrides {
  std::optional<std::string> output;
  std::optional<std::string> dump_fields;
};

namespace detail {

struct CommandOutput {
  std::string text;  // full file contents
  int exit_code = kExitOk;
  std::vector<std::string> diagnostics;
};

inline int exit_code_for(EventKind k) {
  switch (k) {
    case EventKind::CompletedT: return kExitOk;
    case EventKind::BlowupSuspected: return kExitBlowup;
    case EventKind::MassDrift: return kExitError;
  }
  return kExitError;
}

inline ReportRow terminal_row(const Trajectory& tr) {
  ReportRow r;
  r.add("terminal", to_string(tr.terminal.kind))
      .add("t", tr.terminal.t)
      .add("value", tr.terminal.value)
      .add("steps", tr.steps)
      .add("substeps", tr.substeps)
      .add("sup_linf_u", tr.sup_linf_u)
      .add("outside_framework", tr.outside_framework);
  if (!tr.terminal.detail.empty()) r.add("detail", tr.terminal.detail);
  return r;
}

inline InitialData initial_data(const ExperimentConfig& cfg, const Grid& g) {
  return scaled_initial_data(g, cfg.initial.u, cfg.initial.v, cfg.initial.target_u_l1, cfg.initial.target_grad_v_l2);
}

inline CommandOutput simulate(const ExperimentConfig& cfg, const std::string& dump_prefix, std::uint64_t hash,
                              bool fit) {
  const Grid g = cfg.make_grid();
  const InitialData d = initial_data(cfg, g);
  const Trajectory tr = run(d.u, d.v, cfg.sensitivity.build(), cfg.sim);
  CommandOutput out;
  std::ostringstream os;
  if (!fit) {
    write_norm_csv(os, tr.records, hash);
    os << "# " << terminal_row(tr).str() << '\n';
  } else {
    std::vector<ReportRow> rows{terminal_row(tr)};
    if (tr.completed()) {
      const Series s =
          series_of(tr.records, [&](const NormRecord& r) { return norm_series_value(r, cfg.fit.series); });
      FitWindow w = default_fit_window(s);
      if (cfg.fit.t_lo) w.t_lo = *cfg.fit.t_lo;
      if (cfg.fit.t_hi) w.t_hi = *cfg.fit.t_hi;
      const DecayFit f = fit_decay(s, w);
      ReportRow r;
      r.add("series", cfg.fit.series)
          .add("rate", f.rate)
          .add("amplitude", f.amplitude)
          .add("t_lo", f.t_lo)
          .add("t_hi", f.t_hi)
          .add("r_squared", f.r_squared)
          .add("samples", f.samples)
          .add("floor_hit", f.floor_hit)
          .add("warning", f.warning);
      rows.push_back(r);
      if (f.warning) out.diagnostics.push_back("fit-decay: series is constant, r^2 undefined");
    }
    write_report(os, rows, hash);
  }
  out.text = os.str();
  out.exit_code = exit_code_for(tr.terminal.kind);
  if (!tr.completed())
    out.diagnostics.push_back(std::string(to_string(tr.terminal.kind)) + " at t = " + format_double(tr.terminal.t) +
                              ": " + tr.terminal.detail);
  if (!dump_prefix.empty()) {
    write_field_dump(dump_prefix + "_u.bin", tr.final_state.u, tr.final_state.t);
    write_field_dump(dump_prefix + "_v.bin", tr.final_state.v, tr.final_state.t);
  }
  return out;
}

inline CommandOutput verify_semigroup(const ExperimentConfig& cfg, std::uint64_t hash) {
  const Grid g = cfg.make_grid();
  SemigroupOptions opt = cfg.verify.options;
  opt.seed = cfg.seed;
  const VerifySpec& v = cfg.verify;
  BoundCheckReport rep;
  switch (v.estimate) {
    case Estimate::L21i: rep = check_semigroup_i(g, v.p, v.q, v.trials, opt); break;
    case Estimate::L21ii: rep = check_semigroup_ii(g, v.p, v.q, v.trials, opt); break;
    case Estimate::L21iii: rep = check_semigroup_iii(g, v.p, v.q, v.trials, opt); break;
    default: rep = check_semigroup_iv(g, v.p, v.q, v.trials, opt); break;
  }
  bool pass = std::isfinite(rep.max_ratio);
  // e^{t Delta} is a contraction on mean-zero L^p
  const bool contraction = v.estimate == Estimate::L21i && v.p == v.q;
  if (contraction) pass = pass && rep.max_ratio <= 1.0 + 1e-10;
  ReportRow r;
  r.add("estimate", to_string(rep.estimate_id))
      .add("p", v.p)
      .add("q", v.q)
      .add("seed", std::to_string(cfg.seed))
      .add("trials", v.trials)
      .add("samples", rep.samples)
      .add("max_ratio", rep.max_ratio)
      .add("empirical_constant", rep.empirical_constant)
      .add("witness_t", rep.witnesses.front().t)
      .add("pass", pass);
  CommandOutput out;
  std::ostringstream os;
  write_report(os, {r}, hash);
  out.text = os.str();
  out.exit_code = pass ? kExitOk : kExitError;
  if (!pass) out.diagnostics.push_back("verify-semigroup: ratio " + format_double(rep.max_ratio) + " failed the bound");
  return out;
}

inline CommandOutput verify_integral(const ExperimentConfig& cfg, std::uint64_t hash) {
  const std::vector<IntegralParams> params =
      cfg.integral.standard_sweep ? standard_integral_sweep() : std::vector<IntegralParams>{cfg.integral.params};
  const IntegralSweep sweep =
      check_integral_sweep(params, standard_integral_tgrid(), cfg.integral.cross_check, cfg.integral.panels);
  std::vector<ReportRow> rows;
  for (const auto& row : sweep.rows) {
    ReportRow r;
    r.add("alpha", row.params.alpha)
        .add("beta", row.params.beta)
        .add("gamma", row.params.gamma)
        .add("delta", row.params.delta)
        .add("max_ratio", row.report.max_ratio)
        .add("witness_t", row.report.witnesses.front().t)
        .add("at_grid_end", row.at_grid_end);
    if (cfg.integral.cross_check) r.add("cross_check_rel", row.cross_check_rel);
    rows.push_back(r);
  }
  const bool pass = std::isfinite(sweep.max_ratio) && (!cfg.integral.cross_check || sweep.max_cross_check_rel <= 1e-6);
  ReportRow summary;
  summary.add("summary", "integral-sweep").add("rows", sweep.rows.size()).add("constant", sweep.max_ratio);
  if (cfg.integral.cross_check) summary.add("max_cross_check_rel", sweep.max_cross_check_rel);
  summary.add("pass", pass);
  rows.push_back(summary);
  CommandOutput out;
  std::ostringstream os;
  write_report(os, rows, hash);
  out.text = os.str();
  out.exit_code = pass ? kExitOk : kExitError;
  if (!pass) out.diagnostics.push_back("verify-integral: quadratures disagree beyond 1e-6");
  return out;
}

inline CommandOutput bisect(const ExperimentConfig& cfg, std::uint64_t hash) {
  const Grid g = cfg.make_grid();
  const ThresholdResult res = bisect_threshold(cfg.bisect.direction_u, cfg.bisect.direction_v, cfg.sensitivity.build(),
                                               cfg.sim, g, cfg.initial.u, cfg.initial.v, cfg.bisect.options);
  std::vector<ReportRow> rows;
  for (const auto& p : res.probes) {
    ReportRow r;
    r.add("eps", p.eps).add("pass", p.pass);
    if (!p.pass) r.add("reason", p.reason);
    rows.push_back(r);
  }
  ReportRow r;
  r.add("direction_u", res.direction_u)
      .add("direction_v", res.direction_v)
      .add("eps_lo", res.eps_lo)
      .add("eps_hi", res.eps_hi)
      .add("bisection_steps", res.bisection_steps)
      .add("unbounded", res.unbounded())
      .add("diagnostic", res.diagnostic);
  rows.push_back(r);
  CommandOutput out;
  std::ostringstream os;
  write_report(os, rows, hash);
  out.text = os.str();
  return out;
}

inline CommandOutput eta_limit(const ExperimentConfig& cfg, std::uint64_t hash) {
  if (!cfg.sensitivity.tensor) throw std::invalid_argument("eta-limit: needs [sensitivity] type = tensor");
  const Grid g = cfg.make_grid();
  const InitialData d = initial_data(cfg, g);
  const EtaLimitReport rep = eta_limit_study(d.u, d.v, cfg.sensitivity.build(), cfg.sim, cfg.etas);
  std::vector<ReportRow> rows;
  for (std::size_t k = 0; k < rep.pairwise_l2.size(); ++k) {
    ReportRow r;
    r.add("eta", rep.etas[k]).add("eta_next", rep.etas[k + 1]).add("l2_difference", rep.pairwise_l2[k]);
    rows.push_back(r);
  }
  ReportRow r;
  r.add("etas", rep.etas.size()).add("monotone", rep.monotone).add("halves", rep.halves());
  rows.push_back(r);
  CommandOutput out;
  std::ostringstream os;
  write_report(os, rows, hash);
  out.text = os.str();
  return out;
}

}  // namespace detail

/// Runs the configured command and writes its single output file (or stdout
/// for "-"). Returns 0 on completion or a passed check, 2 on BlowupSuspected,
/// 1 on errors; diagnostics go to err.
inline int run_experiment(const ExperimentConfig& cfg, std::ostream& err = std::cerr, const RunOverrides& ov = {}) {
  const std::uint64_t hash = fnv1a64(cfg.source);
  const std::string output = ov.output.value_or(cfg.output);
  const std::string dump = ov.dump_fields.value_or(cfg.dump_fields);
  detail::CommandOutput out;
  try {
    switch (cfg.command) {
      case Command::Simulate: out = detail::simulate(cfg, dump, hash, false); break;
      case Command::FitDecay: out = detail::simulate(cfg, dump, hash, true); break;
      case Command::VerifySemigroup: out = detail::verify_semigroup(cfg, hash); break;
      case Command::VerifyIntegral: out = detail::verify_integral(cfg, hash); break;
      case Command::Bisect: out = detail::bisect(cfg, hash); break;
      case Command::EtaLimit: out = detail::eta_limit(cfg, hash); break;
    }
  } catch (const std::exception& e) {
    err << "kslab: " << to_string(cfg.command) << ": " << e.what() << '\n';
    return kExitError;
  }
  for (const auto& d : out.diagnostics) err << "kslab: " << d << '\n';
  if (output == "-") {
    std::cout << out.text << std::flush;
  } else {
    std::ofstream os(output, std::ios::binary);
    os << out.text;
    os.close();
    if (!os) {
      err << "kslab: cannot write " << output << '\n';
      return kExitError;
    }
  }
  return out.exit_code;
}

}  // namespace kslab
