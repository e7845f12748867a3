#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "kslab/analysis.hpp"
#include "kslab/dynamics.hpp"
#include "kslab/profiles.hpp"
#include "kslab/verification.hpp"

namespace kslab {

enum class Command { Simulate, VerifySemigroup, VerifyIntegral, FitDecay, Bisect, EtaLimit };

inline const char* to_string(Command c) {
  switch (c) {
    case Command::Simulate: return "simulate";
    case Command::VerifySemigroup: return "verify-semigroup";
    case Command::VerifyIntegral: return "verify-integral";
    case Command::FitDecay: return "fit-decay";
    case Command::Bisect: return "bisect";
    case Command::EtaLimit: return "eta-limit";
  }
  return "?";
}

struct GridSpec {
  int nx = 0;
  int ny = 0;
  double lx = 1.0;
  double ly = 1.0;
};

struct InitialSpec {
  ProfileSpec u{ProfileKind::Constant, 0.0, 1.0};
  ProfileSpec v{ProfileKind::Constant, 0.0, 1.0};
  std::optional<double> target_u_l1;
  std::optional<double> target_grad_v_l2;
};

struct SensitivitySpec {
  bool tensor = false;
  double chi = 1.0;
  double angle = 0.0;
  double cs = 1.0;
  double eta = 0.0;

  Sensitivity build() const { return tensor ? rotation_sensitivity(angle, cs, eta) : scalar_sensitivity(chi); }
};

struct VerifySpec {
  Estimate estimate = Estimate::L21i;
  double p = 2.0;
  double q = 2.0;
  int trials = 200;
  SemigroupOptions options;
};

struct IntegralSpec {
  bool standard_sweep = true;
  IntegralParams params{0.0, 0.0, 1.0, 2.0};
  bool cross_check = true;
  std::size_t panels = 1000000;
};

struct FitSpec {
  std::string series = "linf_dev_u";
  std::optional<double> t_lo;
  std::optional<double> t_hi;
};

struct BisectSpec {
  double direction_u = 1.0;
  double direction_v = 1.0;
  ThresholdOptions options;
};

struct ExperimentConfig {
  Command command = Command::Simulate;
  std::string output = "-";
  std::uint64_t seed = 0;
  std::string dump_fields;  // path prefix; empty disables
  GridSpec grid;
  InitialSpec initial;
  SensitivitySpec sensitivity;
  SimConfig sim;
  VerifySpec verify;
  IntegralSpec integral;
  FitSpec fit;
  BisectSpec bisect;
  std::vector<double> etas{0.2, 0.1, 0.05, 0.025};
  std::string source;  // exact config text, hashed into output headers

  Grid make_grid() const { return Grid(grid.nx, grid.ny, grid.lx, grid.ly); }
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& what)
      : std::runtime_error(line > 0 ? "config line " + std::to_string(line) + ": " + what : "config: " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

inline const std::vector<std::string>& norm_series_names() {
  static const std::vector<std::string> names = {"mass",       "linf_dev_u", "l1_u",     "l2_u",
                                                 "ltheta_u",   "l2_grad_v",  "linf_dev_v", "energy_u",
                                                 "energy_v",   "dual_ut",    "dual_vt",    "linf_u",
                                                 "l2_dev_u",   "ltheta_dev_u", "ltheta_grad_v"};
  return names;
}

inline double norm_series_value(const NormRecord& r, const std::string& name) {
  if (name == "mass") return r.mass;
  if (name == "linf_dev_u") return r.linf_dev_u;
  if (name == "l1_u") return r.l1_u;
  if (name == "l2_u") return r.l2_u;
  if (name == "ltheta_u") return r.ltheta_u;
  if (name == "l2_grad_v") return r.l2_grad_v;
  if (name == "linf_dev_v") return r.linf_dev_v;
  if (name == "energy_u") return r.energy_u;
  if (name == "energy_v") return r.energy_v;
  if (name == "dual_ut") return r.dual_ut;
  if (name == "dual_vt") return r.dual_vt;
  if (name == "linf_u") return r.linf_u;
  if (name == "l2_dev_u") return r.l2_dev_u;
  if (name == "ltheta_dev_u") return r.ltheta_dev_u;
  if (name == "ltheta_grad_v") return r.ltheta_grad_v;
  throw std::invalid_argument("unknown norm series '" + name + "'");
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& v) {
  if (v == "inf" || v == "+inf" || v == "infinity") return std::numeric_limits<double>::infinity();
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(x))
    throw std::invalid_argument("expected a number, got '" + v + "'");
  return x;
}

inline double parse_finite(const std::string& v) {
  const double x = parse_double(v);
  if (!std::isfinite(x)) throw std::invalid_argument("expected a finite number, got '" + v + "'");
  return x;
}

template <class Int>
Int parse_int(const std::string& v) {
  Int x{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("expected an integer, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("expected true or false, got '" + v + "'");
}

inline Command parse_command(const std::string& v) {
  for (Command c : {Command::Simulate, Command::VerifySemigroup, Command::VerifyIntegral, Command::FitDecay,
                    Command::Bisect, Command::EtaLimit})
    if (v == to_string(c)) return c;
  throw std::invalid_argument("unknown command '" + v +
                              "' (expected simulate, verify-semigroup, verify-integral, fit-decay, bisect or eta-limit)");
}

inline Estimate parse_estimate(const std::string& v) {
  if (v == "i") return Estimate::L21i;
  if (v == "ii") return Estimate::L21ii;
  if (v == "iii") return Estimate::L21iii;
  if (v == "iv") return Estimate::L21iv;
  throw std::invalid_argument("estimate must be one of i, ii, iii, iv; got '" + v + "'");
}

inline int parse_even(const std::string& v) {
  const int n = parse_int<int>(v);
  if (n < 4 || n % 2 != 0) throw std::invalid_argument("grid size must be even and >= 4, got " + v);
  return n;
}

inline double parse_positive(const std::string& v) {
  const double x = parse_finite(v);
  if (!(x > 0.0)) throw std::invalid_argument("expected a positive number, got '" + v + "'");
  return x;
}

inline std::vector<double> parse_list(const std::string& v) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const std::string item = trim(v.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    out.push_back(parse_finite(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

inline void profile_keys(std::map<std::string, Setter>& t, const std::string& prefix,
                         ProfileSpec InitialSpec::*which) {
  auto get = [which](ExperimentConfig& c) -> ProfileSpec& { return c.initial.*which; };
  t[prefix + "profile"] = [get](ExperimentConfig& c, const std::string& v) { get(c).kind = parse_profile_kind(v); };
  t[prefix + "base"] = [get](ExperimentConfig& c, const std::string& v) { get(c).base = parse_finite(v); };
  t[prefix + "amplitude"] = [get](ExperimentConfig& c, const std::string& v) { get(c).amplitude = parse_finite(v); };
  t[prefix + "mode_j"] = [get](ExperimentConfig& c, const std::string& v) { get(c).mode_j = parse_int<int>(v); };
  t[prefix + "mode_k"] = [get](ExperimentConfig& c, const std::string& v) { get(c).mode_k = parse_int<int>(v); };
  t[prefix + "center_x"] = [get](ExperimentConfig& c, const std::string& v) { get(c).center_x = parse_finite(v); };
  t[prefix + "center_y"] = [get](ExperimentConfig& c, const std::string& v) { get(c).center_y = parse_finite(v); };
  t[prefix + "width"] = [get](ExperimentConfig& c, const std::string& v) { get(c).width = parse_positive(v); };
  t[prefix + "file"] = [get](ExperimentConfig& c, const std::string& v) {
    if (!std::filesystem::exists(v)) throw std::invalid_argument("file '" + v + "' does not exist");
    get(c).path = v;
  };
}

inline const std::map<std::string, std::map<std::string, Setter>>& key_table() {
  static const auto table = [] {
    std::map<std::string, std::map<std::string, Setter>> t;
    auto& e = t["experiment"];
    e["command"] = [](ExperimentConfig& c, const std::string& v) { c.command = parse_command(v); };
    e["output"] = [](ExperimentConfig& c, const std::string& v) { c.output = v; };
    e["seed"] = [](ExperimentConfig& c, const std::string& v) { c.seed = parse_int<std::uint64_t>(v); };
    e["dump_fields"] = [](ExperimentConfig& c, const std::string& v) { c.dump_fields = v; };

    auto& g = t["grid"];
    g["nx"] = [](ExperimentConfig& c, const std::string& v) { c.grid.nx = parse_even(v); };
    g["ny"] = [](ExperimentConfig& c, const std::string& v) { c.grid.ny = parse_even(v); };
    g["lx"] = [](ExperimentConfig& c, const std::string& v) { c.grid.lx = parse_positive(v); };
    g["ly"] = [](ExperimentConfig& c, const std::string& v) { c.grid.ly = parse_positive(v); };

    auto& i = t["initial"];
    profile_keys(i, "u_", &InitialSpec::u);
    profile_keys(i, "v_", &InitialSpec::v);
    i["target_u_l1"] = [](ExperimentConfig& c, const std::string& v) { c.initial.target_u_l1 = parse_positive(v); };
    i["target_grad_v_l2"] = [](ExperimentConfig& c, const std::string& v) {
      c.initial.target_grad_v_l2 = parse_positive(v);
    };

    auto& s = t["sensitivity"];
    s["type"] = [](ExperimentConfig& c, const std::string& v) {
      if (v != "scalar" && v != "tensor") throw std::invalid_argument("type must be scalar or tensor, got '" + v + "'");
      c.sensitivity.tensor = v == "tensor";
    };
    s["chi"] = [](ExperimentConfig& c, const std::string& v) { c.sensitivity.chi = parse_finite(v); };
    s["angle"] = [](ExperimentConfig& c, const std::string& v) { c.sensitivity.angle = parse_finite(v); };
    s["cs"] = [](ExperimentConfig& c, const std::string& v) { c.sensitivity.cs = parse_positive(v); };
    s["eta"] = [](ExperimentConfig& c, const std::string& v) {
      c.sensitivity.eta = parse_finite(v);
      if (c.sensitivity.eta < 0.0) throw std::invalid_argument("eta must be >= 0");
    };

    auto& m = t["sim"];
    m["dt"] = [](ExperimentConfig& c, const std::string& v) { c.sim.dt = parse_positive(v); };
    m["t_end"] = [](ExperimentConfig& c, const std::string& v) { c.sim.t_end = parse_positive(v); };
    m["record_every"] = [](ExperimentConfig& c, const std::string& v) {
      c.sim.record_every = parse_int<int>(v);
      if (c.sim.record_every < 1) throw std::invalid_argument("record_every must be >= 1");
    };
    m["blowup_linf"] = [](ExperimentConfig& c, const std::string& v) { c.sim.blowup_linf = parse_positive(v); };
    m["dealias"] = [](ExperimentConfig& c, const std::string& v) { c.sim.dealias = parse_bool(v); };
    m["scheme"] = [](ExperimentConfig& c, const std::string& v) {
      if (v == "strang") c.sim.scheme = Scheme::Strang;
      else if (v == "lie-trotter") c.sim.scheme = Scheme::LieTrotter;
      else throw std::invalid_argument("scheme must be strang or lie-trotter, got '" + v + "'");
    };
    m["theta"] = [](ExperimentConfig& c, const std::string& v) { c.sim.theta = parse_positive(v); };

    auto& vf = t["verify"];
    vf["estimate"] = [](ExperimentConfig& c, const std::string& v) { c.verify.estimate = parse_estimate(v); };
    vf["p"] = [](ExperimentConfig& c, const std::string& v) { c.verify.p = parse_double(v); };
    vf["q"] = [](ExperimentConfig& c, const std::string& v) { c.verify.q = parse_double(v); };
    vf["trials"] = [](ExperimentConfig& c, const std::string& v) { c.verify.trials = parse_int<int>(v); };
    vf["times_per_trial"] = [](ExperimentConfig& c, const std::string& v) {
      c.verify.options.times_per_trial = parse_int<int>(v);
    };
    vf["t_min"] = [](ExperimentConfig& c, const std::string& v) { c.verify.options.t_min = parse_positive(v); };
    vf["t_max"] = [](ExperimentConfig& c, const std::string& v) { c.verify.options.t_max = parse_positive(v); };

    auto& q = t["integral"];
    q["sweep"] = [](ExperimentConfig& c, const std::string& v) {
      if (v != "standard" && v != "single") throw std::invalid_argument("sweep must be standard or single, got '" + v + "'");
      c.integral.standard_sweep = v == "standard";
    };
    q["alpha"] = [](ExperimentConfig& c, const std::string& v) { c.integral.params.alpha = parse_finite(v); };
    q["beta"] = [](ExperimentConfig& c, const std::string& v) { c.integral.params.beta = parse_finite(v); };
    q["gamma"] = [](ExperimentConfig& c, const std::string& v) { c.integral.params.gamma = parse_finite(v); };
    q["delta"] = [](ExperimentConfig& c, const std::string& v) { c.integral.params.delta = parse_finite(v); };
    q["cross_check"] = [](ExperimentConfig& c, const std::string& v) { c.integral.cross_check = parse_bool(v); };
    q["panels"] = [](ExperimentConfig& c, const std::string& v) { c.integral.panels = parse_int<std::size_t>(v); };

    auto& f = t["fit"];
    f["series"] = [](ExperimentConfig& c, const std::string& v) {
      if (v == "mass") throw std::invalid_argument("series 'mass' is conserved, not decaying");
      NormRecord probe;
      norm_series_value(probe, v);
      c.fit.series = v;
    };
    f["t_lo"] = [](ExperimentConfig& c, const std::string& v) { c.fit.t_lo = parse_finite(v); };
    f["t_hi"] = [](ExperimentConfig& c, const std::string& v) { c.fit.t_hi = parse_finite(v); };

    auto& b = t["bisect"];
    b["direction_u"] = [](ExperimentConfig& c, const std::string& v) { c.bisect.direction_u = parse_finite(v); };
    b["direction_v"] = [](ExperimentConfig& c, const std::string& v) { c.bisect.direction_v = parse_finite(v); };
    b["eps_start"] = [](ExperimentConfig& c, const std::string& v) { c.bisect.options.eps_start = parse_positive(v); };
    b["eps_max"] = [](ExperimentConfig& c, const std::string& v) { c.bisect.options.eps_max = parse_positive(v); };
    b["gap"] = [](ExperimentConfig& c, const std::string& v) { c.bisect.options.gap = parse_positive(v); };

    t["eta"]["etas"] = [](ExperimentConfig& c, const std::string& v) { c.etas = parse_list(v); };
    return t;
  }();
  return table;
}

}  // namespace detail

/// Parses sectioned `key = value` text. Unknown sections or keys, malformed
/// values and duplicates are errors carrying the line number.
inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  cfg.source = text;
  const auto& table = detail::key_table();
  std::string section;
  std::set<std::string> seen;
  int grid_line = 0;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(line_no, "malformed section header '" + line + "'");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (!table.count(section)) throw ConfigError(line_no, "unknown section [" + section + "]");
      if (section == "grid") grid_line = line_no;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line_no, "expected key = value, got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(line_no, "key '" + key + "' appears before any [section]");
    const auto& keys = table.at(section);
    const auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError(line_no, "unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert(section + "." + key).second)
      throw ConfigError(line_no, "duplicate key '" + key + "' in [" + section + "]");
    if (value.empty()) throw ConfigError(line_no, "key '" + key + "' has no value");
    try {
      it->second(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(line_no, key + ": " + e.what());
    }
  }
  if (!seen.count("experiment.command")) throw ConfigError(0, "missing required key 'command' in [experiment]");
  const bool needs_grid = cfg.command != Command::VerifyIntegral;
  for (const char* k : {"nx", "ny"})
    if (needs_grid && !seen.count(std::string("grid.") + k))
      throw ConfigError(grid_line, std::string("missing required key '") + k + "' in [grid]");
  for (const auto* p : {&cfg.initial.u, &cfg.initial.v})
    if (p->kind == ProfileKind::File && p->path.empty())
      throw ConfigError(0, "profile 'file' needs u_file / v_file");
  try {
    cfg.sim.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, std::string("[sim]: ") + e.what());
  }
  return cfg;
}

}  // namespace kslab
