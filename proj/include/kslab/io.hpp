#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kslab/dynamics.hpp"
#include "kslab/grid.hpp"

namespace kslab {

#ifndef KSLAB_VERSION
#define KSLAB_VERSION "0.0.0"
#endif

inline constexpr const char* kVersion = KSLAB_VERSION;

/// 17 significant digits: round-trips every double.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// FNV-1a, 64-bit.
inline std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string header_comment(std::uint64_t config_hash) {
  return std::string("# kslab ") + kVersion + " config_hash=" + hex64(config_hash);
}

// ---------------------------------------------------------------------------
// Norm series CSV
// ---------------------------------------------------------------------------

inline constexpr const char* kNormCsvHeader =
    "t,mass,linf_dev_u,l1_u,l2_u,ltheta_u,l2_grad_v,linf_dev_v,energy_u,energy_v,dual_ut,dual_vt";

inline void write_norm_row(std::ostream& os, const NormRecord& r) {
  const double cols[] = {r.t,          r.mass,       r.linf_dev_u, r.l1_u,     r.l2_u,    r.ltheta_u,
                         r.l2_grad_v, r.linf_dev_v, r.energy_u,   r.energy_v, r.dual_ut, r.dual_vt};
  for (std::size_t i = 0; i < std::size(cols); ++i) {
    if (i) os << ',';
    os << format_double(cols[i]);
  }
  os << '\n';
}

inline void write_norm_csv(std::ostream& os, const std::vector<NormRecord>& records, std::uint64_t config_hash) {
  os << header_comment(config_hash) << '\n' << kNormCsvHeader << '\n';
  for (const auto& r : records) write_norm_row(os, r);
}

// ---------------------------------------------------------------------------
// Report rows: key=value;key=value
// ---------------------------------------------------------------------------

class ReportRow {
 public:
  ReportRow& add(const std::string& key, double value) { return add(key, format_double(value)); }
  ReportRow& add(const std::string& key, int value) { return add(key, std::to_string(value)); }
  ReportRow& add(const std::string& key, std::size_t value) { return add(key, std::to_string(value)); }
  ReportRow& add(const std::string& key, bool value) { return add(key, std::string(value ? "true" : "false")); }
  ReportRow& add(const std::string& key, const char* value) { return add(key, std::string(value)); }
  ReportRow& add(const std::string& key, const std::string& value) {
    fields_.emplace_back(key, value);
    return *this;
  }

  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < fields_.size(); ++i) {
      if (i) out += ';';
      out += fields_[i].first + '=' + fields_[i].second;
    }
    return out;
  }

 private:
  std::vector<std::pair<std::string, std::string>> fields_;
};

inline void write_report(std::ostream& os, const std::vector<ReportRow>& rows, std::uint64_t config_hash) {
  os << header_comment(config_hash) << '\n';
  for (const auto& r : rows) os << r.str() << '\n';
}

// ---------------------------------------------------------------------------
// Field dumps: "KSFLD001", nx u64, ny u64, t f64, then nx*ny f64, all little-endian
// ---------------------------------------------------------------------------

inline constexpr std::array<char, 8> kDumpMagic = {'K', 'S', 'F', 'L', 'D', '0', '0', '1'};

struct FieldDump {
  std::size_t nx = 0;
  std::size_t ny = 0;
  double t = 0.0;
  std::vector<double> values;
};

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b, 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("field dump: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace detail

inline void write_field_dump(std::ostream& os, const ScalarField& f, double t) {
  os.write(kDumpMagic.data(), 8);
  detail::put_u64(os, f.grid().nx());
  detail::put_u64(os, f.grid().ny());
  detail::put_u64(os, std::bit_cast<std::uint64_t>(t));
  for (double x : f.values()) detail::put_u64(os, std::bit_cast<std::uint64_t>(x));
}

inline void write_field_dump(const std::string& path, const ScalarField& f, double t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_field_dump(os, f, t);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline FieldDump read_field_dump(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), 8) || magic != kDumpMagic) throw std::runtime_error("field dump: bad magic");
  FieldDump d;
  d.nx = detail::get_u64(is);
  d.ny = detail::get_u64(is);
  d.t = std::bit_cast<double>(detail::get_u64(is));
  if (d.nx == 0 || d.ny == 0 || d.nx > (1u << 16) || d.ny > (1u << 16))
    throw std::runtime_error("field dump: implausible size");
  d.values.resize(d.nx * d.ny);
  for (double& x : d.values) x = std::bit_cast<double>(detail::get_u64(is));
  return d;
}

inline FieldDump read_field_dump(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open field file " + path);
  return read_field_dump(is);
}

}  // namespace kslab
