#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

#include "kslab/grid.hpp"
#include "kslab/io.hpp"
#include "kslab/norms.hpp"
#include "kslab/spectral.hpp"

namespace kslab {

enum class ProfileKind { Constant, CosineMode, GaussianBump, File };

inline const char* to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::Constant: return "constant";
    case ProfileKind::CosineMode: return "cosine-mode";
    case ProfileKind::GaussianBump: return "gaussian-bump";
    case ProfileKind::File: return "file";
  }
  return "?";
}

inline ProfileKind parse_profile_kind(const std::string& name) {
  if (name == "constant") return ProfileKind::Constant;
  if (name == "cosine-mode") return ProfileKind::CosineMode;
  if (name == "gaussian-bump") return ProfileKind::GaussianBump;
  if (name == "file") return ProfileKind::File;
  throw std::invalid_argument("unknown profile '" + name +
                              "' (expected constant, cosine-mode, gaussian-bump or file)");
}

/// An initial profile base + amplitude * pattern, where pattern is 1,
/// cos(j pi x / lx) cos(k pi y / ly), exp(-|x - c|^2 / (2 w^2)), or a field dump.
struct ProfileSpec {
  ProfileKind kind = ProfileKind::Constant;
  double base = 0.0;
  double amplitude = 1.0;
  int mode_j = 1;
  int mode_k = 0;
  double center_x = 0.5;
  double center_y = 0.5;
  double width = 0.1;
  std::string path;
};

inline ScalarField profile_pattern(const ProfileSpec& p, const Grid& g) {
  using std::numbers::pi;
  switch (p.kind) {
    case ProfileKind::Constant:
      return ScalarField(g, 1.0);
    case ProfileKind::CosineMode: {
      if (p.mode_j < 0 || p.mode_k < 0) throw std::invalid_argument("profile: mode indices must be >= 0");
      const double a = p.mode_j * pi / g.lx(), b = p.mode_k * pi / g.ly();
      return sample([a, b](double x, double y) { return std::cos(a * x) * std::cos(b * y); }, g);
    }
    case ProfileKind::GaussianBump: {
      if (!(p.width > 0.0)) throw std::invalid_argument("profile: gaussian width must be > 0");
      const double cx = p.center_x, cy = p.center_y, s2 = 2.0 * p.width * p.width;
      return sample(
          [=](double x, double y) { return std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / s2); }, g);
    }
    case ProfileKind::File: {
      FieldDump d = read_field_dump(p.path);
      if (d.nx != g.nx() || d.ny != g.ny())
        throw std::invalid_argument("profile: file " + p.path + " holds a " + std::to_string(d.nx) + "x" +
                                    std::to_string(d.ny) + " field, grid is " + std::to_string(g.nx()) +
                                    "x" + std::to_string(g.ny()));
      return ScalarField(g, std::move(d.values));
    }
  }
  throw std::invalid_argument("profile: bad kind");
}

inline ScalarField build_profile(const ProfileSpec& p, const Grid& g) {
  ScalarField f = profile_pattern(p, g);
  f *= p.amplitude;
  f += p.base;
  return f;
}

/// Rescales the whole profile so that ||u0||_1 = target.
inline ScalarField scale_to_l1(ScalarField u, double target) {
  if (!(target >= 0.0)) throw std::invalid_argument("scale_to_l1: target must be >= 0");
  const double n = lp_norm(u, 1.0);
  if (!(n > 0.0)) throw std::invalid_argument("scale_to_l1: profile has zero L1 norm");
  u *= target / n;
  return u;
}

/// Rescales the whole profile so that ||grad v0||_2 = target.
inline ScalarField scale_grad_to_l2(ScalarField v, double target) {
  if (!(target >= 0.0)) throw std::invalid_argument("scale_grad_to_l2: target must be >= 0");
  const double n = std::sqrt(grad_l2_norm_squared(dct_forward(v)));
  if (!(n > 0.0)) throw std::invalid_argument("scale_grad_to_l2: profile has no gradient to scale");
  v *= target / n;
  return v;
}

}  // namespace kslab
