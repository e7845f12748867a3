#pragma once

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "kslab/grid.hpp"

namespace kslab {

/// Cosine-basis coefficients of a field in the discrete Neumann eigenbasis.
///
/// The field is f(x_i, y_j) = sum_{j,k} c_{jk} cos(j pi x / lx) cos(k pi y / ly),
/// so c_{00} is the mean of f. Mode (j,k) is stored at coeffs[k*nx + j].
class Spectrum {
 public:
  explicit Spectrum(const Grid& grid) : grid_(grid), coeffs_(grid.size(), 0.0) {}

  const Grid& grid() const { return grid_; }
  std::vector<double>& coeffs() { return coeffs_; }
  const std::vector<double>& coeffs() const { return coeffs_; }

  double& at(std::size_t j, std::size_t k) { return coeffs_[k * grid_.nx() + j]; }
  double at(std::size_t j, std::size_t k) const { return coeffs_[k * grid_.nx() + j]; }

  /// Neumann-Laplacian eigenvalue of mode (j,k).
  double mu(std::size_t j, std::size_t k) const {
    const double kx = static_cast<double>(j) * std::numbers::pi / grid_.lx();
    const double ky = static_cast<double>(k) * std::numbers::pi / grid_.ly();
    return kx * kx + ky * ky;
  }

  /// L^2 mass of basis function (j,k) relative to |Omega|: 1 for the
  /// constant, 1/2 per cosine factor otherwise.
  static double basis_weight(std::size_t j, std::size_t k) {
    return (j == 0 ? 1.0 : 0.5) * (k == 0 ? 1.0 : 0.5);
  }

  double mean() const { return coeffs_[0]; }

 private:
  Grid grid_;
  std::vector<double> coeffs_;
};

/// Sine/cosine coefficients of a vector field whose normal component is
/// expanded in sines (vanishing on the boundary).
///
/// sx(m,k), m = 1..nx: x-component = sum sx sin(m pi x/lx) cos(k pi y/ly).
/// sy(j,m), m = 1..ny: y-component = sum sy cos(j pi x/lx) sin(m pi y/ly).
struct VectorSpectrum {
  Grid grid;
  std::vector<double> sx;  // stored at k*nx + (m-1)
  std::vector<double> sy;  // stored at (m-1)*nx + j

  explicit VectorSpectrum(const Grid& g) : grid(g), sx(g.size(), 0.0), sy(g.size(), 0.0) {}
};

namespace detail {

enum class Transform : int {
  CosForward = 0,   // REDFT10 x REDFT10
  CosInverse,       // REDFT01 x REDFT01
  SineInverseX,     // x: RODFT01, y: REDFT01
  SineInverseY,     // x: REDFT01, y: RODFT01
  SineForwardX,     // x: RODFT10, y: REDFT10
  SineForwardY,     // x: REDFT10, y: RODFT10
  Count
};

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

/// FFTW r2r plans for one (nx, ny). Execution through the new-array
/// interface is thread-safe; only planning and destruction lock.
class TransformPlans {
 public:
  TransformPlans(std::size_t nx, std::size_t ny) : n_(nx * ny) {
    std::vector<double> in(n_, 0.0), out(n_, 0.0);
    const int n0 = static_cast<int>(ny);
    const int n1 = static_cast<int>(nx);
    const std::array<std::pair<fftw_r2r_kind, fftw_r2r_kind>, kCount> kinds = {{
        {FFTW_REDFT10, FFTW_REDFT10},
        {FFTW_REDFT01, FFTW_REDFT01},
        {FFTW_REDFT01, FFTW_RODFT01},
        {FFTW_RODFT01, FFTW_REDFT01},
        {FFTW_REDFT10, FFTW_RODFT10},
        {FFTW_RODFT10, FFTW_REDFT10},
    }};
    std::lock_guard lock(planner_mutex());
    for (std::size_t n = 0; n < kCount; ++n) {
      // first kind acts along y (slow axis), second along x
      plans_[n] = fftw_plan_r2r_2d(n0, n1, in.data(), out.data(), kinds[n].first, kinds[n].second,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_PRESERVE_INPUT);
      if (plans_[n] == nullptr) throw std::runtime_error("spectral: FFTW planning failed");
    }
  }
  ~TransformPlans() {
    std::lock_guard lock(planner_mutex());
    for (auto* p : plans_)
      if (p != nullptr) fftw_destroy_plan(p);
  }
  TransformPlans(const TransformPlans&) = delete;
  TransformPlans& operator=(const TransformPlans&) = delete;

  void execute(Transform t, const std::vector<double>& in, std::vector<double>& out) const {
    if (in.size() != n_ || out.size() != n_)
      throw std::invalid_argument("spectral: transform size mismatch");
    // FFTW's signature is non-const; PRESERVE_INPUT guarantees `in` is untouched.
    fftw_execute_r2r(plans_[static_cast<int>(t)], const_cast<double*>(in.data()), out.data());
  }

 private:
  static constexpr std::size_t kCount = static_cast<std::size_t>(Transform::Count);
  std::size_t n_;
  std::array<fftw_plan, kCount> plans_{};
};

inline std::shared_ptr<const TransformPlans> plans_for(const Grid& grid) {
  static std::mutex cache_mutex;
  static std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const TransformPlans>> cache;
  std::lock_guard lock(cache_mutex);
  auto key = std::make_pair(grid.nx(), grid.ny());
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto plans = std::make_shared<const TransformPlans>(grid.nx(), grid.ny());
  cache.emplace(key, plans);
  return plans;
}

// Per-axis scale factors between FFTW's unnormalized transforms and our
// coefficient conventions.
inline double cos_forward_scale(std::size_t m, std::size_t n) {
  return m == 0 ? 1.0 / (2.0 * n) : 1.0 / static_cast<double>(n);
}
inline double cos_inverse_scale(std::size_t m) { return m == 0 ? 1.0 : 0.5; }
// sine mode m (1..n) stored at m-1
inline double sine_forward_scale(std::size_t m, std::size_t n) {
  return m == n ? 1.0 / (2.0 * n) : 1.0 / static_cast<double>(n);
}
inline double sine_inverse_scale(std::size_t m, std::size_t n) { return m == n ? 1.0 : 0.5; }

}  // namespace detail

/// 2/3-rule mask: mode (j,k) survives dealiasing when 3j < 2nx and 3k < 2ny.
inline bool keeps_mode(const Grid& grid, std::size_t j, std::size_t k) {
  return 3 * j < 2 * grid.nx() && 3 * k < 2 * grid.ny();
}

inline Spectrum dct_forward(const ScalarField& f) {
  const Grid& g = f.grid();
  Spectrum s(g);
  detail::plans_for(g)->execute(detail::Transform::CosForward, f.values(), s.coeffs());
  const std::size_t nx = g.nx(), ny = g.ny();
  for (std::size_t k = 0; k < ny; ++k) {
    const double sk = detail::cos_forward_scale(k, ny);
    for (std::size_t j = 0; j < nx; ++j) s.at(j, k) *= sk * detail::cos_forward_scale(j, nx);
  }
  return s;
}

inline ScalarField dct_inverse(const Spectrum& s) {
  const Grid& g = s.grid();
  const std::size_t nx = g.nx(), ny = g.ny();
  std::vector<double> in(g.size());
  for (std::size_t k = 0; k < ny; ++k)
    for (std::size_t j = 0; j < nx; ++j)
      in[k * nx + j] = s.at(j, k) * detail::cos_inverse_scale(j) * detail::cos_inverse_scale(k);
  ScalarField f(g);
  detail::plans_for(g)->execute(detail::Transform::CosInverse, in, f.values());
  return f;
}

/// First nonzero Neumann eigenvalue of -Laplacian on the rectangle.
inline double lambda1(const Grid& grid) {
  const double a = std::numbers::pi / grid.lx();
  const double b = std::numbers::pi / grid.ly();
  return std::min(a * a, b * b);
}

/// Multiplies each mode by m(mu(j,k)).
template <class Multiplier>
Spectrum apply_multiplier(Spectrum s, Multiplier&& m) {
  const std::size_t nx = s.grid().nx(), ny = s.grid().ny();
  for (std::size_t k = 0; k < ny; ++k)
    for (std::size_t j = 0; j < nx; ++j) s.at(j, k) *= m(s.mu(j, k));
  return s;
}

inline void low_pass(Spectrum& s) {
  const Grid& g = s.grid();
  for (std::size_t k = 0; k < g.ny(); ++k)
    for (std::size_t j = 0; j < g.nx(); ++j)
      if (!keeps_mode(g, j, k)) s.at(j, k) = 0.0;
}

inline void check_time(double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("semigroup: t must be finite and >= 0");
}

/// e^{t Laplacian} with Neumann conditions, exact per mode.
inline ScalarField heat_semigroup(const ScalarField& f, double t) {
  check_time(t);
  if (t == 0.0) return f;
  return dct_inverse(apply_multiplier(dct_forward(f), [t](double mu) { return std::exp(-mu * t); }));
}

/// e^{t(Laplacian - 1)}.
inline ScalarField helmholtz_semigroup(const ScalarField& f, double t) {
  check_time(t);
  if (t == 0.0) return f;
  return dct_inverse(
      apply_multiplier(dct_forward(f), [t](double mu) { return std::exp(-(mu + 1.0) * t); }));
}

inline Spectrum laplacian(Spectrum s) {
  return apply_multiplier(std::move(s), [](double mu) { return -mu; });
}

/// Term-by-term derivative of the cosine series, evaluated at cell centers.
inline VectorField gradient(const Spectrum& s) {
  const Grid& g = s.grid();
  const std::size_t nx = g.nx(), ny = g.ny();
  const auto plans = detail::plans_for(g);
  std::vector<double> in(g.size(), 0.0);

  VectorField w(g);
  // d/dx cos(j pi x/lx) = -(j pi/lx) sin(j pi x/lx); sine mode j stored at j-1, mode nx is zero.
  for (std::size_t k = 0; k < ny; ++k) {
    for (std::size_t j = 1; j < nx; ++j) {
      const double kx = static_cast<double>(j) * std::numbers::pi / g.lx();
      in[k * nx + (j - 1)] = -kx * s.at(j, k) * detail::sine_inverse_scale(j, nx) *
                             detail::cos_inverse_scale(k);
    }
    in[k * nx + (nx - 1)] = 0.0;
  }
  plans->execute(detail::Transform::SineInverseX, in, w.x.values());

  std::fill(in.begin(), in.end(), 0.0);
  for (std::size_t k = 1; k < ny; ++k) {
    const double ky = static_cast<double>(k) * std::numbers::pi / g.ly();
    for (std::size_t j = 0; j < nx; ++j)
      in[(k - 1) * nx + j] = -ky * s.at(j, k) * detail::cos_inverse_scale(j) *
                             detail::sine_inverse_scale(k, ny);
  }
  plans->execute(detail::Transform::SineInverseY, in, w.y.values());
  return w;
}

inline VectorField gradient(const ScalarField& f) { return gradient(dct_forward(f)); }

/// Sine expansion of the x-component along x and of the y-component along y.
inline VectorSpectrum vector_forward(const VectorField& w) {
  const Grid& g = w.grid();
  const std::size_t nx = g.nx(), ny = g.ny();
  const auto plans = detail::plans_for(g);
  VectorSpectrum s(g);
  plans->execute(detail::Transform::SineForwardX, w.x.values(), s.sx);
  plans->execute(detail::Transform::SineForwardY, w.y.values(), s.sy);
  for (std::size_t k = 0; k < ny; ++k) {
    for (std::size_t m = 1; m <= nx; ++m)
      s.sx[k * nx + (m - 1)] *= detail::sine_forward_scale(m, nx) * detail::cos_forward_scale(k, ny);
  }
  for (std::size_t m = 1; m <= ny; ++m) {
    for (std::size_t j = 0; j < nx; ++j)
      s.sy[(m - 1) * nx + j] *= detail::cos_forward_scale(j, nx) * detail::sine_forward_scale(m, ny);
  }
  return s;
}

/// Inverse of vector_forward.
inline VectorField vector_inverse(const VectorSpectrum& s) {
  const Grid& g = s.grid;
  const std::size_t nx = g.nx(), ny = g.ny();
  const auto plans = detail::plans_for(g);
  std::vector<double> in(g.size());
  VectorField w(g);
  for (std::size_t k = 0; k < ny; ++k)
    for (std::size_t m = 1; m <= nx; ++m)
      in[k * nx + (m - 1)] =
          s.sx[k * nx + (m - 1)] * detail::sine_inverse_scale(m, nx) * detail::cos_inverse_scale(k);
  plans->execute(detail::Transform::SineInverseX, in, w.x.values());
  for (std::size_t m = 1; m <= ny; ++m)
    for (std::size_t j = 0; j < nx; ++j)
      in[(m - 1) * nx + j] =
          s.sy[(m - 1) * nx + j] * detail::cos_inverse_scale(j) * detail::sine_inverse_scale(m, ny);
  plans->execute(detail::Transform::SineInverseY, in, w.y.values());
  return w;
}

/// Zeroes sine modes outside the 2/3 band (sine mode m counts as index m).
inline void low_pass(VectorSpectrum& s) {
  const Grid& g = s.grid;
  const std::size_t nx = g.nx(), ny = g.ny();
  for (std::size_t k = 0; k < ny; ++k)
    for (std::size_t m = 1; m <= nx; ++m)
      if (!keeps_mode(g, m, k)) s.sx[k * nx + (m - 1)] = 0.0;
  for (std::size_t m = 1; m <= ny; ++m)
    for (std::size_t j = 0; j < nx; ++j)
      if (!keeps_mode(g, j, m)) s.sy[(m - 1) * nx + j] = 0.0;
}

/// Cosine spectrum of the divergence. Sine mode nx (resp. ny) differentiates
/// to a cosine that vanishes at every cell center and is dropped. The result
/// has zero mean mode by construction.
inline Spectrum divergence_spectrum(const VectorSpectrum& s) {
  const Grid& g = s.grid;
  const std::size_t nx = g.nx(), ny = g.ny();
  Spectrum d(g);
  for (std::size_t k = 0; k < ny; ++k)
    for (std::size_t m = 1; m < nx; ++m)
      d.at(m, k) += static_cast<double>(m) * std::numbers::pi / g.lx() * s.sx[k * nx + (m - 1)];
  for (std::size_t m = 1; m < ny; ++m)
    for (std::size_t j = 0; j < nx; ++j)
      d.at(j, m) += static_cast<double>(m) * std::numbers::pi / g.ly() * s.sy[(m - 1) * nx + j];
  return d;
}

inline ScalarField divergence(const VectorField& w) {
  return dct_inverse(divergence_spectrum(vector_forward(w)));
}

}  // namespace kslab
