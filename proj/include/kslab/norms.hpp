#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "kslab/grid.hpp"
#include "kslab/spectral.hpp"

namespace kslab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

namespace detail {

inline void check_exponent(double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("norm: exponent p must satisfy p >= 1");
}

// (sum cell_area * |a|^p)^(1/p); +inf exponent gives max |a|.
template <class Magnitude>
double lp_reduce(std::size_t n, double cell_area, double p, Magnitude&& mag) {
  check_exponent(p);
  if (std::isinf(p)) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, mag(i));
    return m;
  }
  double sum = 0.0;
  if (p == 1.0) {
    for (std::size_t i = 0; i < n; ++i) sum += mag(i);
    return cell_area * sum;
  }
  if (p == 2.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const double a = mag(i);
      sum += a * a;
    }
    return std::sqrt(cell_area * sum);
  }
  // scale by the max to keep |a|^p in range for large p
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, mag(i));
  if (m == 0.0) return 0.0;
  const double inv_m = 1.0 / m;
  if (p == std::floor(p) && p <= 8.0) {
    const int k = static_cast<int>(p);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = mag(i) * inv_m;
      double ak = a;
      for (int e = 1; e < k; ++e) ak *= a;
      sum += ak;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) sum += std::pow(mag(i) * inv_m, p);
  }
  return m * std::pow(cell_area * sum, 1.0 / p);
}

}  // namespace detail

/// ||f||_{L^p} by midpoint quadrature; p = kInf gives the max over cell centers.
inline double lp_norm(const ScalarField& f, double p) {
  if (!f.all_finite()) throw std::domain_error("lp_norm: non-finite field");
  return detail::lp_reduce(f.size(), f.grid().cell_area(), p,
                           [&](std::size_t i) { return std::abs(f[i]); });
}

/// L^p norm of the pointwise Euclidean magnitude.
inline double vector_lp_norm(const VectorField& w, double p) {
  if (!w.all_finite()) throw std::domain_error("vector_lp_norm: non-finite field");
  return detail::lp_reduce(w.x.size(), w.grid().cell_area(), p,
                           [&](std::size_t i) { return std::sqrt(w.x[i] * w.x[i] + w.y[i] * w.y[i]); });
}

inline double mean(const ScalarField& f) { return integrate(f) / f.grid().area(); }

/// ||f||_{L^2}^2 from cosine coefficients (exact discrete Parseval).
inline double l2_norm_squared(const Spectrum& s) {
  const Grid& g = s.grid();
  double sum = 0.0;
  for (std::size_t k = 0; k < g.ny(); ++k)
    for (std::size_t j = 0; j < g.nx(); ++j) {
      const double c = s.at(j, k);
      sum += c * c * Spectrum::basis_weight(j, k);
    }
  return g.area() * sum;
}

/// integral of |grad f|^2 for the spectral gradient, computed per mode.
inline double grad_l2_norm_squared(const Spectrum& s) {
  const Grid& g = s.grid();
  double sum = 0.0;
  for (std::size_t k = 0; k < g.ny(); ++k)
    for (std::size_t j = 0; j < g.nx(); ++j) {
      const double c = s.at(j, k);
      sum += s.mu(j, k) * c * c * Spectrum::basis_weight(j, k);
    }
  return g.area() * sum;
}

/// (W^{1,2})* norm via the Riesz map (I - Laplacian)^{-1}:
/// sqrt(|Omega| sum c^2 w / (1 + mu)).
inline double dual_w12_norm(const Spectrum& s) {
  const Grid& g = s.grid();
  double sum = 0.0;
  for (std::size_t k = 0; k < g.ny(); ++k)
    for (std::size_t j = 0; j < g.nx(); ++j) {
      const double c = s.at(j, k);
      sum += c * c * Spectrum::basis_weight(j, k) / (1.0 + s.mu(j, k));
    }
  return std::sqrt(g.area() * sum);
}

inline double dual_w12_norm(const ScalarField& f) {
  if (!f.all_finite()) throw std::domain_error("dual_w12_norm: non-finite field");
  return dual_w12_norm(dct_forward(f));
}

}  // namespace kslab
