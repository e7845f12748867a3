#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kslab {

/// Cell-centered discretization of the rectangle [0,lx] x [0,ly].
///
/// Node (i,j) sits at the cell center ((i+1/2)hx, (j+1/2)hy). Storage is
/// row-major with j (the y index) outermost: index = j*nx + i.
class Grid {
 public:
  Grid(int nx, int ny, double lx, double ly) : nx_(nx), ny_(ny), lx_(lx), ly_(ly) {
    if (nx < 4 || ny < 4)
      throw std::invalid_argument("grid: nx and ny must be >= 4");
    if (nx % 2 != 0 || ny % 2 != 0)
      throw std::invalid_argument("grid: nx and ny must be even (got " + std::to_string(nx) +
                                  " x " + std::to_string(ny) + ")");
    if (!(lx > 0.0) || !(ly > 0.0) || !std::isfinite(lx) || !std::isfinite(ly))
      throw std::invalid_argument("grid: side lengths must be positive and finite");
  }

  std::size_t nx() const { return static_cast<std::size_t>(nx_); }
  std::size_t ny() const { return static_cast<std::size_t>(ny_); }
  double lx() const { return lx_; }
  double ly() const { return ly_; }
  double hx() const { return lx_ / nx_; }
  double hy() const { return ly_ / ny_; }
  double cell_area() const { return hx() * hy(); }
  double area() const { return lx_ * ly_; }
  std::size_t size() const { return nx() * ny(); }

  double x(std::size_t i) const { return (static_cast<double>(i) + 0.5) * hx(); }
  double y(std::size_t j) const { return (static_cast<double>(j) + 0.5) * hy(); }
  std::size_t index(std::size_t i, std::size_t j) const { return j * nx() + i; }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.nx_ == b.nx_ && a.ny_ == b.ny_ && a.lx_ == b.lx_ && a.ly_ == b.ly_;
  }

 private:
  int nx_;
  int ny_;
  double lx_;
  double ly_;
};

inline Grid make_grid(int nx, int ny, double lx, double ly) { return Grid(nx, ny, lx, ly); }

/// Real values at the cell centers of a grid.
class ScalarField {
 public:
  explicit ScalarField(const Grid& grid, double fill = 0.0)
      : grid_(grid), values_(grid.size(), fill) {}
  ScalarField(const Grid& grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size())
      throw std::invalid_argument("field: value count does not match grid size");
  }

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double& operator[](std::size_t n) { return values_[n]; }
  double operator[](std::size_t n) const { return values_[n]; }
  double& operator()(std::size_t i, std::size_t j) { return values_[grid_.index(i, j)]; }
  double operator()(std::size_t i, std::size_t j) const { return values_[grid_.index(i, j)]; }

  bool all_finite() const {
    for (double x : values_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  ScalarField& operator+=(const ScalarField& o) {
    check_same(o);
    for (std::size_t n = 0; n < values_.size(); ++n) values_[n] += o.values_[n];
    return *this;
  }
  ScalarField& operator-=(const ScalarField& o) {
    check_same(o);
    for (std::size_t n = 0; n < values_.size(); ++n) values_[n] -= o.values_[n];
    return *this;
  }
  ScalarField& operator*=(double a) {
    for (double& x : values_) x *= a;
    return *this;
  }
  ScalarField& operator+=(double a) {
    for (double& x : values_) x += a;
    return *this;
  }

  friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
  friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
  friend ScalarField operator*(double s, ScalarField a) { return a *= s; }
  friend ScalarField operator*(ScalarField a, double s) { return a *= s; }

  void check_same(const ScalarField& o) const {
    if (!(grid_ == o.grid_)) throw std::invalid_argument("field: grids differ");
  }

 private:
  Grid grid_;
  std::vector<double> values_;
};

/// Two-component field on the same cell centers as ScalarField.
struct VectorField {
  ScalarField x;
  ScalarField y;

  explicit VectorField(const Grid& grid) : x(grid), y(grid) {}
  VectorField(ScalarField xc, ScalarField yc) : x(std::move(xc)), y(std::move(yc)) { x.check_same(y); }

  const Grid& grid() const { return x.grid(); }
  bool all_finite() const { return x.all_finite() && y.all_finite(); }
};

/// Midpoint quadrature of f over the rectangle.
inline double integrate(const ScalarField& f) {
  double sum = 0.0;
  for (std::size_t n = 0; n < f.size(); ++n) {
    if (!std::isfinite(f[n])) throw std::domain_error("integrate: non-finite value in field");
    sum += f[n];
  }
  return f.grid().cell_area() * sum;
}

/// Evaluates fn(x, y) at every cell center.
inline ScalarField sample(const std::function<double(double, double)>& fn, const Grid& grid) {
  ScalarField f(grid);
  for (std::size_t j = 0; j < grid.ny(); ++j) {
    for (std::size_t i = 0; i < grid.nx(); ++i) {
      const double value = fn(grid.x(i), grid.y(j));
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "sample: non-finite value at node (" << i << ", " << j << ") = (" << grid.x(i) << ", "
            << grid.y(j) << ")";
        throw std::domain_error(msg.str());
      }
      f(i, j) = value;
    }
  }
  return f;
}

}  // namespace kslab
