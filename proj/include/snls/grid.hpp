#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace snls {

/// Per-mode values of the two symbols used throughout: the Laplacian symbol
/// |xi|^2 (operator A = -Laplacian) and 1 + |xi|^2 (operator S = I + A).
class SymbolTable {
 public:
  SymbolTable() = default;
  explicit SymbolTable(std::vector<double> laplacian) : a_(std::move(laplacian)), s_(a_.size()) {
    for (std::size_t i = 0; i < a_.size(); ++i) s_[i] = 1.0 + a_[i];
  }

  std::span<const double> a() const { return a_; }
  std::span<const double> s() const { return s_; }
  double a(std::size_t mode) const { return a_[mode]; }
  double s(std::size_t mode) const { return s_[mode]; }
  std::size_t size() const { return a_.size(); }

 private:
  std::vector<double> a_;
  std::vector<double> s_;
};

enum class Symbol { A, S };

class Grid;
using GridPtr = std::shared_ptr<const Grid>;

/// Uniform periodic box [0, L)^d with N points per axis.
///
/// Mode storage follows the usual FFT order on every axis: index i < N/2 maps to
/// wavenumber i, otherwise to i - N, so the Nyquist index N/2 carries frequency
/// -pi N / L. Multi-indices are row-major (last axis fastest) in both
/// representations.
class Grid {
 public:
  static GridPtr create(int dim, std::size_t points, double length) {
    return std::shared_ptr<const Grid>(new Grid(dim, points, length));
  }

  int dim() const { return dim_; }
  std::size_t points() const { return points_; }
  double length() const { return length_; }
  std::size_t size() const { return size_; }
  double spacing() const { return length_ / static_cast<double>(points_); }
  double cell_volume() const { return std::pow(spacing(), dim_); }
  double volume() const { return std::pow(length_, dim_); }

  int wavenumber(std::size_t axis_index) const {
    const auto n = static_cast<long>(points_);
    const auto i = static_cast<long>(axis_index);
    return static_cast<int>(i < n / 2 ? i : i - n);
  }
  double frequency(int k) const { return 2.0 * std::numbers::pi * k / length_; }

  std::array<std::size_t, 3> unravel(std::size_t flat) const {
    std::array<std::size_t, 3> idx{0, 0, 0};
    for (int axis = dim_ - 1; axis >= 0; --axis) {
      idx[axis] = flat % points_;
      flat /= points_;
    }
    return idx;
  }

  std::size_t ravel(std::array<std::size_t, 3> idx) const {
    std::size_t flat = 0;
    for (int axis = 0; axis < dim_; ++axis) flat = flat * points_ + idx[axis];
    return flat;
  }

  /// Flat storage index of the mode with integer wavenumbers k (unused axes ignored).
  std::size_t mode_index(std::array<int, 3> k) const {
    std::array<std::size_t, 3> idx{0, 0, 0};
    const auto n = static_cast<long>(points_);
    for (int axis = 0; axis < dim_; ++axis) {
      if (k[axis] < -n / 2 || k[axis] >= n / 2) throw std::out_of_range("wavenumber outside the grid band");
      idx[axis] = static_cast<std::size_t>(k[axis] >= 0 ? k[axis] : k[axis] + n);
    }
    return ravel(idx);
  }

  std::array<int, 3> wavenumbers(std::size_t flat) const {
    const auto idx = unravel(flat);
    std::array<int, 3> k{0, 0, 0};
    for (int axis = 0; axis < dim_; ++axis) k[axis] = wavenumber(idx[axis]);
    return k;
  }

  std::array<double, 3> position(std::size_t flat) const {
    const auto idx = unravel(flat);
    std::array<double, 3> x{0.0, 0.0, 0.0};
    for (int axis = 0; axis < dim_; ++axis) x[axis] = static_cast<double>(idx[axis]) * spacing();
    return x;
  }

  const SymbolTable& symbols() const { return symbols_; }
  std::span<const double> symbol(Symbol which) const { return which == Symbol::A ? symbols_.a() : symbols_.s(); }
  double max_lambda_s() const { return max_lambda_s_; }

  /// Largest |k|_inf over all modes that survive the two-thirds rule.
  int dealias_cutoff() const { return static_cast<int>(points_ / 3); }

  bool operator==(const Grid& other) const {
    return dim_ == other.dim_ && points_ == other.points_ && length_ == other.length_;
  }

 private:
  Grid(int dim, std::size_t points, double length) : dim_(dim), points_(points), length_(length) {
    if (dim < 1 || dim > 3) throw std::invalid_argument("grid dimension must be 1, 2 or 3");
    if (points < 8 || (points & (points - 1)) != 0)
      throw std::invalid_argument("grid points per axis must be a power of two >= 8, got " + std::to_string(points));
    if (!(length > 0.0) || !std::isfinite(length)) throw std::invalid_argument("box length must be positive and finite");

    size_ = 1;
    for (int axis = 0; axis < dim; ++axis) size_ *= points;

    std::vector<double> laplacian(size_);
    for (std::size_t flat = 0; flat < size_; ++flat) {
      const auto k = wavenumbers(flat);
      double sum = 0.0;
      for (int axis = 0; axis < dim; ++axis) {
        const double xi = frequency(k[axis]);
        sum += xi * xi;
      }
      laplacian[flat] = sum;
    }
    symbols_ = SymbolTable(std::move(laplacian));
    max_lambda_s_ = 1.0;
    for (double v : symbols_.s()) max_lambda_s_ = std::max(max_lambda_s_, v);
  }

  int dim_;
  std::size_t points_;
  double length_;
  std::size_t size_ = 0;
  SymbolTable symbols_;
  double max_lambda_s_ = 1.0;
};

}  // namespace snls
