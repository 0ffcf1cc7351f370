#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "snls/fft.hpp"
#include "snls/grid.hpp"

namespace snls {

using cplx = std::complex<double>;

enum class Representation { physical, spectral };

/// Complex amplitudes on a grid, either as point values or as mode coefficients.
///
/// Spectral coefficients use the unitary normalization
///   c_k = L^{d/2} / N^d * sum_j u_j exp(-i xi_k . x_j),
/// so that sum_k |c_k|^2 equals the quadrature sum (L/N)^d sum_j |u_j|^2 exactly
/// (Parseval with unit constant). A unit-modulus plane wave has coefficient sqrt(V).
class Field {
 public:
  Field() = default;
  explicit Field(GridPtr grid, Representation rep = Representation::physical)
      : grid_(std::move(grid)), data_(grid_->size()), rep_(rep) {}
  Field(GridPtr grid, std::vector<cplx> values, Representation rep)
      : grid_(std::move(grid)), data_(std::move(values)), rep_(rep) {
    if (data_.size() != grid_->size()) throw std::invalid_argument("field size does not match grid");
  }

  /// Samples fn(x) at every grid point.
  template <class Fn>
  static Field from_function(GridPtr grid, Fn&& fn) {
    Field f(grid, Representation::physical);
    for (std::size_t j = 0; j < f.size(); ++j) f.data_[j] = cplx(fn(grid->position(j)));
    return f;
  }

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  Representation representation() const { return rep_; }
  bool is_physical() const { return rep_ == Representation::physical; }
  bool is_spectral() const { return rep_ == Representation::spectral; }
  std::size_t size() const { return data_.size(); }

  std::span<cplx> values() { return data_; }
  std::span<const cplx> values() const { return data_; }
  cplx& operator[](std::size_t i) { return data_[i]; }
  const cplx& operator[](std::size_t i) const { return data_[i]; }

  bool is_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](const cplx& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); });
  }

  Field& operator+=(const Field& other) {
    check_compatible(other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }
  Field& operator-=(const Field& other) {
    check_compatible(other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
  }
  Field& operator*=(cplx s) {
    for (auto& z : data_) z *= s;
    return *this;
  }

  /// this += s * other
  Field& axpy(cplx s, const Field& other) {
    check_compatible(other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
    return *this;
  }

  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator*(cplx s, Field a) { return a *= s; }

  void forward_inplace() {
    if (rep_ != Representation::physical) throw std::logic_error("forward transform needs a physical field");
    if (!is_finite()) throw std::domain_error("non-finite value in field");
    const auto& g = *grid_;
    detail::dft_inplace(g.dim(), g.points(), FFTW_FORWARD, data_.data());
    const double scale = std::pow(g.length(), 0.5 * g.dim()) / static_cast<double>(g.size());
    for (auto& z : data_) z *= scale;
    rep_ = Representation::spectral;
  }

  void inverse_inplace() {
    if (rep_ != Representation::spectral) throw std::logic_error("inverse transform needs a spectral field");
    if (!is_finite()) throw std::domain_error("non-finite value in field");
    const auto& g = *grid_;
    detail::dft_inplace(g.dim(), g.points(), FFTW_BACKWARD, data_.data());
    const double scale = std::pow(g.length(), -0.5 * g.dim());
    for (auto& z : data_) z *= scale;
    rep_ = Representation::physical;
  }

  void to_spectral_inplace() {
    if (rep_ == Representation::physical) forward_inplace();
  }
  void to_physical_inplace() {
    if (rep_ == Representation::spectral) inverse_inplace();
  }
  void set_representation(Representation rep) {
    if (rep == Representation::spectral)
      to_spectral_inplace();
    else
      to_physical_inplace();
  }

 private:
  void check_compatible(const Field& other) const {
    if (!(*grid_ == *other.grid_)) throw std::invalid_argument("fields live on different grids");
    if (rep_ != other.rep_) throw std::invalid_argument("fields have different representations");
  }

  GridPtr grid_;
  std::vector<cplx> data_;
  Representation rep_ = Representation::physical;
};

inline Field forward_transform(Field f) {
  f.forward_inplace();
  return f;
}

inline Field inverse_transform(Field f) {
  f.inverse_inplace();
  return f;
}

inline Field to_spectral(Field f) {
  f.to_spectral_inplace();
  return f;
}

inline Field to_physical(Field f) {
  f.to_physical_inplace();
  return f;
}

inline Field in_representation(Field f, Representation rep) {
  f.set_representation(rep);
  return f;
}

/// <f, g> = integral conj(f) g, by quadrature or by the spectral sum.
inline cplx inner(const Field& f, const Field& g) {
  if (!(f.grid() == g.grid())) throw std::invalid_argument("fields live on different grids");
  if (f.representation() != g.representation()) return inner(f, in_representation(g, f.representation()));
  cplx sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) sum += std::conj(f[i]) * g[i];
  return f.is_physical() ? sum * f.grid().cell_volume() : sum;
}

inline double norm_l2_squared(const Field& f) {
  double sum = 0.0;
  for (const auto& z : f.values()) sum += std::norm(z);
  return f.is_physical() ? sum * f.grid().cell_volume() : sum;
}

inline double norm_l2(const Field& f) { return std::sqrt(norm_l2_squared(f)); }

/// Quadrature L^p norm; p = infinity gives the max modulus.
inline double lp_norm(const Field& f, double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("lp_norm requires p >= 1");
  if (f.is_spectral()) return lp_norm(to_physical(f), p);
  if (std::isinf(p)) {
    double m = 0.0;
    for (const auto& z : f.values()) m = std::max(m, std::abs(z));
    return m;
  }
  double sum = 0.0;
  if (p == 2.0) {
    for (const auto& z : f.values()) sum += std::norm(z);
  } else {
    for (const auto& z : f.values()) sum += std::pow(std::abs(z), p);
  }
  return std::pow(sum * f.grid().cell_volume(), 1.0 / p);
}

/// Scales mode k by weights[k]. A zero weight writes an exact zero so that
/// projections are bit-exact.
inline void scale_modes_inplace(Field& f, std::span<const double> weights) {
  if (!f.is_spectral()) throw std::logic_error("mode scaling needs a spectral field");
  auto v = f.values();
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = weights[k] == 0.0 ? cplx(0.0, 0.0) : v[k] * weights[k];
}

/// Evaluates g on the realized symbol values; throws if any value is not finite.
template <class Fn>
std::vector<double> multiplier_weights(const Grid& grid, Fn&& g, Symbol which) {
  const auto lambda = grid.symbol(which);
  std::vector<double> w(lambda.size());
  for (std::size_t k = 0; k < lambda.size(); ++k) {
    w[k] = static_cast<double>(g(lambda[k]));
    if (!std::isfinite(w[k])) throw std::domain_error("multiplier is not finite on the realized symbol range");
  }
  return w;
}

/// Applies g(lambda(xi)) as a Fourier multiplier; the representation of f is preserved.
template <class Fn>
Field apply_multiplier(Field f, Fn&& g, Symbol which) {
  const auto w = multiplier_weights(f.grid(), std::forward<Fn>(g), which);
  const auto rep = f.representation();
  f.to_spectral_inplace();
  scale_modes_inplace(f, w);
  f.set_representation(rep);
  return f;
}

/// Unit-modulus plane wave exp(i xi_k . x) for integer wavenumbers k.
inline Field plane_wave(GridPtr grid, std::array<int, 3> k) {
  const auto& g = *grid;
  return Field::from_function(grid, [&](const std::array<double, 3>& x) {
    double phase = 0.0;
    for (int axis = 0; axis < g.dim(); ++axis) phase += g.frequency(k[axis]) * x[axis];
    return cplx(std::cos(phase), std::sin(phase));
  });
}

}  // namespace snls
