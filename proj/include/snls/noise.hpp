#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "snls/field.hpp"
#include "snls/random.hpp"
#include "snls/truncation.hpp"

namespace snls {

/// Real coefficient function e_m of the multiplication operator B_m u = e_m u.
class NoiseCoefficient {
 public:
  NoiseCoefficient(GridPtr grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_->size()) throw std::invalid_argument("coefficient size does not match grid");
    for (double v : values_)
      if (!std::isfinite(v)) throw std::domain_error("noise coefficient has a non-finite value");
    squared_.resize(values_.size());
    for (std::size_t j = 0; j < values_.size(); ++j) squared_[j] = values_[j] * values_[j];
  }

  template <class Fn>
  static NoiseCoefficient from_function(GridPtr grid, Fn&& fn) {
    std::vector<double> v(grid->size());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = fn(grid->position(j));
    return NoiseCoefficient(std::move(grid), std::move(v));
  }

  const Grid& grid() const { return *grid_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> squared() const { return squared_; }

  double sup_norm() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  /// ||grad e||_2 computed spectrally; a grid proxy for the Sobolev part of the coefficient class.
  double gradient_norm() const {
    Field f(grid_);
    for (std::size_t j = 0; j < f.size(); ++j) f[j] = values_[j];
    f.forward_inplace();
    double sum = 0.0;
    const auto lambda = grid_->symbols().a();
    for (std::size_t k = 0; k < f.size(); ++k) sum += lambda[k] * std::norm(f[k]);
    return std::sqrt(sum);
  }

 private:
  GridPtr grid_;
  std::vector<double> values_;
  std::vector<double> squared_;
};

namespace coefficients {

inline NoiseCoefficient constant(GridPtr grid, double c) {
  return NoiseCoefficient(grid, std::vector<double>(grid->size(), c));
}

/// amplitude * cos(xi_k . x + phase)
inline NoiseCoefficient fourier_mode(GridPtr grid, double amplitude, std::array<int, 3> k, double phase) {
  const Grid& g = *grid;
  return NoiseCoefficient::from_function(grid, [&](const std::array<double, 3>& x) {
    double arg = phase;
    for (int axis = 0; axis < g.dim(); ++axis) arg += g.frequency(k[axis]) * x[axis];
    return amplitude * std::cos(arg);
  });
}

/// Periodized Gaussian bump (minimum-image distance).
inline NoiseCoefficient gaussian_bump(GridPtr grid, double amplitude, std::array<double, 3> centre, double width) {
  if (!(width > 0.0)) throw std::invalid_argument("bump width must be positive");
  const Grid& g = *grid;
  return NoiseCoefficient::from_function(grid, [&](const std::array<double, 3>& x) {
    double r2 = 0.0;
    for (int axis = 0; axis < g.dim(); ++axis) {
      const double dx = std::remainder(x[axis] - centre[axis], g.length());
      r2 += dx * dx;
    }
    return amplitude * std::exp(-0.5 * r2 / (width * width));
  });
}

/// Indicator of the ball of given radius, smoothed by a tanh edge of width `edge`.
inline NoiseCoefficient smoothed_indicator(GridPtr grid, double amplitude, std::array<double, 3> centre, double radius,
                                           double edge) {
  if (!(edge > 0.0) || !(radius > 0.0)) throw std::invalid_argument("indicator radius and edge must be positive");
  const Grid& g = *grid;
  return NoiseCoefficient::from_function(grid, [&](const std::array<double, 3>& x) {
    double r2 = 0.0;
    for (int axis = 0; axis < g.dim(); ++axis) {
      const double dx = std::remainder(x[axis] - centre[axis], g.length());
      r2 += dx * dx;
    }
    return amplitude * 0.5 * (1.0 - std::tanh((std::sqrt(r2) - radius) / edge));
  });
}

}  // namespace coefficients

struct SummabilityReport {
  std::vector<double> sup_norms;
  std::vector<double> gradient_norms;
  double total = 0.0;  ///< sum_m (||e_m||_inf^2 + ||grad e_m||_2^2)
  double sup_squared_sum = 0.0;
};

/// Finitely many real coefficients e_1..e_M together with sum_m e_m^2.
class NoiseModel {
 public:
  explicit NoiseModel(GridPtr grid) : grid_(std::move(grid)), sum_squares_(grid_->size(), 0.0) {}
  NoiseModel(GridPtr grid, std::vector<NoiseCoefficient> coefficients) : NoiseModel(std::move(grid)) {
    for (auto& c : coefficients) add(std::move(c));
  }

  void add(NoiseCoefficient c) {
    if (!(c.grid() == *grid_)) throw std::invalid_argument("coefficient grid does not match the noise model");
    const auto sq = c.squared();
    for (std::size_t j = 0; j < sq.size(); ++j) sum_squares_[j] += sq[j];
    coefficients_.push_back(std::move(c));
  }

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::size_t modes() const { return coefficients_.size(); }
  const NoiseCoefficient& coefficient(std::size_t m) const {
    if (m >= coefficients_.size())
      throw std::out_of_range("noise mode " + std::to_string(m) + " out of range (" +
                              std::to_string(coefficients_.size()) + " modes)");
    return coefficients_[m];
  }
  std::span<const double> sum_squares() const { return sum_squares_; }

  /// sum_m weights[m] e_m, pointwise.
  std::vector<double> combine(std::span<const double> weights) const {
    if (weights.size() != coefficients_.size()) throw std::invalid_argument("one weight per noise mode expected");
    std::vector<double> out(grid_->size(), 0.0);
    for (std::size_t m = 0; m < coefficients_.size(); ++m) {
      const auto e = coefficients_[m].values();
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += weights[m] * e[j];
    }
    return out;
  }

  SummabilityReport summability() const {
    SummabilityReport r;
    for (const auto& c : coefficients_) {
      r.sup_norms.push_back(c.sup_norm());
      r.gradient_norms.push_back(c.gradient_norm());
      r.sup_squared_sum += r.sup_norms.back() * r.sup_norms.back();
      r.total += r.sup_norms.back() * r.sup_norms.back() + r.gradient_norms.back() * r.gradient_norms.back();
    }
    return r;
  }

 private:
  GridPtr grid_;
  std::vector<NoiseCoefficient> coefficients_;
  std::vector<double> sum_squares_;
};

/// Pointwise product with a real function; the representation of f is preserved.
inline Field multiply_pointwise(Field f, std::span<const double> weights) {
  const auto rep = f.representation();
  f.to_physical_inplace();
  auto v = f.values();
  for (std::size_t j = 0; j < v.size(); ++j) v[j] *= weights[j];
  f.set_representation(rep);
  return f;
}

inline Field apply_b(const NoiseModel& noise, Field f, std::size_t m) {
  return multiply_pointwise(std::move(f), noise.coefficient(m).values());
}

/// S_n (e_m . S_n f)
inline Field apply_truncated_b(const NoiseModel& noise, const Truncation& trunc, Field f, std::size_t m) {
  const auto e = noise.coefficient(m).values();
  trunc.smooth_inplace(f);
  f = multiply_pointwise(std::move(f), e);
  trunc.smooth_inplace(f);
  return f;
}

inline Field apply_truncated_b(const NoiseModel& noise, Field f, std::size_t m, TruncationLevel n) {
  const Truncation trunc(f.grid_ptr(), n);
  return apply_truncated_b(noise, trunc, std::move(f), m);
}

/// Stratonovich-to-Ito correction -1/2 sum_m e_m^2 f.
inline Field mu(const NoiseModel& noise, Field f) {
  const auto rep = f.representation();
  f.to_physical_inplace();
  const auto sq = noise.sum_squares();
  auto v = f.values();
  for (std::size_t j = 0; j < v.size(); ++j) v[j] *= -0.5 * sq[j];
  f.set_representation(rep);
  return f;
}

/// Truncated correction -1/2 sum_m (S_n B_m S_n)^2 f.
inline Field mu_n(const NoiseModel& noise, const Truncation& trunc, const Field& f) {
  Field out(f.grid_ptr(), f.representation());
  for (std::size_t m = 0; m < noise.modes(); ++m) {
    Field once = apply_truncated_b(noise, trunc, f, m);
    out.axpy(-0.5, apply_truncated_b(noise, trunc, std::move(once), m));
  }
  return out;
}

inline Field mu_n(const NoiseModel& noise, const Field& f, TruncationLevel n) {
  return mu_n(noise, Truncation(f.grid_ptr(), n), f);
}

/// Brownian increments for one path: step i yields M independent N(0, dt) draws.
/// Draws depend only on (seed, path, step, mode). With substeps = k each increment is the sum of
/// k draws at dt/k, so streams with different k over the same fine grid share one Brownian path.
class IncrementStream {
 public:
  IncrementStream(std::uint64_t seed, std::uint64_t path, double dt, std::size_t modes, std::uint64_t horizon,
                  std::uint64_t substeps = 1)
      : rng_(seed, StreamPurpose::increments, path),
        seed_(seed),
        path_(path),
        dt_(dt),
        modes_(modes),
        horizon_(horizon),
        substeps_(substeps) {
    if (!(dt >= 0.0) || !std::isfinite(dt)) throw std::invalid_argument("increment step size must be nonnegative");
    if (substeps == 0) throw std::invalid_argument("substeps must be >= 1");
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t path() const { return path_; }
  double dt() const { return dt_; }
  std::size_t modes() const { return modes_; }
  std::uint64_t horizon() const { return horizon_; }
  std::uint64_t substeps() const { return substeps_; }

  std::vector<double> sample(std::uint64_t step) const {
    std::vector<double> out(modes_);
    sample_into(step, out);
    return out;
  }

  void sample_into(std::uint64_t step, std::span<double> out) const {
    if (step >= horizon_)
      throw std::out_of_range("increment stream exhausted at step " + std::to_string(step) + " (horizon " +
                              std::to_string(horizon_) + ")");
    const double sd = std::sqrt(dt_ / static_cast<double>(substeps_));
    std::fill(out.begin(), out.end(), 0.0);
    for (std::uint64_t sub = 0; sub < substeps_; ++sub) {
      const std::uint64_t fine = step * substeps_ + sub;
      for (std::size_t m = 0; m < modes_; m += 2) {
        const auto [z0, z1] = rng_.normal_pair(fine, static_cast<std::uint32_t>(m / 2));
        out[m] += sd * z0;
        if (m + 1 < modes_) out[m + 1] += sd * z1;
      }
    }
  }

 private:
  CounterRng rng_;
  std::uint64_t seed_;
  std::uint64_t path_;
  double dt_;
  std::size_t modes_;
  std::uint64_t horizon_;
  std::uint64_t substeps_;
};

}  // namespace snls
