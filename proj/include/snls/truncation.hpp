#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "snls/field.hpp"
#include "snls/random.hpp"

namespace snls {

/// Dyadic truncation level n; thresholds 2^n and 2^{n+1} on the S-symbol axis.
class TruncationLevel {
 public:
  explicit TruncationLevel(int n) : n_(n) {
    if (n < 0) throw std::invalid_argument("truncation level must be nonnegative");
    if (n > 1000) throw std::invalid_argument("truncation level too large");
  }

  int value() const { return n_; }
  double lower() const { return std::ldexp(1.0, n_); }
  double upper() const { return std::ldexp(1.0, n_ + 1); }

  /// S_n differs from the identity on this grid.
  bool smoothing_active_on(const Grid& grid) const { return lower() < grid.max_lambda_s(); }
  /// P_n differs from the identity on this grid.
  bool projection_active_on(const Grid& grid) const { return upper() <= grid.max_lambda_s(); }

  /// Smallest level at which both operators are the identity on the grid.
  static TruncationLevel inactive_on(const Grid& grid) {
    int n = 0;
    while (std::ldexp(1.0, n) <= grid.max_lambda_s()) ++n;
    return TruncationLevel(n);
  }

  bool operator==(const TruncationLevel&) const = default;

 private:
  int n_;
};

/// Smooth Littlewood-Paley profile: 1 below 2^n, 0 from 2^{n+1} on, and the
/// quintic 1 - (6t^5 - 15t^4 + 10t^3), t = lambda / 2^n - 1, in between.
inline double cutoff_s(double lambda, TruncationLevel level) {
  if (!(lambda > 0.0)) throw std::invalid_argument("cutoff_s requires lambda > 0");
  if (lambda < level.lower()) return 1.0;
  if (lambda >= level.upper()) return 0.0;
  const double t = lambda / level.lower() - 1.0;
  return 1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

/// Indicator of (0, 2^{n+1}).
inline double cutoff_p(double lambda, TruncationLevel level) {
  if (!(lambda > 0.0)) throw std::invalid_argument("cutoff_p requires lambda > 0");
  return lambda < level.upper() ? 1.0 : 0.0;
}

/// Mode weights of P_n and S_n on one grid, evaluated once and reused.
class Truncation {
 public:
  Truncation(GridPtr grid, TruncationLevel level) : grid_(std::move(grid)), level_(level) {
    const auto lambda = grid_->symbols().s();
    project_.resize(lambda.size());
    smooth_.resize(lambda.size());
    for (std::size_t k = 0; k < lambda.size(); ++k) {
      project_[k] = cutoff_p(lambda[k], level);
      smooth_[k] = cutoff_s(lambda[k], level);
    }
  }

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  TruncationLevel level() const { return level_; }
  std::span<const double> projection_weights() const { return project_; }
  std::span<const double> smoothing_weights() const { return smooth_; }

  void project_inplace(Field& f) const { apply_inplace(f, project_); }
  void smooth_inplace(Field& f) const { apply_inplace(f, smooth_); }

  Field project(Field f) const {
    project_inplace(f);
    return f;
  }
  Field smooth(Field f) const {
    smooth_inplace(f);
    return f;
  }

  /// True if every coefficient outside the P_n band is exactly zero.
  bool in_range(const Field& f) const {
    const Field spec = to_spectral(f);
    for (std::size_t k = 0; k < spec.size(); ++k)
      if (project_[k] == 0.0 && spec[k] != cplx(0.0, 0.0)) return false;
    return true;
  }

 private:
  static void apply_inplace(Field& f, const std::vector<double>& w) {
    const auto rep = f.representation();
    f.to_spectral_inplace();
    scale_modes_inplace(f, w);
    f.set_representation(rep);
  }

  GridPtr grid_;
  TruncationLevel level_;
  std::vector<double> project_;
  std::vector<double> smooth_;
};

inline Field project_pn(Field f, TruncationLevel n) { return Truncation(f.grid_ptr(), n).project(std::move(f)); }
inline Field smooth_sn(Field f, TruncationLevel n) { return Truncation(f.grid_ptr(), n).smooth(std::move(f)); }

struct ConvergenceResidual {
  double projection;  ///< ||(I+A)^theta (P_n f - f)||_2
  double smoothing;   ///< ||(I+A)^theta (S_n f - f)||_2
};

inline ConvergenceResidual convergence_residual(const Field& f, TruncationLevel n, double theta) {
  if (!(theta >= 0.0)) throw std::invalid_argument("convergence_residual requires theta >= 0");
  const Field spec = to_spectral(f);
  const auto lambda = spec.grid().symbols().s();
  double p_sum = 0.0, s_sum = 0.0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double weight = std::pow(lambda[k], 2.0 * theta) * std::norm(spec[k]);
    const double dp = cutoff_p(lambda[k], n) - 1.0;
    const double ds = cutoff_s(lambda[k], n) - 1.0;
    p_sum += dp * dp * weight;
    s_sum += ds * ds * weight;
  }
  return {std::sqrt(p_sum), std::sqrt(s_sum)};
}

/// Random probe number `trial`: white noise, a plane wave or a periodized
/// Gaussian bump, cycling in that order.
inline Field probe_field(const GridPtr& grid, std::uint64_t seed, std::uint64_t trial) {
  const CounterRng rng(seed, StreamPurpose::probes, trial);
  const auto& g = *grid;
  switch (trial % 3) {
    case 0: {
      Field f(grid);
      for (std::size_t j = 0; j < f.size(); ++j) {
        const auto [re, im] = rng.normal_pair(j);
        f[j] = cplx(re, im);
      }
      return f;
    }
    case 1: {
      std::array<int, 3> k{0, 0, 0};
      const int half = static_cast<int>(g.points() / 2);
      for (int axis = 0; axis < g.dim(); ++axis) {
        const double u = rng.uniform(static_cast<std::uint64_t>(axis));
        k[axis] = std::min(half - 1, static_cast<int>(std::floor(u * g.points())) - half);
      }
      const double amplitude = 0.5 + rng.uniform(7);
      return cplx(amplitude, 0.0) * plane_wave(grid, k);
    }
    default: {
      std::array<double, 3> centre{0, 0, 0};
      for (int axis = 0; axis < g.dim(); ++axis) centre[axis] = rng.uniform(static_cast<std::uint64_t>(axis)) * g.length();
      const double width = g.length() * (0.02 + 0.2 * rng.uniform(5));
      const double phase_k = std::floor(4.0 * rng.uniform(6));
      return Field::from_function(grid, [&](const std::array<double, 3>& x) {
        double r2 = 0.0;
        for (int axis = 0; axis < g.dim(); ++axis) {
          double dx = std::remainder(x[axis] - centre[axis], g.length());
          r2 += dx * dx;
        }
        const double phase = g.frequency(static_cast<int>(phase_k)) * x[0];
        return std::exp(-0.5 * r2 / (width * width)) * cplx(std::cos(phase), std::sin(phase));
      });
    }
  }
}

/// Empirical lower bound for the L^p operator norm of `op`: the largest ratio
/// ||op f||_p / ||f||_p over `trials` random probes.
inline double measure_operator_norm(const std::function<Field(const Field&)>& op, const GridPtr& grid, double p,
                                    int trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("measure_operator_norm requires at least one trial");
  double best = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Field f = probe_field(grid, seed, static_cast<std::uint64_t>(t));
    const double denom = lp_norm(f, p);
    if (denom == 0.0) continue;
    best = std::max(best, lp_norm(op(f), p) / denom);
  }
  return best;
}

}  // namespace snls
