#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "snls/field.hpp"
#include "snls/truncation.hpp"

namespace snls {

enum class Focusing { defocusing = +1, focusing = -1 };

/// F(u) = kappa |u|^{alpha-1} u with kappa = +1 (defocusing) or -1 (focusing).
class PowerNonlinearity {
 public:
  PowerNonlinearity(double alpha, Focusing kind, int dim) : alpha_(alpha), kind_(kind), dim_(dim) {
    if (dim < 1 || dim > 3) throw std::invalid_argument("nonlinearity dimension must be 1, 2 or 3");
    if (!admissible(alpha, kind, dim))
      throw std::invalid_argument("exponent alpha = " + std::to_string(alpha) + " is not subcritical for the " +
                                  (kind == Focusing::defocusing ? "defocusing" : "focusing") + " case in d = " +
                                  std::to_string(dim));
  }

  /// Subcritical range: alpha in (1, 1 + 4/(d-2)_+) when defocusing, (1, 1 + 4/d) when focusing.
  static bool admissible(double alpha, Focusing kind, int dim) {
    if (!(alpha > 1.0) || !std::isfinite(alpha)) return false;
    if (kind == Focusing::focusing) return alpha < 1.0 + 4.0 / dim;
    if (dim <= 2) return true;
    return alpha < 1.0 + 4.0 / (dim - 2);
  }

  double alpha() const { return alpha_; }
  Focusing kind() const { return kind_; }
  double kappa() const { return static_cast<double>(static_cast<int>(kind_)); }
  int dim() const { return dim_; }

  /// Dual exponent (alpha+1)/alpha of L^{alpha+1}.
  double dual_exponent() const { return (alpha_ + 1.0) / alpha_; }

  /// |z|^{alpha-1}, with 0 at z = 0.
  double modulus_power(cplx z) const {
    const double r = std::abs(z);
    if (r == 0.0) return 0.0;
    if (alpha_ == 3.0) return r * r;
    return std::exp((alpha_ - 1.0) * std::log(r));
  }

 private:
  double alpha_;
  Focusing kind_;
  int dim_;
};

/// Pointwise F(u); the representation of u is preserved.
inline Field apply_f(const PowerNonlinearity& nl, Field u) {
  const auto rep = u.representation();
  u.to_physical_inplace();
  const double kappa = nl.kappa();
  for (auto& z : u.values()) z *= kappa * nl.modulus_power(z);
  u.set_representation(rep);
  return u;
}

/// F_hat(u) = kappa / (alpha+1) ||u||_{alpha+1}^{alpha+1}
inline double f_hat(const PowerNonlinearity& nl, const Field& u) {
  const Field phys = to_physical(u);
  double sum = 0.0;
  for (const auto& z : phys.values()) sum += nl.modulus_power(z) * std::norm(z);
  return nl.kappa() / (nl.alpha() + 1.0) * sum * phys.grid().cell_volume();
}

/// P_n F(u)
inline Field truncated_f(const PowerNonlinearity& nl, const Truncation& trunc, const Field& u) {
  return trunc.project(apply_f(nl, u));
}

inline Field truncated_f(const PowerNonlinearity& nl, const Field& u, TruncationLevel n) {
  return truncated_f(nl, Truncation(u.grid_ptr(), n), u);
}

/// ||F(u) - F(v)||_{(a+1)/a} / [(||u||_{a+1} + ||v||_{a+1})^{a-1} ||u - v||_{a+1}]
inline double lipschitz_ratio(const PowerNonlinearity& nl, const Field& u, const Field& v) {
  const Field pu = to_physical(u);
  const Field pv = to_physical(v);
  const double p = nl.alpha() + 1.0;
  const double diff = lp_norm(pu - pv, p);
  if (diff == 0.0) throw std::invalid_argument("lipschitz_ratio requires u != v");
  const double num = lp_norm(apply_f(nl, pu) - apply_f(nl, pv), nl.dual_exponent());
  const double scale = std::pow(lp_norm(pu, p) + lp_norm(pv, p), nl.alpha() - 1.0);
  return num / (scale * diff);
}

/// Gagliardo-Nirenberg exponents: beta2 = d(alpha-1)/2, beta1 = alpha+1-beta2.
struct GagliardoNirenbergExponents {
  double beta1;
  double beta2;

  static GagliardoNirenbergExponents of(double alpha, int dim) {
    const double beta2 = dim * (alpha - 1.0) / 2.0;
    return {alpha + 1.0 - beta2, beta2};
  }

  /// beta2 < 2: the H^1 power stays below the quadratic energy term.
  bool energy_subcritical() const { return beta2 < 2.0; }
};

/// alpha = num/den as an exact fraction, for admissibility checks without rounding at the critical exponent.
struct RationalExponent {
  long num;
  long den;

  /// beta2 = d(num-den)/(2 den) < 2, cross-multiplied.
  bool beta2_below_two(int dim) const {
    check();
    return dim * (num - den) < 4 * den;
  }
  /// alpha < 1 + 4/d, cross-multiplied.
  bool below_mass_critical(int dim) const {
    check();
    return dim * num < (dim + 4) * den;
  }

 private:
  void check() const {
    if (den <= 0 || num <= den) throw std::invalid_argument("rational exponent must satisfy num > den > 0");
  }
};

/// ||u||_{a+1}^{a+1} / (||u||_2^{beta1} ||u||_{H^1}^{beta2}), with ||u||_{H^1} = ||(I+A)^{1/2} u||_2.
inline double gagliardo_nirenberg_ratio(double alpha, const Field& u) {
  const auto ex = GagliardoNirenbergExponents::of(alpha, u.grid().dim());
  const Field spec = to_spectral(u);
  double l2 = 0.0, h1 = 0.0;
  const auto lambda = spec.grid().symbols().s();
  for (std::size_t k = 0; k < spec.size(); ++k) {
    l2 += std::norm(spec[k]);
    h1 += lambda[k] * std::norm(spec[k]);
  }
  const double lp = std::pow(lp_norm(u, alpha + 1.0), alpha + 1.0);
  return lp / (std::pow(std::sqrt(l2), ex.beta1) * std::pow(std::sqrt(h1), ex.beta2));
}

}  // namespace snls
