#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "snls/field.hpp"
#include "snls/nonlinearity.hpp"
#include "snls/random.hpp"

namespace snls {

/// Observables of one state at one time.
struct DiagnosticsRecord {
  double time = 0.0;
  double mass = 0.0;
  double energy = 0.0;
  double h1_norm = 0.0;
  double xgamma_norm = 0.0;
  double f_norm = 0.0;  ///< ||F(u)||_{(alpha+1)/alpha}, 0 without nonlinearity
  double proj_loss_cum = 0.0;

  bool finite() const {
    for (double v : {time, mass, energy, h1_norm, xgamma_norm, f_norm, proj_loss_cum})
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline double mass(const Field& u) { return norm_l2_squared(u); }

/// 1/2 ||A^{1/2} u||^2
inline double kinetic_energy(const Field& u) {
  const Field spec = to_spectral(u);
  const auto lambda = spec.grid().symbols().a();
  double sum = 0.0;
  for (std::size_t k = 0; k < spec.size(); ++k) sum += lambda[k] * std::norm(spec[k]);
  return 0.5 * sum;
}

/// E(u) = 1/2 ||A^{1/2} u||^2 + F_hat(u); the potential term is absent without nonlinearity.
inline double energy(const Field& u, const std::optional<PowerNonlinearity>& nl) {
  const double kinetic = kinetic_energy(u);
  return nl ? kinetic + f_hat(*nl, u) : kinetic;
}

/// ||(I+A)^theta u||_2
inline double sobolev_norm(const Field& u, double theta) {
  const Field spec = to_spectral(u);
  const auto lambda = spec.grid().symbols().s();
  double sum = 0.0;
  if (theta == 0.0) {
    for (std::size_t k = 0; k < spec.size(); ++k) sum += std::norm(spec[k]);
  } else {
    for (std::size_t k = 0; k < spec.size(); ++k) sum += std::pow(lambda[k], 2.0 * theta) * std::norm(spec[k]);
  }
  return std::sqrt(sum);
}

/// Smallest admissible X_gamma exponent d(alpha-1)/(4(alpha+1)) plus a 0.02 margin, kept below 1/2.
inline double default_gamma(int dim, double alpha) {
  const double g = dim * (alpha - 1.0) / (4.0 * (alpha + 1.0)) + 0.02;
  return std::min(g, 0.49);
}

inline DiagnosticsRecord compute_record(double time, const Field& u, const std::optional<PowerNonlinearity>& nl,
                                        double gamma, double proj_loss_cum) {
  const Field spec = to_spectral(u);
  const Field phys = to_physical(u);
  const auto lambda = spec.grid().symbols().s();
  DiagnosticsRecord r;
  r.time = time;
  double m = 0.0, kin = 0.0, xg = 0.0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double a2 = std::norm(spec[k]);
    m += a2;
    kin += (lambda[k] - 1.0) * a2;
    xg += std::pow(lambda[k], 2.0 * gamma) * a2;
  }
  r.mass = m;
  r.h1_norm = std::sqrt(m + kin);
  r.xgamma_norm = std::sqrt(xg);
  r.energy = 0.5 * kin;
  if (nl) {
    r.energy += f_hat(*nl, phys);
    r.f_norm = lp_norm(apply_f(*nl, phys), nl->dual_exponent());
  }
  r.proj_loss_cum = proj_loss_cum;
  return r;
}

/// A sampled path: times, records, and optional field snapshots.
struct Trajectory {
  std::vector<double> times;
  std::vector<DiagnosticsRecord> records;
  std::vector<double> snapshot_times;
  std::vector<Field> snapshots;
};

enum class NormSelector { l2, h1, xgamma, mass_plus_energy };

inline double select_norm(const DiagnosticsRecord& r, NormSelector which) {
  switch (which) {
    case NormSelector::l2: return std::sqrt(r.mass);
    case NormSelector::h1: return r.h1_norm;
    case NormSelector::xgamma: return r.xgamma_norm;
    case NormSelector::mass_plus_energy: return r.mass + r.energy;
  }
  return 0.0;
}

/// Estimate of E[sup_t N(u(t))^q] with a percentile-bootstrap half-width.
struct MomentEstimate {
  double order = 0.0;
  int level = -1;
  std::size_t ensemble_size = 0;
  double estimate = 0.0;
  double half_width = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

inline constexpr int kBootstrapResamples = 1000;

inline MomentEstimate moment_estimate(std::span<const Trajectory> ensemble, double q, NormSelector which,
                                      std::uint64_t bootstrap_seed, int level = -1) {
  if (ensemble.empty()) throw std::invalid_argument("moment_estimate needs a nonempty ensemble");
  std::vector<double> values;
  values.reserve(ensemble.size());
  for (const auto& traj : ensemble) {
    if (traj.records.empty()) throw std::invalid_argument("trajectory without samples");
    double sup = -std::numeric_limits<double>::infinity();
    for (const auto& r : traj.records) sup = std::max(sup, select_norm(r, which));
    values.push_back(q == 0.0 ? 1.0 : std::pow(sup, q));
  }
  const auto n = values.size();
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);

  MomentEstimate est{q, level, n, mean, 0.0, mean, mean};
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) return est;

  const CounterRng rng(bootstrap_seed, StreamPurpose::bootstrap, static_cast<std::uint64_t>(level + 1));
  std::vector<double> means(kBootstrapResamples);
  for (int b = 0; b < kBootstrapResamples; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = rng.uniform(static_cast<std::uint64_t>(b) * n + i);
      s += values[std::min(n - 1, static_cast<std::size_t>(u * static_cast<double>(n)))];
    }
    means[b] = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  est.lower = means[static_cast<std::size_t>(0.025 * kBootstrapResamples)];
  est.upper = means[static_cast<std::size_t>(0.975 * kBootstrapResamples) - 1];
  est.half_width = 0.5 * (est.upper - est.lower);
  return est;
}

struct MannKendallResult {
  double s = 0.0;
  double variance = 0.0;
  double z = 0.0;
  double p_value = 1.0;  ///< two-sided
  bool increasing_trend = false;
  bool decreasing_trend = false;
};

/// Mann-Kendall trend test (normal approximation, tie-corrected variance,
/// continuity correction), two-sided at level `significance`.
inline MannKendallResult mann_kendall(std::span<const double> series, double significance = 0.05) {
  MannKendallResult r;
  const auto n = series.size();
  if (n < 2) return r;
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = series[j] - series[i];
      r.s += (d > 0) - (d < 0);
    }
  std::vector<double> sorted(series.begin(), series.end());
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * (t - 1.0) * (2.0 * t + 5.0);
    i = j;
  }
  const double nn = static_cast<double>(n);
  r.variance = (nn * (nn - 1.0) * (2.0 * nn + 5.0) - tie_term) / 18.0;
  if (r.variance <= 0.0) return r;
  if (r.s > 0)
    r.z = (r.s - 1.0) / std::sqrt(r.variance);
  else if (r.s < 0)
    r.z = (r.s + 1.0) / std::sqrt(r.variance);
  r.p_value = std::erfc(std::abs(r.z) / std::sqrt(2.0));
  r.increasing_trend = r.p_value < significance && r.s > 0;
  r.decreasing_trend = r.p_value < significance && r.s < 0;
  return r;
}

inline bool intervals_overlap(const MomentEstimate& a, const MomentEstimate& b) {
  return a.lower <= b.upper && b.lower <= a.upper;
}

/// Pathwise Aldous proxy: sup over snapshot pairs with |t - s| <= lag of ||u(t) - u(s)||_{X_gamma}.
inline double aldous_statistic(const Trajectory& traj, double lag, double gamma) {
  if (!(lag >= 0.0)) throw std::invalid_argument("aldous_statistic requires a nonnegative lag");
  if (traj.snapshots.empty()) throw std::invalid_argument("aldous_statistic needs field snapshots");
  if (lag == 0.0) return 0.0;
  const double eps = 1e-9 * std::max(1.0, lag);
  std::vector<Field> spectral;
  spectral.reserve(traj.snapshots.size());
  for (const auto& f : traj.snapshots) spectral.push_back(to_spectral(f));
  double sup = 0.0;
  for (std::size_t i = 0; i < spectral.size(); ++i)
    for (std::size_t j = i + 1; j < spectral.size(); ++j) {
      if (traj.snapshot_times[j] - traj.snapshot_times[i] > lag + eps) break;
      sup = std::max(sup, sobolev_norm(spectral[j] - spectral[i], gamma));
    }
  return sup;
}

/// Empirical frequency of aldous_statistic >= eta over an ensemble.
inline double aldous_tail_frequency(std::span<const Trajectory> ensemble, double lag, double gamma, double eta) {
  if (ensemble.empty()) throw std::invalid_argument("aldous_tail_frequency needs a nonempty ensemble");
  std::size_t hits = 0;
  for (const auto& traj : ensemble) hits += aldous_statistic(traj, lag, gamma) >= eta;
  return static_cast<double>(hits) / static_cast<double>(ensemble.size());
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope needs matching series of length >= 2");
  double mx = 0, my = 0;
  const auto n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace snls
