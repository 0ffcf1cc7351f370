#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "snls/diagnostics.hpp"
#include "snls/field.hpp"
#include "snls/noise.hpp"
#include "snls/nonlinearity.hpp"
#include "snls/truncation.hpp"

namespace snls {

enum class Scheme { splitting, ito_euler, drift_midpoint };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::splitting: return "splitting";
    case Scheme::ito_euler: return "ito_euler";
    case Scheme::drift_midpoint: return "drift_midpoint";
  }
  return "?";
}

/// Raised when a step cannot be completed; carries the failing step index.
class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(const std::string& what, std::uint64_t step) : std::runtime_error(what), step_(step) {}
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

struct StepperConfig {
  Scheme scheme = Scheme::splitting;
  double dt = 1e-3;
  double horizon = 1.0;
  TruncationLevel level{6};
  bool dealias = false;
  double cayley_tolerance = 1e-12;
  int cayley_max_iterations = 50;

  /// Number of steps T / dt; throws unless T / dt is an integer (to 1e-9 relative).
  std::uint64_t steps() const {
    validate();
    const double ratio = horizon / dt;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
      throw std::invalid_argument("horizon / dt must be an integer");
    return static_cast<std::uint64_t>(rounded);
  }

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("horizon must be positive");
    if (!(cayley_tolerance > 0.0)) throw std::invalid_argument("cayley tolerance must be positive");
    if (cayley_max_iterations < 1) throw std::invalid_argument("cayley max iterations must be >= 1");
  }
};

/// u_n(t) kept in spectral representation inside range(P_n).
struct SimState {
  double time = 0.0;
  std::uint64_t step = 0;
  Field field;
  std::vector<double> beta;
  double proj_loss_cum = 0.0;
};

/// Observation cadence, decoupled from dt.
struct SampleSchedule {
  std::uint64_t every = 1;           ///< record diagnostics every k steps (and at the final step)
  std::uint64_t snapshot_every = 0;  ///< keep a field snapshot every k-th sample; 0 = none
  double gamma = 0.25;               ///< X_gamma exponent for the diagnostics record
};

/// Time stepping for one (grid, truncation level, noise, nonlinearity) combination.
/// Holds precomputed mode tables; immutable after construction and shareable.
class Stepper {
 public:
  Stepper(GridPtr grid, StepperConfig config, const NoiseModel& noise, std::optional<PowerNonlinearity> nl)
      : grid_(std::move(grid)), config_(config), noise_(&noise), nl_(nl), trunc_(grid_, config.level) {
    config_.validate();
    if (!(noise.grid() == *grid_)) throw std::invalid_argument("noise model lives on a different grid");
    if (nl_ && nl_->dim() != grid_->dim()) throw std::invalid_argument("nonlinearity dimension does not match grid");
    const auto w = trunc_.projection_weights();
    nonlinear_weights_.assign(w.begin(), w.end());
    if (config_.dealias) {
      const int cutoff = grid_->dealias_cutoff();
      for (std::size_t k = 0; k < nonlinear_weights_.size(); ++k) {
        const auto kv = grid_->wavenumbers(k);
        for (int axis = 0; axis < grid_->dim(); ++axis)
          if (std::abs(kv[axis]) > cutoff) nonlinear_weights_[k] = 0.0;
      }
    }
  }

  const StepperConfig& config() const { return config_; }
  const Truncation& truncation() const { return trunc_; }
  const NoiseModel& noise() const { return *noise_; }
  const std::optional<PowerNonlinearity>& nonlinearity() const { return nl_; }

  /// u_n(0) = S_n u0
  SimState init_state(const Field& u0) const {
    if (!u0.is_finite()) throw std::domain_error("initial field is not finite");
    SimState s;
    s.field = trunc_.smooth(to_spectral(u0));
    s.beta.assign(noise_->modes(), 0.0);
    return s;
  }

  /// Exact free flow exp(-i A dt).
  Field step_linear(Field u, double dt) const {
    const auto rep = u.representation();
    u.to_spectral_inplace();
    const auto lambda = grid_->symbols().a();
    auto v = u.values();
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double phase = -lambda[k] * dt;
      v[k] *= cplx(std::cos(phase), std::sin(phase));
    }
    u.set_representation(rep);
    return u;
  }

  /// Exact pointwise flow of du/dt = -i F(u), then P_n (and the two-thirds mask if enabled).
  /// `loss` receives the mass removed by the projection.
  Field step_nonlinear(Field u, double dt, double* loss = nullptr) const {
    const auto rep = u.representation();
    u.to_physical_inplace();
    if (nl_ && dt != 0.0) {
      const double kappa = nl_->kappa();
      for (auto& z : u.values()) {
        const double phase = -kappa * nl_->modulus_power(z) * dt;
        z *= cplx(std::cos(phase), std::sin(phase));
      }
    }
    u.forward_inplace();
    const double before = loss ? norm_l2_squared(u) : 0.0;
    scale_modes_inplace(u, nonlinear_weights_);
    if (loss) *loss = before - norm_l2_squared(u);
    u.set_representation(rep);
    return u;
  }

  /// Applies G w = S_n(g . S_n w) with g = sum_m dbeta_m e_m.
  Field apply_generator(const std::vector<double>& g, Field w) const {
    trunc_.smooth_inplace(w);
    w = multiply_pointwise(std::move(w), g);
    trunc_.smooth_inplace(w);
    return w;
  }

  /// Cayley step (I + iG/2) u+ = (I - iG/2) u solved by fixed-point iteration.
  Field step_noise_cayley(Field u, std::span<const double> increments, std::uint64_t step = 0) const {
    if (noise_->modes() == 0) return u;
    const auto rep = u.representation();
    u.to_spectral_inplace();
    const std::vector<double> g = noise_->combine(increments);
    double g_sup = 0.0;
    for (double v : g) g_sup = std::max(g_sup, std::abs(v));
    if (g_sup == 0.0) {
      u.set_representation(rep);
      return u;
    }
    if (!(0.5 * g_sup < 1.0))
      throw NumericFailure("Cayley step guard: |sum dbeta_m e_m|_inf / 2 = " + std::to_string(0.5 * g_sup) +
                               " >= 1; reduce dt",
                           step);

    const double scale = std::max(norm_l2(u), std::numeric_limits<double>::min());
    const cplx half_i(0.0, 0.5);
    Field v = u;
    for (int it = 0; it < config_.cayley_max_iterations; ++it) {
      Field next = u;
      next.axpy(-half_i, apply_generator(g, u + v));
      const double change = norm_l2(next - v);
      v = std::move(next);
      if (change <= config_.cayley_tolerance * scale) {
        v.set_representation(rep);
        return v;
      }
    }
    throw NumericFailure("Cayley fixed-point iteration did not converge within " +
                             std::to_string(config_.cayley_max_iterations) + " iterations; reduce dt",
                         step);
  }

  /// One Euler-Maruyama step of the truncated Ito equation.
  Field step_ito_euler(Field u, double dt, std::span<const double> increments) const {
    const auto rep = u.representation();
    u.to_spectral_inplace();
    Field out = u;
    const cplx minus_i(0.0, -1.0);

    Field au = u;
    scale_modes_inplace(au, grid_->symbols().a());
    out.axpy(minus_i * dt, au);

    if (nl_) out.axpy(minus_i * dt, truncated_f(*nl_, trunc_, u));

    for (std::size_t m = 0; m < noise_->modes(); ++m) {
      Field once = apply_truncated_b(*noise_, trunc_, u, m);
      out.axpy(-0.5 * dt, apply_truncated_b(*noise_, trunc_, once, m));
      out.axpy(minus_i * increments[m], once);
    }
    out.set_representation(rep);
    return out;
  }

  /// Implicit midpoint for du/dt = -iAu - iP_nF(u) over dt, with the linear part solved exactly in
  /// the midpoint equation and the nonlinear part by fixed-point iteration.
  Field step_drift_midpoint(Field u, double dt, std::uint64_t step = 0) const {
    const auto rep = u.representation();
    u.to_spectral_inplace();
    const auto lambda = grid_->symbols().a();
    std::vector<cplx> resolvent(lambda.size());
    for (std::size_t k = 0; k < lambda.size(); ++k) resolvent[k] = 1.0 / cplx(1.0, 0.5 * dt * lambda[k]);

    auto solve = [&](const Field& rhs) {
      Field m = rhs;
      auto v = m.values();
      for (std::size_t k = 0; k < v.size(); ++k) v[k] *= resolvent[k];
      return m;
    };

    Field mid = solve(u);
    if (nl_) {
      const double scale = std::max(norm_l2(u), std::numeric_limits<double>::min());
      bool converged = false;
      for (int it = 0; it < config_.cayley_max_iterations; ++it) {
        Field rhs = u;
        rhs.axpy(cplx(0.0, -0.5 * dt), truncated_f(*nl_, trunc_, mid));
        Field next = solve(rhs);
        const double change = norm_l2(next - mid);
        mid = std::move(next);
        if (change <= config_.cayley_tolerance * scale) {
          converged = true;
          break;
        }
      }
      if (!converged) throw NumericFailure("implicit midpoint iteration did not converge; reduce dt", step);
    }
    Field out = 2.0 * mid;
    out -= u;
    out.set_representation(rep);
    return out;
  }

  /// Advances the state by one step of the configured scheme.
  void advance(SimState& state, std::span<const double> increments) const {
    const double dt = config_.dt;
    switch (config_.scheme) {
      case Scheme::splitting: {
        double loss = 0.0;
        Field u = step_linear(std::move(state.field), 0.5 * dt);
        u = step_nonlinear(std::move(u), dt, &loss);
        u = step_noise_cayley(std::move(u), increments, state.step);
        state.field = step_linear(std::move(u), 0.5 * dt);
        state.proj_loss_cum += loss;
        break;
      }
      case Scheme::ito_euler:
        state.field = step_ito_euler(std::move(state.field), dt, increments);
        break;
      case Scheme::drift_midpoint: {
        Field u = step_drift_midpoint(std::move(state.field), 0.5 * dt, state.step);
        u = step_noise_cayley(std::move(u), increments, state.step);
        state.field = step_drift_midpoint(std::move(u), 0.5 * dt, state.step);
        break;
      }
    }
    for (std::size_t m = 0; m < state.beta.size(); ++m) state.beta[m] += increments[m];
    ++state.step;
    state.time = static_cast<double>(state.step) * dt;
    if (!state.field.is_finite()) throw NumericFailure("state became non-finite", state.step);
  }

 private:
  GridPtr grid_;
  StepperConfig config_;
  const NoiseModel* noise_;
  std::optional<PowerNonlinearity> nl_;
  Truncation trunc_;
  std::vector<double> nonlinear_weights_;
};

struct PathResult {
  Trajectory trajectory;
  SimState final_state;
};

/// Integrates one path from S_n u0 to the horizon, sampling per schedule.
inline PathResult run_path(const Stepper& stepper, const Field& u0, const IncrementStream& stream,
                           const SampleSchedule& schedule) {
  const auto steps = stepper.config().steps();
  if (stream.modes() != stepper.noise().modes()) throw std::invalid_argument("increment stream has the wrong mode count");
  if (stream.horizon() < steps) throw std::invalid_argument("increment stream shorter than the run");
  if (std::abs(stream.dt() - stepper.config().dt) > 1e-15 * stepper.config().dt)
    throw std::invalid_argument("increment stream dt differs from stepper dt");
  if (schedule.every == 0) throw std::invalid_argument("sample cadence must be >= 1");

  PathResult result;
  SimState& state = result.final_state;
  state = stepper.init_state(u0);
  Trajectory& traj = result.trajectory;
  std::uint64_t samples = 0;

  auto sample = [&] {
    traj.times.push_back(state.time);
    traj.records.push_back(compute_record(state.time, state.field, stepper.nonlinearity(), schedule.gamma,
                                          state.proj_loss_cum));
    if (schedule.snapshot_every > 0 && samples % schedule.snapshot_every == 0) {
      traj.snapshot_times.push_back(state.time);
      traj.snapshots.push_back(state.field);
    }
    ++samples;
  };

  sample();
  std::vector<double> inc(stream.modes());
  for (std::uint64_t i = 0; i < steps; ++i) {
    stream.sample_into(i, inc);
    stepper.advance(state, inc);
    if (state.step % schedule.every == 0 || state.step == steps) sample();
  }
  return result;
}

/// exp(-i t A) exp(-i c beta) u0: the pathwise solution for F = 0 and e_1 = c.
inline Field exact_linear_noise_solution(const Field& u0, double t, double beta, double c) {
  Field u = to_spectral(u0);
  const auto lambda = u.grid().symbols().a();
  auto v = u.values();
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double phase = -lambda[k] * t - c * beta;
    v[k] *= cplx(std::cos(phase), std::sin(phase));
  }
  return in_representation(std::move(u), u0.representation());
}

}  // namespace snls
