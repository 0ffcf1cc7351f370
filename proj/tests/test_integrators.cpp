#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "snls/integrators.hpp"
#include "test_support.hpp"

using namespace snls;
using snls::testing::random_field;
using snls::testing::relative_l2_error;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

StepperConfig config_for(Scheme scheme, double dt, double horizon, int level) {
  StepperConfig c;
  c.scheme = scheme;
  c.dt = dt;
  c.horizon = horizon;
  c.level = TruncationLevel(level);
  return c;
}

NoiseModel constant_noise(const GridPtr& g, double c) { return NoiseModel(g, {coefficients::constant(g, c)}); }

NoiseModel three_modes(const GridPtr& g) {
  NoiseModel noise(g);
  noise.add(coefficients::fourier_mode(g, 0.5, {1, 0, 0}, 0.0));
  noise.add(coefficients::fourier_mode(g, 0.3, {2, 0, 0}, 1.0));
  noise.add(coefficients::gaussian_bump(g, 0.4, {0.25 * g->length(), 0, 0}, 0.1 * g->length()));
  return noise;
}

/// Smooth low-mode initial datum with modes |k| <= 2 on L = 2 pi.
Field low_mode_datum(const GridPtr& g) {
  return Field::from_function(g, [](const std::array<double, 3>& x) {
    return cplx(1.0 + 0.5 * std::cos(x[0]), 0.3 * std::sin(2.0 * x[0]));
  });
}

bool records_bit_equal(const Trajectory& a, const Trajectory& b) {
  if (a.records.size() != b.records.size()) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i)
    if (std::memcmp(&a.records[i], &b.records[i], sizeof(DiagnosticsRecord)) != 0) return false;
  return a.times == b.times;
}

/// Final-time L2 error of a scheme against the constant-noise oracle, RMS over paths.
/// Increments at every dt are sums of one fine path, so all step sizes see the same Brownian motion.
double oracle_rms_error(Scheme scheme, const GridPtr& g, const Field& u0, double c, double dt, double dt_min,
                        int paths, int level) {
  const NoiseModel noise = constant_noise(g, c);
  const Stepper stepper(g, config_for(scheme, dt, 1.0, level), noise, std::nullopt);
  const auto steps = stepper.config().steps();
  const auto sub = static_cast<std::uint64_t>(std::llround(dt / dt_min));
  double sum = 0.0;
  for (int p = 0; p < paths; ++p) {
    const IncrementStream stream(4242, p, dt, 1, steps, sub);
    const auto result = run_path(stepper, u0, stream, SampleSchedule{steps, 0, 0.25});
    const Field exact = exact_linear_noise_solution(u0, 1.0, result.final_state.beta[0], c);
    const double e = norm_l2(result.final_state.field - to_spectral(exact)) / norm_l2(exact);
    sum += e * e;
  }
  return std::sqrt(sum / paths);
}

TEST(StepperConfig, StepCountAndValidation) {
  EXPECT_EQ(config_for(Scheme::splitting, 1e-3, 1.0, 4).steps(), 1000u);
  EXPECT_EQ(config_for(Scheme::splitting, 0.1, 0.7, 4).steps(), 7u);
  EXPECT_THROW(config_for(Scheme::splitting, 0.3, 1.0, 4).steps(), std::invalid_argument);
  EXPECT_THROW(config_for(Scheme::splitting, 0.0, 1.0, 4).steps(), std::invalid_argument);
  auto c = config_for(Scheme::splitting, 0.1, 1.0, 4);
  c.cayley_tolerance = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_STREQ(to_string(Scheme::drift_midpoint), "drift_midpoint");
}

TEST(InitState, SmoothsAndContracts) {
  const auto g = Grid::create(1, 64, kTwoPi);
  const NoiseModel noise(g);
  const Stepper stepper(g, config_for(Scheme::splitting, 0.1, 1.0, 4), noise, std::nullopt);
  const Field band = snls::testing::band_limited_field(g, 16.0, 1);
  EXPECT_LT(relative_l2_error(to_physical(stepper.init_state(band).field), band), 1e-13);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Field u0 = random_field(g, s);
    const SimState st = stepper.init_state(u0);
    EXPECT_TRUE(st.field.is_spectral());
    EXPECT_LE(norm_l2(st.field), norm_l2(u0) * (1 + 1e-14));
    EXPECT_TRUE(stepper.truncation().in_range(st.field));
  }
  EXPECT_EQ(norm_l2(stepper.init_state(Field(g)).field), 0.0);
}

TEST(StepLinear, IdentityPhaseAndGroup) {
  const auto g = Grid::create(2, 32, kTwoPi);
  const NoiseModel noise(g);
  const Stepper stepper(g, config_for(Scheme::splitting, 0.1, 1.0, 6), noise, std::nullopt);
  const Field u = random_field(g, 3);
  EXPECT_LT(relative_l2_error(stepper.step_linear(u, 0.0), u), 1e-14);

  const std::array<int, 3> k{2, -1, 0};
  const Field wave = plane_wave(g, k);
  EXPECT_LT(relative_l2_error(stepper.step_linear(wave, 0.3), std::polar(1.0, -5.0 * 0.3) * wave), 1e-12);

  const Field one = stepper.step_linear(u, 0.37);
  const Field two = stepper.step_linear(stepper.step_linear(u, 0.185), 0.185);
  EXPECT_LT(relative_l2_error(two, one), 1e-12);
  EXPECT_NEAR(norm_l2(one), norm_l2(u), 1e-12 * norm_l2(u));
}

TEST(StepNonlinear, ZeroStepIsProjection) {
  const auto g = Grid::create(1, 64, 5.0);
  const NoiseModel noise(g);
  const Stepper stepper(g, config_for(Scheme::splitting, 0.1, 1.0, 4), noise,
                        PowerNonlinearity(3.0, Focusing::defocusing, 1));
  const Field u = random_field(g, 4);
  EXPECT_LT(relative_l2_error(stepper.step_nonlinear(u, 0.0), project_pn(u, TruncationLevel(4))), 1e-13);
}

TEST(StepNonlinear, ConstantFieldRotates) {
  const auto g = Grid::create(1, 32, 2.0);
  const NoiseModel noise(g);
  for (Focusing kind : {Focusing::defocusing, Focusing::focusing}) {
    const PowerNonlinearity nl(2.5, kind, 1);
    const Stepper stepper(g, config_for(Scheme::splitting, 0.1, 1.0, 20), noise, nl);
    const double r = 1.4, dt = 0.2;
    const Field u = Field::from_function(g, [&](auto) { return cplx(r, 0.0); });
    const Field out = stepper.step_nonlinear(u, dt);
    const cplx expected = r * std::polar(1.0, -nl.kappa() * std::pow(r, 1.5) * dt);
    for (const auto& z : out.values()) EXPECT_NEAR(std::abs(z - expected), 0.0, 1e-13);
  }
}

TEST(StepNonlinear, ModulusPreservedAndLossAccounted) {
  const auto g = Grid::create(1, 128, kTwoPi);
  const NoiseModel noise(g);
  const PowerNonlinearity nl(3.0, Focusing::defocusing, 1);
  const Field u = random_field(g, 5);
  const Stepper open(g, config_for(Scheme::splitting, 0.1, 1.0, 30), noise, nl);
  double loss = -1.0;
  const Field free = open.step_nonlinear(u, 0.05, &loss);
  EXPECT_NEAR(norm_l2(free), norm_l2(u), 1e-12 * norm_l2(u));
  EXPECT_LE(std::abs(loss), 1e-10 * norm_l2_squared(u));

  const Stepper cut(g, config_for(Scheme::splitting, 0.1, 1.0, 5), noise, nl);
  const Field projected = cut.step_nonlinear(forward_transform(u), 0.05, &loss);
  EXPECT_LE(norm_l2(projected), norm_l2(u));
  EXPECT_NEAR(loss, norm_l2_squared(u) - norm_l2_squared(projected), 1e-10 * norm_l2_squared(u));
  EXPECT_TRUE(cut.truncation().in_range(projected));
}

TEST(StepNonlinear, DealiasMaskRemovesUpperThird) {
  const auto g = Grid::create(1, 64, kTwoPi);
  const NoiseModel noise(g);
  auto c = config_for(Scheme::splitting, 0.1, 1.0, 30);
  c.dealias = true;
  const Stepper stepper(g, c, noise, PowerNonlinearity(3.0, Focusing::defocusing, 1));
  const Field out = stepper.step_nonlinear(forward_transform(random_field(g, 6)), 0.1);
  ASSERT_TRUE(out.is_spectral());
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (std::abs(g->wavenumbers(k)[0]) > g->dealias_cutoff()) {
      EXPECT_EQ(out[k], cplx(0.0, 0.0));
    }
  }
}

TEST(Cayley, ZeroIncrementsAreIdentity) {
  const auto g = Grid::create(1, 64, 3.0);
  const NoiseModel noise = three_modes(g);
  const Stepper stepper(g, config_for(Scheme::splitting, 0.01, 1.0, 5), noise, std::nullopt);
  const Field u = stepper.init_state(random_field(g, 7)).field;
  const std::vector<double> zero(3, 0.0);
  EXPECT_EQ(norm_l2(stepper.step_noise_cayley(u, zero) - u), 0.0);
}

TEST(Cayley, ScalarClosedFormForConstantCoefficient) {
  const auto g = Grid::create(1, 64, kTwoPi);
  const double c = 0.9, dbeta = 0.13;
  const NoiseModel noise = constant_noise(g, c);
  const TruncationLevel level(5);
  const Stepper stepper(g, config_for(Scheme::splitting, 0.01, 1.0, level.value()), noise, std::nullopt);
  const Field u = snls::testing::band_limited_spectral(g, level.lower(), 8);
  const std::vector<double> inc{dbeta};
  const cplx factor = cplx(1.0, -0.5 * c * dbeta) / cplx(1.0, 0.5 * c * dbeta);
  EXPECT_NEAR(std::abs(factor), 1.0, 1e-15);
  EXPECT_LT(relative_l2_error(stepper.step_noise_cayley(u, inc), factor * u), 1e-11);
}

TEST(Cayley, UnitaryOverRandomSteps) {
  const auto g = Grid::create(1, 64, 4.0);
  const NoiseModel noise = three_modes(g);
  const Stepper stepper(g, config_for(Scheme::splitting, 1e-3, 1.0, 5), noise, std::nullopt);
  const IncrementStream stream(99, 0, 1e-2, 3, 1000);
  Field u = stepper.init_state(random_field(g, 9)).field;
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const double before = norm_l2(u);
    u = stepper.step_noise_cayley(std::move(u), stream.sample(i), i);
    worst = std::max(worst, std::abs(norm_l2(u) / before - 1.0));
    ASSERT_TRUE(stepper.truncation().in_range(u));
  }
  RecordProperty("cayley_worst_mass_ratio_deviation", std::to_string(worst));
  EXPECT_LE(worst, 1e-11);
}

TEST(Cayley, GuardRejectsLargeGenerator) {
  const auto g = Grid::create(1, 32, 1.0);
  const NoiseModel noise = constant_noise(g, 1.0);
  const Stepper stepper(g, config_for(Scheme::splitting, 0.01, 1.0, 5), noise, std::nullopt);
  const Field u = stepper.init_state(random_field(g, 1)).field;
  try {
    stepper.step_noise_cayley(u, std::vector<double>{2.5}, 17);
    FAIL() << "expected NumericFailure";
  } catch (const NumericFailure& e) {
    EXPECT_EQ(e.step(), 17u);
  }
}

TEST(ItoEuler, ZeroStepIsIdentity) {
  const auto g = Grid::create(1, 32, 2.0);
  const NoiseModel noise = three_modes(g);
  const Stepper stepper(g, config_for(Scheme::ito_euler, 0.01, 1.0, 4), noise,
                        PowerNonlinearity(3.0, Focusing::focusing, 1));
  const Field u = stepper.init_state(random_field(g, 2)).field;
  EXPECT_EQ(norm_l2(stepper.step_ito_euler(u, 0.0, std::vector<double>(3, 0.0)) - u), 0.0);
}

TEST(ItoEuler, TaylorRemainderOnEigenmode) {
  const auto g = Grid::create(1, 64, kTwoPi);
  const NoiseModel noise(g);
  const Stepper stepper(g, config_for(Scheme::ito_euler, 0.01, 1.0, 8), noise, std::nullopt);
  const Field wave = to_spectral(plane_wave(g, {3, 0, 0}));
  const double lambda = 9.0;
  for (double dt : {1e-2, 1e-3, 1e-4}) {
    const double gap = norm_l2(stepper.step_ito_euler(wave, dt, {}) - stepper.step_linear(wave, dt)) / norm_l2(wave);
    EXPECT_LE(gap, 0.5 * lambda * lambda * dt * dt * (1 + 1e-9));
  }
}

TEST(ItoEuler, MeanMassDriftVanishesToFirstOrder) {
  // One Euler step on an eigenmode with e_1 = c: E[|u+|^2 - |u|^2] = (c^4/4 + lambda^2) dt^2 |u|^2.
  const auto g = Grid::create(1, 16, kTwoPi);
  const double c = 1.0, dt = 1e-3;
  const NoiseModel noise = constant_noise(g, c);
  const Stepper stepper(g, config_for(Scheme::ito_euler, dt, 1.0, 4), noise, std::nullopt);
  const Field u = to_spectral(plane_wave(g, {1, 0, 0}));
  const double m0 = mass(u);
  const int trials = 10000;
  const IncrementStream stream(5150, 0, dt, 1, trials);
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < trials; ++i) {
    const double d = (mass(stepper.step_ito_euler(u, dt, stream.sample(i))) - m0) / m0;
    sum += d;
    sum2 += d * d;
  }
  const double mean = sum / trials;
  const double sigma = std::sqrt((sum2 / trials - mean * mean) / trials);
  RecordProperty("ito_mean_mass_drift", std::to_string(mean));
  EXPECT_LE(std::abs(mean - 1.25 * dt * dt), 4.0 * sigma);
  EXPECT_LE(std::abs(mean), 4.0 * sigma + 1.25 * dt * dt);
  // Without the correction the drift would be c^2 dt, far outside the band.
  EXPECT_GT(c * c * dt, 20.0 * sigma);
}

TEST(RunPath, FreeFlowMatchesExactFlow) {
  const auto g = Grid::create(1, 64, kTwoPi);
  const NoiseModel noise(g);
  const Stepper stepper(g, config_for(Scheme::splitting, 0.01, 1.0, 6), noise, std::nullopt);
  const Field u0 = random_field(g, 10);
  const IncrementStream stream(1, 0, 0.01, 0, 100);
  const auto result = run_path(stepper, u0, stream, SampleSchedule{10, 1, 0.25});
  const auto& traj = result.trajectory;
  ASSERT_EQ(traj.times.size(), 11u);
  ASSERT_EQ(traj.snapshots.size(), 11u);
  const Field start = stepper.init_state(u0).field;
  for (std::size_t i = 0; i < traj.snapshots.size(); ++i) {
    const Field exact = exact_linear_noise_solution(start, traj.snapshot_times[i], 0.0, 0.0);
    EXPECT_LE(norm_l2(traj.snapshots[i] - exact), 1e-10 * norm_l2(start));
  }
  EXPECT_EQ(traj.times.front(), 0.0);
  EXPECT_NEAR(traj.times.back(), 1.0, 1e-15);
  for (std::size_t i = 1; i < traj.times.size(); ++i) EXPECT_GT(traj.times[i], traj.times[i - 1]);
  EXPECT_EQ(traj.records.front().mass, mass(start));
}

TEST(RunPath, SplittingConservesMassWithBandLimitedData) {
  const auto g = Grid::create(1, 128, kTwoPi);
  const NoiseModel noise = three_modes(g);
  const int top = TruncationLevel::inactive_on(*g).value();
  for (Scheme scheme : {Scheme::splitting, Scheme::drift_midpoint}) {
    const Stepper stepper(g, config_for(scheme, 1e-3, 1.0, top), noise,
                          PowerNonlinearity(3.0, Focusing::defocusing, 1));
    const IncrementStream stream(7, 0, 1e-3, 3, 1000);
    const auto result = run_path(stepper, low_mode_datum(g), stream, SampleSchedule{50, 0, 0.25});
    const double m0 = result.trajectory.records.front().mass;
    double worst = 0.0;
    for (const auto& r : result.trajectory.records) worst = std::max(worst, std::abs(r.mass - m0) / m0);
    RecordProperty(std::string("mass_drift_") + to_string(scheme), std::to_string(worst));
    EXPECT_LE(worst, 1e-8) << to_string(scheme);
  }
}

TEST(RunPath, SplittingOracleErrorIsFirstOrder) {
  const auto g = Grid::create(1, 32, kTwoPi);
  const Field u0 = low_mode_datum(g);
  std::vector<double> dts, errs;
  for (int j = 6; j <= 10; ++j) {
    dts.push_back(std::ldexp(1.0, -j));
    errs.push_back(oracle_rms_error(Scheme::splitting, g, u0, 1.0, dts.back(), std::ldexp(1.0, -10), 64, 4));
  }
  for (std::size_t i = 1; i < errs.size(); ++i) {
    const double ratio = errs[i - 1] / errs[i];
    EXPECT_NEAR(ratio, 2.0, 0.3) << "dt = " << dts[i];
  }
  EXPECT_LT(errs.back(), 1e-3);
}

TEST(RunPath, ItoEulerOrderOneWhenDriftDominates) {
  const auto g = Grid::create(1, 32, kTwoPi);
  const Field u0 = low_mode_datum(g);
  std::vector<double> dts, errs;
  for (int j = 6; j <= 10; ++j) {
    dts.push_back(std::ldexp(1.0, -j));
    errs.push_back(oracle_rms_error(Scheme::ito_euler, g, u0, 0.1, dts.back(), std::ldexp(1.0, -10), 16, 4));
  }
  const double slope = loglog_slope(dts, errs);
  RecordProperty("ito_euler_slope_small_noise", std::to_string(slope));
  EXPECT_GE(slope, 0.8);
  EXPECT_LE(slope, 1.2);
}

TEST(RunPath, ItoEulerOrderHalfWhenNoiseDominates) {
  // Euler-Maruyama lacks the c^2/2 (dbeta^2 - dt) term, which accumulates like sqrt(dt).
  const auto g = Grid::create(1, 32, kTwoPi);
  const Field u0 = Field::from_function(g, [](auto) { return cplx(1.0, 0.0); });
  std::vector<double> dts, errs;
  for (int j = 6; j <= 10; ++j) {
    dts.push_back(std::ldexp(1.0, -j));
    errs.push_back(oracle_rms_error(Scheme::ito_euler, g, u0, 1.5, dts.back(), std::ldexp(1.0, -10), 32, 4));
  }
  const double slope = loglog_slope(dts, errs);
  RecordProperty("ito_euler_slope_large_noise", std::to_string(slope));
  EXPECT_NEAR(slope, 0.5, 0.15);
}

TEST(RunPath, StrangSplittingSecondOrderWithoutNoise) {
  const auto g = Grid::create(1, 64, kTwoPi);
  const NoiseModel noise(g);
  const PowerNonlinearity nl(3.0, Focusing::defocusing, 1);
  const int top = TruncationLevel::inactive_on(*g).value();
  const Field u0 = low_mode_datum(g);
  auto final_state = [&](double dt) {
    const Stepper stepper(g, config_for(Scheme::splitting, dt, 0.5, top), noise, nl);
    const IncrementStream stream(1, 0, dt, 0, stepper.config().steps());
    return run_path(stepper, u0, stream, SampleSchedule{stepper.config().steps(), 0, 0.25}).final_state.field;
  };
  const double dt = std::ldexp(1.0, -5);
  const Field reference = final_state(dt / 32);
  const double e1 = norm_l2(final_state(dt) - reference);
  const double e2 = norm_l2(final_state(dt / 2) - reference);
  RecordProperty("strang_ratio", std::to_string(e1 / e2));
  EXPECT_NEAR(e1 / e2, 4.0, 0.5);
}

TEST(RunPath, GaugeEquivarianceAllSchemes) {
  const auto g = Grid::create(1, 64, kTwoPi);
  const NoiseModel noise = three_modes(g);
  const PowerNonlinearity nl(3.0, Focusing::focusing, 1);
  const cplx phase = std::polar(1.0, 0.8);
  for (Scheme scheme : {Scheme::splitting, Scheme::ito_euler, Scheme::drift_midpoint}) {
    const Stepper stepper(g, config_for(scheme, 1e-3, 0.1, 5), noise, nl);
    const IncrementStream stream(11, 3, 1e-3, 3, 100);
    const Field u0 = low_mode_datum(g);
    const Field a = run_path(stepper, u0, stream, SampleSchedule{100, 0, 0.25}).final_state.field;
    const Field b = run_path(stepper, phase * u0, stream, SampleSchedule{100, 0, 0.25}).final_state.field;
    EXPECT_LE(norm_l2(b - phase * a), 1e-10 * norm_l2(a)) << to_string(scheme);
  }
}

TEST(RunPath, RangePreservedAndDeterministic) {
  const auto g = Grid::create(2, 16, kTwoPi);
  const NoiseModel noise = three_modes(g);
  const PowerNonlinearity nl(3.0, Focusing::defocusing, 2);
  for (Scheme scheme : {Scheme::splitting, Scheme::ito_euler, Scheme::drift_midpoint}) {
    const Stepper stepper(g, config_for(scheme, 1e-3, 0.05, 4), noise, nl);
    const IncrementStream stream(12, 0, 1e-3, 3, 50);
    SimState state = stepper.init_state(random_field(g, 13));
    for (std::uint64_t i = 0; i < 50; ++i) {
      stepper.advance(state, stream.sample(i));
      ASSERT_TRUE(stepper.truncation().in_range(state.field)) << to_string(scheme) << " step " << i;
    }
    const auto a = run_path(stepper, random_field(g, 13), stream, SampleSchedule{5, 2, 0.3});
    const auto b = run_path(stepper, random_field(g, 13), stream, SampleSchedule{5, 2, 0.3});
    EXPECT_TRUE(records_bit_equal(a.trajectory, b.trajectory)) << to_string(scheme);
    EXPECT_EQ(a.trajectory.snapshots.size(), 6u);
  }
}

TEST(RunPath, RejectsMismatchedStreams) {
  const auto g = Grid::create(1, 32, kTwoPi);
  const NoiseModel noise = three_modes(g);
  const Stepper stepper(g, config_for(Scheme::splitting, 0.01, 1.0, 4), noise, std::nullopt);
  const Field u0 = low_mode_datum(g);
  EXPECT_THROW(run_path(stepper, u0, IncrementStream(1, 0, 0.01, 2, 100), {}), std::invalid_argument);
  EXPECT_THROW(run_path(stepper, u0, IncrementStream(1, 0, 0.01, 3, 99), {}), std::invalid_argument);
  EXPECT_THROW(run_path(stepper, u0, IncrementStream(1, 0, 0.02, 3, 100), {}), std::invalid_argument);
  EXPECT_THROW(run_path(stepper, u0, IncrementStream(1, 0, 0.01, 3, 100), SampleSchedule{0, 0, 0.25}),
               std::invalid_argument);
}

TEST(ExactLinearNoise, Properties) {
  const auto g = Grid::create(1, 64, kTwoPi);
  const Field u0 = random_field(g, 14);
  EXPECT_LT(relative_l2_error(exact_linear_noise_solution(u0, 0.0, 0.0, 1.0), u0), 1e-13);
  const Field u = exact_linear_noise_solution(u0, 0.7, 1.3, 0.6);
  EXPECT_TRUE(u.is_physical());
  EXPECT_NEAR(mass(u), mass(u0), 1e-12 * mass(u0));
  const Field free = exact_linear_noise_solution(u0, 0.7, 0.0, 0.0);
  for (std::size_t j = 0; j < u.size(); ++j) EXPECT_NEAR(std::abs(u[j]), std::abs(free[j]), 1e-12);
}

}  // namespace
