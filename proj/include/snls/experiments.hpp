#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <fftw3.h>
#include <sys/utsname.h>

#include <json.hpp>

#include "snls/diagnostics.hpp"
#include "snls/integrators.hpp"
#include "snls/io/config.hpp"
#include "snls/io/files.hpp"
#include "snls/noise.hpp"
#include "snls/truncation.hpp"

#ifndef SNLS_VERSION
#define SNLS_VERSION "unknown"
#endif

namespace snls {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum ExitStatus : int { exit_ok = 0, exit_invalid_config = 2, exit_numeric_failure = 3 };

/// Result of one subcommand: exit status, the manifest that was written, and the human summary.
struct Outcome {
  int status = exit_ok;
  json manifest;
  std::vector<std::string> summary;
};

// ---------------------------------------------------------------------------------------------
// Builders

inline GridPtr build_grid(const RunConfig& cfg) { return Grid::create(cfg.grid.dim, cfg.grid.points, cfg.grid.length); }

inline NoiseModel build_noise(const RunConfig& cfg, const GridPtr& g) {
  const auto& s = cfg.noise;
  const double L = g->length();
  NoiseModel noise(g);
  for (int m = 0; m < s.modes; ++m) {
    if (s.family == "constant") {
      noise.add(coefficients::constant(g, s.amplitude));
    } else if (s.family == "fourier") {
      // cos then sin on each wave; waves cycle through the axes with growing index j.
      const int wave = m / 2;
      std::array<int, 3> k{0, 0, 0};
      const int j = wave / g->dim() + 1;
      k[wave % g->dim()] = j;
      const double phase = m % 2 ? -0.5 * std::numbers::pi : 0.0;
      noise.add(coefficients::fourier_mode(g, s.amplitude * std::pow(j, -s.decay), k, phase));
    } else {
      std::array<double, 3> centre{0, 0, 0};
      for (int axis = 0; axis < g->dim(); ++axis) centre[axis] = L * (m + 0.5) / s.modes;
      if (s.family == "bump")
        noise.add(coefficients::gaussian_bump(g, s.amplitude, centre, s.width * L));
      else
        noise.add(coefficients::smoothed_indicator(g, s.amplitude, centre, s.radius * L, s.edge * L));
    }
  }
  return noise;
}

inline Field build_initial(const RunConfig& cfg, const GridPtr& g) {
  const auto& s = cfg.initial;
  const Grid& grid = *g;
  const double L = grid.length();
  const double a = s.amplitude;
  auto centred_r2 = [&](const std::array<double, 3>& x) {
    double r2 = 0.0;
    for (int axis = 0; axis < grid.dim(); ++axis) {
      const double dx = std::remainder(x[axis] - 0.5 * L, L);
      r2 += dx * dx;
    }
    return r2;
  };
  if (s.profile == "plane_wave") return cplx(a, 0.0) * plane_wave(g, s.wavenumber);
  return Field::from_function(g, [&](const std::array<double, 3>& x) -> cplx {
    if (s.profile == "constant") return {a, 0.0};
    if (s.profile == "gaussian") return {a * std::exp(-0.5 * centred_r2(x) / std::pow(s.width * L, 2)), 0.0};
    if (s.profile == "sech") return {a / std::cosh(std::sqrt(centred_r2(x)) / (s.width * L)), 0.0};
    // low_modes: a (1 + sum_axes 0.5 cos(xi_1 x) + 0.3 i sin(xi_2 x))
    cplx v(1.0, 0.0);
    for (int axis = 0; axis < grid.dim(); ++axis)
      v += cplx(0.5 * std::cos(grid.frequency(1) * x[axis]), 0.3 * std::sin(grid.frequency(2) * x[axis]));
    return a * v;
  });
}

// ---------------------------------------------------------------------------------------------
// Worker pool

inline unsigned resolve_threads(int requested) {
  if (requested > 0) return static_cast<unsigned>(requested);
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(0..count-1) on up to `threads` workers. Results land in index order; if any task
/// throws, the exception of the lowest failing index is rethrown, independent of scheduling.
template <class R>
std::vector<R> parallel_map(std::size_t count, unsigned threads, const std::function<R(std::size_t)>& fn) {
  std::vector<std::optional<R>> results(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        results[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::min<std::size_t>(std::max(1u, threads), std::max<std::size_t>(count, 1));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<R> out;
  out.reserve(count);
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

/// Numeric failure tagged with the path it happened on.
class PathFailure : public NumericFailure {
 public:
  PathFailure(const NumericFailure& e, std::size_t path) : NumericFailure(e.what(), e.step()), path_(path) {}
  std::size_t path() const { return path_; }

 private:
  std::size_t path_;
};

/// One ensemble of coupled paths: path p is driven by IncrementStream(seed, p).
inline std::vector<PathResult> run_ensemble(const Stepper& stepper, const Field& u0, const RunConfig& cfg,
                                            const SampleSchedule& schedule, unsigned threads) {
  const auto steps = stepper.config().steps();
  const auto modes = stepper.noise().modes();
  return parallel_map<PathResult>(static_cast<std::size_t>(cfg.paths), threads, [&](std::size_t p) {
    const IncrementStream stream(cfg.seed, p, stepper.config().dt, modes, steps);
    try {
      return run_path(stepper, u0, stream, schedule);
    } catch (const NumericFailure& e) {
      throw PathFailure(e, p);
    }
  });
}

// ---------------------------------------------------------------------------------------------
// Manifest

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json platform_fingerprint() {
  utsname u{};
  uname(&u);
  return json{{"os", std::string(u.sysname) + " " + u.release},
              {"machine", std::string(u.machine)},
              {"compiler", std::string(__VERSION__)},
              {"fftw", std::string(fftw_version)},
              {"hardware_threads", std::thread::hardware_concurrency()}};
}

inline json summability_json(const NoiseModel& noise) {
  const auto r = noise.summability();
  return json{{"sup_norms", r.sup_norms},
              {"gradient_norms", r.gradient_norms},
              {"sup_squared_sum", r.sup_squared_sum},
              {"total", r.total}};
}

inline json moment_json(const MomentEstimate& m, NormSelector which) {
  return json{{"norm", to_string(which)},     {"order", m.order}, {"level", m.level},
              {"ensemble_size", m.ensemble_size}, {"estimate", m.estimate}, {"lower", m.lower},
              {"upper", m.upper},                 {"half_width", m.half_width}};
}

inline json base_manifest(const std::string& command, const RunConfig& cfg) {
  json m;
  m["command"] = command;
  m["version"] = SNLS_VERSION;
  m["status"] = "ok";
  m["config"] = cfg.echo;
  m["platform"] = platform_fingerprint();
  m["started_utc"] = utc_timestamp();
  json seeds = json::array();
  for (int p = 0; p < cfg.paths; ++p) seeds.push_back({{"path", p}, {"seed", cfg.seed}, {"stream", p}});
  m["path_seeds"] = seeds;
  return m;
}

/// Lists every regular file under `out` except the manifest with its SHA-256, sorted by path.
inline json checksum_listing(const fs::path& out) {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(out)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), out).generic_string();
    if (rel != "manifest.json") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  json listing = json::object();
  for (const auto& f : files) listing[f] = io::sha256_file(out / f);
  return listing;
}

inline void write_manifest(const fs::path& out, json& manifest, std::chrono::steady_clock::time_point start) {
  manifest["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest["files"] = checksum_listing(out);
  std::ofstream f(out / "manifest.json", std::ios::binary | std::ios::trunc);
  f << manifest.dump(2) << '\n';
  if (!f) throw std::runtime_error("cannot write " + (out / "manifest.json").string());
}

inline void record_failure(json& manifest, const PathFailure& e) {
  manifest["status"] = "numeric_failure";
  manifest["failure"] = {{"path", e.path()}, {"step", e.step()}, {"message", e.what()}};
}

inline std::string path_name(std::size_t p, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "path_%04zu%s", p, ext);
  return buf;
}

inline std::string level_dir(int n) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "n_%02d", n);
  return buf;
}

inline void write_path_outputs(const fs::path& dir, const std::vector<PathResult>& results,
                               std::uint64_t snapshot_every) {
  fs::create_directories(dir / "paths");
  for (std::size_t p = 0; p < results.size(); ++p) {
    io::write_timeseries(dir / "paths" / path_name(p, ".csv"), results[p].trajectory);
    if (snapshot_every == 0) continue;
    fs::create_directories(dir / "snapshots");
    const auto& traj = results[p].trajectory;
    for (std::size_t s = 0; s < traj.snapshots.size(); ++s) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "path_%04zu_snap_%04zu.bin", p, s);
      io::write_snapshot(dir / "snapshots" / buf, traj.snapshots[s]);
    }
  }
}

inline std::vector<Trajectory> trajectories(const std::vector<PathResult>& results) {
  std::vector<Trajectory> out;
  out.reserve(results.size());
  for (const auto& r : results) out.push_back(r.trajectory);
  return out;
}

/// Largest |mass(t) - mass(0)| / mass(0) over every sample of every path.
inline double max_relative_mass_drift(const std::vector<PathResult>& results) {
  double worst = 0.0;
  for (const auto& r : results) {
    const double m0 = r.trajectory.records.front().mass;
    if (m0 == 0.0) continue;
    for (const auto& rec : r.trajectory.records) worst = std::max(worst, std::abs(rec.mass - m0) / m0);
  }
  return worst;
}

inline void write_ensemble_summary(const fs::path& path, const std::vector<PathResult>& results) {
  const auto& first = results.front().trajectory;
  std::vector<std::vector<double>> rows;
  const double n = static_cast<double>(results.size());
  for (std::size_t s = 0; s < first.records.size(); ++s) {
    double mass = 0, drift = 0, energy = 0, energy_min = INFINITY, h1 = 0, xg = 0, fn = 0, loss = 0;
    for (const auto& r : results) {
      const auto& rec = r.trajectory.records[s];
      const double m0 = r.trajectory.records.front().mass;
      mass += rec.mass;
      drift = std::max(drift, m0 == 0.0 ? 0.0 : std::abs(rec.mass - m0) / m0);
      energy += rec.energy;
      energy_min = std::min(energy_min, rec.energy);
      h1 += rec.h1_norm;
      xg += rec.xgamma_norm;
      fn += rec.f_norm;
      loss += rec.proj_loss_cum;
    }
    rows.push_back({first.records[s].time, mass / n, drift, energy / n, energy_min, h1 / n, xg / n, fn / n, loss / n});
  }
  io::write_csv(path,
                "t,mass_mean,mass_rel_drift_max,energy_mean,energy_min,h1_norm_mean,xgamma_norm_mean,f_norm_mean,"
                "proj_loss_cum_mean",
                rows);
}

struct AldousRow {
  double lag;
  double median;
  double tail_frequency;
};

inline std::vector<AldousRow> aldous_table(const std::vector<Trajectory>& ens, const RunConfig& cfg) {
  std::vector<AldousRow> rows;
  for (double lag : cfg.aldous_lags) {
    std::vector<double> stats;
    for (const auto& t : ens) stats.push_back(aldous_statistic(t, lag, cfg.schedule.gamma));
    std::sort(stats.begin(), stats.end());
    const auto k = stats.size();
    const double median = k % 2 ? stats[k / 2] : 0.5 * (stats[k / 2 - 1] + stats[k / 2]);
    rows.push_back({lag, median, aldous_tail_frequency(ens, lag, cfg.schedule.gamma, cfg.aldous_eta)});
  }
  return rows;
}

// ---------------------------------------------------------------------------------------------
// run

inline Outcome cmd_run(const RunConfig& cfg, const fs::path& out, unsigned threads) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(out);
  Outcome o;
  o.manifest = base_manifest("run", cfg);
  const auto g = build_grid(cfg);
  const NoiseModel noise = build_noise(cfg, g);
  const Stepper stepper(g, cfg.stepper, noise, cfg.power());
  const Field u0 = build_initial(cfg, g);
  o.manifest["truncation_level"] = cfg.stepper.level.value();
  o.manifest["gamma"] = cfg.schedule.gamma;
  o.manifest["summability"] = summability_json(noise);

  SampleSchedule schedule = cfg.schedule;
  if (!cfg.aldous_lags.empty() && schedule.snapshot_every == 0)
    throw ConfigError("diagnostics.aldous_lags needs sample.snapshot_every > 0");
  try {
    const auto results = run_ensemble(stepper, u0, cfg, schedule, threads);
    write_path_outputs(out, results, schedule.snapshot_every);
    write_ensemble_summary(out / "summary.csv", results);
    const auto ens = trajectories(results);
    const auto moment = moment_estimate(ens, cfg.moment_order, cfg.moment_norm, cfg.seed, cfg.stepper.level.value());
    const double drift = max_relative_mass_drift(results);
    o.manifest["moment"] = moment_json(moment, cfg.moment_norm);
    o.manifest["max_relative_mass_drift"] = drift;
    o.summary.push_back("paths " + std::to_string(cfg.paths) + ", steps " + std::to_string(cfg.stepper.steps()) +
                        ", scheme " + to_string(cfg.stepper.scheme) + ", level " +
                        std::to_string(cfg.stepper.level.value()));
    o.summary.push_back("max relative mass drift " + io::format_double(drift));
    o.summary.push_back("E sup " + std::string(to_string(cfg.moment_norm)) + "^" + io::format_double(cfg.moment_order) +
                        " = " + io::format_double(moment.estimate) + " +- " + io::format_double(moment.half_width));
    if (!cfg.aldous_lags.empty()) {
      const auto rows = aldous_table(ens, cfg);
      std::vector<std::vector<double>> csv;
      std::vector<double> lags, med;
      for (const auto& r : rows) {
        csv.push_back({r.lag, r.median, r.tail_frequency});
        lags.push_back(r.lag);
        med.push_back(r.median);
      }
      io::write_csv(out / "aldous.csv", "lag,median,tail_frequency", csv);
      if (rows.size() >= 2 && std::all_of(med.begin(), med.end(), [](double v) { return v > 0.0; })) {
        const double slope = loglog_slope(lags, med);
        o.manifest["aldous_slope"] = slope;
        o.summary.push_back("aldous log-log slope " + io::format_double(slope));
      }
    }
  } catch (const PathFailure& e) {
    record_failure(o.manifest, e);
    o.status = exit_numeric_failure;
    o.summary.push_back(std::string("numeric failure on path ") + std::to_string(e.path()) + " at step " +
                        std::to_string(e.step()) + ": " + e.what());
  }
  write_manifest(out, o.manifest, start);
  return o;
}

// ---------------------------------------------------------------------------------------------
// sweep-n

struct FlatnessVerdict {
  MannKendallResult trend;
  bool intervals_overlap = true;
  bool energy_nonnegative = true;
  bool no_growth() const { return !trend.increasing_trend; }
};

inline Outcome cmd_sweep_n(const RunConfig& cfg, const fs::path& out, unsigned threads) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(out);
  Outcome o;
  o.manifest = base_manifest("sweep-n", cfg);
  const auto g = build_grid(cfg);
  const NoiseModel noise = build_noise(cfg, g);
  const Field u0 = build_initial(cfg, g);
  const auto nl = cfg.power();
  std::vector<int> levels = cfg.sweep_levels;
  if (levels.empty()) levels.push_back(cfg.stepper.level.value());
  o.manifest["levels"] = levels;
  o.manifest["gamma"] = cfg.schedule.gamma;
  o.manifest["summability"] = summability_json(noise);

  SampleSchedule internal = cfg.schedule;
  internal.snapshot_every = 1;  // cross-level differences at every sample
  std::vector<std::vector<PathResult>> by_level;
  std::vector<MomentEstimate> moments;
  FlatnessVerdict verdict;
  try {
    for (int n : levels) {
      StepperConfig sc = cfg.stepper;
      sc.level = TruncationLevel(n);
      const Stepper stepper(g, sc, noise, nl);
      auto results = run_ensemble(stepper, u0, cfg, internal, threads);
      const fs::path dir = out / level_dir(n);
      // Snapshots on disk follow the configured cadence, not the internal one.
      if (cfg.schedule.snapshot_every > 0) {
        std::vector<PathResult> thinned = results;
        for (auto& r : thinned) {
          Trajectory& t = r.trajectory;
          std::vector<double> times;
          std::vector<Field> snaps;
          for (std::size_t s = 0; s < t.snapshots.size(); s += cfg.schedule.snapshot_every) {
            times.push_back(t.snapshot_times[s]);
            snaps.push_back(t.snapshots[s]);
          }
          t.snapshot_times = std::move(times);
          t.snapshots = std::move(snaps);
        }
        write_path_outputs(dir, thinned, cfg.schedule.snapshot_every);
      } else {
        write_path_outputs(dir, results, 0);
      }
      moments.push_back(moment_estimate(trajectories(results), cfg.moment_order, cfg.moment_norm, cfg.seed, n));
      if (nl && nl->kind() == Focusing::defocusing)
        for (const auto& r : results)
          for (const auto& rec : r.trajectory.records) verdict.energy_nonnegative &= rec.energy >= 0.0;
      by_level.push_back(std::move(results));
    }
  } catch (const PathFailure& e) {
    record_failure(o.manifest, e);
    o.status = exit_numeric_failure;
    o.summary.push_back(std::string("numeric failure on path ") + std::to_string(e.path()) + " at step " +
                        std::to_string(e.step()) + ": " + e.what());
    write_manifest(out, o.manifest, start);
    return o;
  }

  std::vector<std::vector<double>> mrows;
  std::vector<double> estimates;
  json mjson = json::array();
  for (const auto& m : moments) {
    mrows.push_back({static_cast<double>(m.level), m.order, m.estimate, m.lower, m.upper, m.half_width,
                     static_cast<double>(m.ensemble_size)});
    estimates.push_back(m.estimate);
    mjson.push_back(moment_json(m, cfg.moment_norm));
  }
  io::write_csv(out / "moments.csv", "n,order,estimate,lower,upper,half_width,ensemble_size", mrows);

  std::vector<std::vector<double>> crows;
  double max_cross = 0.0;
  for (std::size_t a = 0; a < levels.size(); ++a)
    for (std::size_t b = a + 1; b < levels.size(); ++b)
      for (std::size_t p = 0; p < by_level[a].size(); ++p) {
        const auto& ta = by_level[a][p].trajectory;
        const auto& tb = by_level[b][p].trajectory;
        for (std::size_t s = 0; s < ta.snapshots.size(); ++s) {
          const double d = norm_l2(ta.snapshots[s] - tb.snapshots[s]);
          max_cross = std::max(max_cross, d);
          crows.push_back({static_cast<double>(p), static_cast<double>(levels[a]), static_cast<double>(levels[b]),
                           ta.snapshot_times[s], d});
        }
      }
  io::write_csv(out / "cross_n.csv", "path,n,n_prime,t,l2_diff", crows);

  verdict.trend = mann_kendall(estimates);
  for (std::size_t a = 0; a < moments.size(); ++a)
    for (std::size_t b = a + 1; b < moments.size(); ++b)
      verdict.intervals_overlap &= intervals_overlap(moments[a], moments[b]);
  o.manifest["moments"] = mjson;
  o.manifest["max_cross_level_l2_difference"] = max_cross;
  o.manifest["flatness"] = {{"mann_kendall_s", verdict.trend.s},
                            {"mann_kendall_z", verdict.trend.z},
                            {"mann_kendall_p", verdict.trend.p_value},
                            {"increasing_trend", verdict.trend.increasing_trend},
                            {"intervals_overlap", verdict.intervals_overlap},
                            {"energy_nonnegative", verdict.energy_nonnegative},
                            {"pass", verdict.no_growth() && verdict.intervals_overlap}};
  for (const auto& m : moments)
    o.summary.push_back("n " + std::to_string(m.level) + ": E sup " + to_string(cfg.moment_norm) + "^" +
                        io::format_double(m.order) + " = " + io::format_double(m.estimate) + " [" +
                        io::format_double(m.lower) + ", " + io::format_double(m.upper) + "]");
  o.summary.push_back(std::string("flatness ") + (verdict.no_growth() && verdict.intervals_overlap ? "PASS" : "FAIL") +
                      " (Mann-Kendall p = " + io::format_double(verdict.trend.p_value) +
                      ", S = " + io::format_double(verdict.trend.s) +
                      ", intervals overlap: " + (verdict.intervals_overlap ? "yes" : "no") + ")");
  write_manifest(out, o.manifest, start);
  return o;
}

// ---------------------------------------------------------------------------------------------
// operator-tests

struct OperatorRow {
  int n;
  bool pn_idempotent;
  double sn_l2_norm;
  double bernstein_ratio;  ///< max ||(I+A)^{1/2} P_n f|| / (2^{(n+1)/2} ||f||), must be <= 1
  bool pn_sn_equals_sn;
  double residual_projection;
  double residual_smoothing;
  double sn_lp_norm;
  bool projection_active;

  bool pass() const {
    const bool residual_ok = projection_active || residual_projection == 0.0;
    return pn_idempotent && sn_l2_norm <= 1.0 + 1e-12 && bernstein_ratio <= 1.0 && pn_sn_equals_sn && residual_ok;
  }
};

inline bool bit_equal(const Field& a, const Field& b) {
  return a.size() == b.size() && std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(cplx)) == 0;
}

inline OperatorRow operator_row(const GridPtr& g, int n, int probes, std::uint64_t seed, double p,
                                const Field& smooth_probe) {
  const TruncationLevel level(n);
  const Truncation t(g, level);
  OperatorRow row{n, true, 0.0, 0.0, true, 0.0, 0.0, 0.0, level.projection_active_on(*g)};
  const double bern = std::pow(2.0, 0.5 * (n + 1));
  for (int i = 0; i < probes; ++i) {
    const Field f = forward_transform(probe_field(g, seed, static_cast<std::uint64_t>(i)));
    const Field pf = t.project(f);
    const Field sf = t.smooth(f);
    row.pn_idempotent &= bit_equal(t.project(pf), pf);
    row.pn_sn_equals_sn &= bit_equal(t.project(sf), sf);
    row.bernstein_ratio = std::max(row.bernstein_ratio, sobolev_norm(pf, 0.5) / (bern * norm_l2(f)));
  }
  row.sn_l2_norm = measure_operator_norm([&](const Field& f) { return t.smooth(f); }, g, 2.0, probes, seed);
  row.sn_lp_norm = measure_operator_norm([&](const Field& f) { return t.smooth(f); }, g, p, probes, seed);
  const auto r = convergence_residual(smooth_probe, level, 0.5);
  row.residual_projection = r.projection;
  row.residual_smoothing = r.smoothing;
  return row;
}

inline Outcome cmd_operator_tests(const RunConfig& cfg, const fs::path& out, unsigned threads) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(out);
  Outcome o;
  o.manifest = base_manifest("operator-tests", cfg);
  o.manifest.erase("path_seeds");
  o.manifest["probe_seed"] = cfg.seed;
  const auto g = build_grid(cfg);
  std::vector<int> levels = cfg.operator_levels;
  if (levels.empty())
    for (int n = 0; n <= TruncationLevel::inactive_on(*g).value(); ++n) levels.push_back(n);
  const double p = cfg.nonlinearity.kind == "none" ? 4.0 : cfg.nonlinearity.alpha + 1.0;
  const Field smooth_probe = to_spectral(build_initial(cfg, g));

  const auto rows = parallel_map<OperatorRow>(levels.size(), threads, [&](std::size_t i) {
    return operator_row(g, levels[i], cfg.probes, cfg.seed, p, smooth_probe);
  });

  std::vector<std::vector<double>> csv;
  json table = json::array();
  bool all = true;
  double lp_sup = 0.0;
  for (const auto& r : rows) {
    csv.push_back({static_cast<double>(r.n), r.pn_idempotent ? 1.0 : 0.0, r.sn_l2_norm, r.bernstein_ratio,
                   r.pn_sn_equals_sn ? 1.0 : 0.0, r.residual_projection, r.residual_smoothing, r.sn_lp_norm});
    table.push_back({{"n", r.n},
                     {"pn_idempotent_bit_exact", r.pn_idempotent},
                     {"sn_l2_norm", r.sn_l2_norm},
                     {"bernstein_ratio", r.bernstein_ratio},
                     {"pn_sn_equals_sn_bit_exact", r.pn_sn_equals_sn},
                     {"residual_projection", r.residual_projection},
                     {"residual_smoothing", r.residual_smoothing},
                     {"sn_lp_norm", r.sn_lp_norm},
                     {"projection_active", r.projection_active},
                     {"pass", r.pass()}});
    all &= r.pass();
    lp_sup = std::max(lp_sup, r.sn_lp_norm);
    o.summary.push_back("n " + std::to_string(r.n) + ": " + (r.pass() ? "PASS" : "FAIL") +
                        "  |S_n|_2 = " + io::format_double(r.sn_l2_norm) +
                        "  bernstein = " + io::format_double(r.bernstein_ratio) +
                        "  |S_n|_p = " + io::format_double(r.sn_lp_norm));
  }
  std::vector<double> lp_values;
  for (const auto& r : rows) lp_values.push_back(r.sn_lp_norm);
  const auto trend = mann_kendall(lp_values);
  io::write_csv(out / "operator_tests.csv",
                "n,pn_idempotent,sn_l2_norm,bernstein_ratio,pn_sn_equals_sn,residual_projection,residual_smoothing,"
                "sn_lp_norm",
                csv);
  o.manifest["lp_exponent"] = p;
  o.manifest["probes"] = cfg.probes;
  o.manifest["levels"] = table;
  o.manifest["sn_lp_sup_ratio"] = lp_sup;
  o.manifest["sn_lp_increasing_trend"] = trend.increasing_trend;
  o.manifest["pass"] = all;
  o.summary.push_back(std::string("operator bounds ") + (all ? "PASS" : "FAIL") + ", sup |S_n|_" +
                      io::format_double(p) + " = " + io::format_double(lp_sup));
  write_manifest(out, o.manifest, start);
  return o;
}

// ---------------------------------------------------------------------------------------------
// convergence

struct ConvergenceTable {
  std::vector<double> dts;
  std::vector<double> errors;
  double slope = 0.0;
  std::string reference;
};

/// Strong error at the horizon vs dt = 2^-e for e in cfg.dt_exponents, RMS over paths of the relative
/// L2 error. With F = 0 and one constant coefficient the reference is the exact pathwise solution
/// (increments coupled through a common fine path); with noise off it is a run at dt_min / refinement.
inline ConvergenceTable convergence_table(const RunConfig& cfg, unsigned threads) {
  const auto g = build_grid(cfg);
  const NoiseModel noise = build_noise(cfg, g);
  const auto nl = cfg.power();
  const bool oracle = cfg.noise.family == "constant" && !nl;
  if (!oracle && cfg.noise.family != "none")
    throw ConfigError("convergence needs noise.family = constant with nonlinearity.kind = none, or noise.family = none");
  if (!oracle && !nl) throw ConfigError("convergence with noise off needs a nonlinearity (the free flow is exact)");
  if (cfg.dt_exponents.size() < 2) throw ConfigError("convergence.dt_exponents needs at least two entries");

  ConvergenceTable table;
  table.reference = oracle ? "exact" : "fine";
  const int finest = *std::max_element(cfg.dt_exponents.begin(), cfg.dt_exponents.end());
  const double dt_min = std::ldexp(1.0, -finest);
  const Field u0 = build_initial(cfg, g);
  const double T = cfg.stepper.horizon;

  auto run_at = [&](double dt, std::size_t p, std::uint64_t substeps) {
    StepperConfig sc = cfg.stepper;
    sc.dt = dt;
    const Stepper stepper(g, sc, noise, nl);
    const IncrementStream stream(cfg.seed, p, dt, noise.modes(), sc.steps(), substeps);
    const SampleSchedule schedule{sc.steps(), 0, cfg.schedule.gamma};
    try {
      return run_path(stepper, u0, stream, schedule).final_state;
    } catch (const NumericFailure& e) {
      throw PathFailure(e, p);
    }
  };

  const Field u0n = Stepper(g, cfg.stepper, noise, nl).init_state(u0).field;
  std::vector<Field> references;
  if (!oracle) {
    const double dt_ref = dt_min / cfg.reference_refinement;
    references = parallel_map<Field>(static_cast<std::size_t>(cfg.paths), threads,
                                     [&](std::size_t p) { return run_at(dt_ref, p, 1).field; });
  }

  for (int e : cfg.dt_exponents) {
    const double dt = std::ldexp(1.0, -e);
    const auto substeps = static_cast<std::uint64_t>(std::llround(dt / dt_min));
    const auto errs = parallel_map<double>(static_cast<std::size_t>(cfg.paths), threads, [&](std::size_t p) {
      const SimState s = run_at(dt, p, oracle ? substeps : 1);
      const Field ref =
          oracle ? to_spectral(exact_linear_noise_solution(u0n, T, s.beta[0], cfg.noise.amplitude)) : references[p];
      const double err = norm_l2(s.field - ref) / norm_l2(ref);
      return err * err;
    });
    double sum = 0.0;
    for (double v : errs) sum += v;
    table.dts.push_back(dt);
    table.errors.push_back(std::sqrt(sum / static_cast<double>(errs.size())));
  }
  table.slope = loglog_slope(table.dts, table.errors);
  return table;
}

inline Outcome cmd_convergence(const RunConfig& cfg, const fs::path& out, unsigned threads) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(out);
  Outcome o;
  o.manifest = base_manifest("convergence", cfg);
  try {
    const auto table = convergence_table(cfg, threads);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < table.dts.size(); ++i) rows.push_back({table.dts[i], table.errors[i]});
    io::write_csv(out / "convergence.csv", "dt,error", rows);
    o.manifest["scheme"] = to_string(cfg.stepper.scheme);
    o.manifest["reference"] = table.reference;
    o.manifest["slope"] = table.slope;
    o.manifest["errors"] = table.errors;
    o.manifest["dts"] = table.dts;
    for (std::size_t i = 0; i < table.dts.size(); ++i)
      o.summary.push_back("dt " + io::format_double(table.dts[i]) + "  error " + io::format_double(table.errors[i]));
    o.summary.push_back(std::string("scheme ") + to_string(cfg.stepper.scheme) + ", reference " + table.reference +
                        ", fitted slope " + io::format_double(table.slope));
  } catch (const PathFailure& e) {
    record_failure(o.manifest, e);
    o.status = exit_numeric_failure;
    o.summary.push_back(std::string("numeric failure on path ") + std::to_string(e.path()) + " at step " +
                        std::to_string(e.step()) + ": " + e.what());
  }
  write_manifest(out, o.manifest, start);
  return o;
}

// ---------------------------------------------------------------------------------------------
// report

/// Re-verifies every checksum in <out>/manifest.json and summarizes the run.
inline Outcome cmd_report(const fs::path& out) {
  Outcome o;
  const fs::path mpath = out / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw ConfigError("no manifest at " + mpath.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + mpath.string() + ": " + e.what());
  }
  o.manifest = m;
  const json listed = m.value("files", json::object());
  const json actual = checksum_listing(out);
  std::size_t verified = 0;
  for (const auto& [name, sum] : listed.items()) {
    if (!actual.contains(name))
      o.summary.push_back("missing: " + name);
    else if (actual[name] != sum)
      o.summary.push_back("checksum mismatch: " + name);
    else
      ++verified;
  }
  for (const auto& [name, sum] : actual.items())
    if (!listed.contains(name)) o.summary.push_back("unlisted: " + name);
  const bool ok = verified == listed.size() && verified == actual.size();
  o.summary.insert(o.summary.begin(), "command " + m.value("command", std::string("?")) + ", status " +
                                          m.value("status", std::string("?")) + ", " + std::to_string(verified) + "/" +
                                          std::to_string(listed.size()) + " files verified");
  for (const char* key : {"max_relative_mass_drift", "slope", "aldous_slope", "sn_lp_sup_ratio"})
    if (m.contains(key)) o.summary.push_back(std::string(key) + " " + io::format_double(m[key].get<double>()));
  if (m.contains("flatness")) o.summary.push_back(std::string("flatness pass ") + (m["flatness"]["pass"].get<bool>() ? "true" : "false"));
  o.status = ok ? exit_ok : exit_invalid_config;
  return o;
}

}  // namespace snls
