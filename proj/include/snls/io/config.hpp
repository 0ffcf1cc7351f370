#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "snls/diagnostics.hpp"
#include "snls/integrators.hpp"
#include "snls/noise.hpp"
#include "snls/nonlinearity.hpp"

namespace snls {

/// Invalid or incomplete configuration; maps to exit status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridSpec {
  int dim = 1;
  int points = 128;
  double length = 2.0 * std::numbers::pi;
};

struct NonlinearitySpec {
  std::string kind = "none";  ///< none | defocusing | focusing
  double alpha = 3.0;
};

struct NoiseSpec {
  std::string family = "none";  ///< none | constant | fourier | bump | indicator
  int modes = 0;
  double amplitude = 0.5;
  double decay = 1.0;    ///< fourier: amplitude j^{-decay} on the j-th wave
  double width = 0.1;    ///< bump: width as a fraction of L
  double radius = 0.15;  ///< indicator: radius as a fraction of L
  double edge = 0.05;    ///< indicator: edge width as a fraction of L
};

struct InitialSpec {
  std::string profile = "low_modes";  ///< low_modes | gaussian | sech | plane_wave | constant
  double amplitude = 1.0;
  double width = 0.1;  ///< gaussian / sech: width as a fraction of L
  std::array<int, 3> wavenumber{1, 0, 0};
};

struct RunConfig {
  std::uint64_t seed = 0;
  int paths = 1;
  std::filesystem::path output;

  GridSpec grid;
  NonlinearitySpec nonlinearity;
  NoiseSpec noise;
  InitialSpec initial;

  StepperConfig stepper;
  bool level_inactive = false;  ///< truncation.level = inactive: above the grid's largest lambda_S
  std::vector<int> sweep_levels;

  SampleSchedule schedule;

  double moment_order = 2.0;
  NormSelector moment_norm = NormSelector::h1;
  std::vector<double> aldous_lags;
  double aldous_eta = 0.5;

  std::vector<int> dt_exponents{6, 7, 8, 9, 10};
  int reference_refinement = 32;

  std::vector<int> operator_levels;
  int probes = 100;

  /// Every key as written, "section.key" -> value, for the manifest echo.
  std::map<std::string, std::string> echo;

  std::optional<PowerNonlinearity> power() const {
    if (nonlinearity.kind == "none") return std::nullopt;
    const auto kind = nonlinearity.kind == "focusing" ? Focusing::focusing : Focusing::defocusing;
    return PowerNonlinearity(nonlinearity.alpha, kind, grid.dim);
  }
};

namespace config_detail {

inline const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"run", {"seed", "paths", "output"}},
      {"grid", {"dim", "points", "length"}},
      {"nonlinearity", {"kind", "alpha"}},
      {"noise", {"family", "modes", "amplitude", "decay", "width", "radius", "edge"}},
      {"initial", {"profile", "amplitude", "width", "wavenumber"}},
      {"truncation", {"level", "levels"}},
      {"stepper", {"scheme", "dt", "horizon", "dealias", "cayley_tolerance", "cayley_max_iterations"}},
      {"sample", {"every", "snapshot_every", "gamma"}},
      {"diagnostics", {"moment_order", "moment_norm", "aldous_lags", "aldous_eta"}},
      {"convergence", {"dt_exponents", "reference_refinement"}},
      {"operator_tests", {"levels", "probes"}},
  };
  return keys;
}

template <class T>
T parse_scalar(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (in.fail() || !(in >> std::ws).eof()) throw ConfigError("cannot parse " + key + " = '" + text + "'");
  return value;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError("empty entry in list " + key);
    out.push_back(parse_scalar<T>(key, item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw ConfigError(key + " must be a nonempty comma-separated list");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + " must be true or false, got '" + text + "'");
}

inline Scheme parse_scheme(const std::string& text) {
  if (text == "splitting") return Scheme::splitting;
  if (text == "ito_euler") return Scheme::ito_euler;
  if (text == "drift_midpoint") return Scheme::drift_midpoint;
  throw ConfigError("stepper.scheme must be splitting, ito_euler or drift_midpoint, got '" + text + "'");
}

inline NormSelector parse_norm(const std::string& text) {
  if (text == "l2") return NormSelector::l2;
  if (text == "h1") return NormSelector::h1;
  if (text == "xgamma") return NormSelector::xgamma;
  if (text == "mass_plus_energy") return NormSelector::mass_plus_energy;
  throw ConfigError("diagnostics.moment_norm must be l2, h1, xgamma or mass_plus_energy, got '" + text + "'");
}

}  // namespace config_detail

inline const char* to_string(NormSelector n) {
  switch (n) {
    case NormSelector::l2: return "l2";
    case NormSelector::h1: return "h1";
    case NormSelector::xgamma: return "xgamma";
    case NormSelector::mass_plus_energy: return "mass_plus_energy";
  }
  return "?";
}

/// Parses the sectioned key-value format. Unknown sections or keys, malformed values and a
/// missing run.seed are errors.
inline RunConfig parse_config_text(const std::string& text) {
  namespace pt = boost::property_tree;
  using namespace config_detail;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }

  RunConfig cfg;
  const auto& known = known_keys();
  for (const auto& [section, body] : tree) {
    const auto it = known.find(section);
    if (it == known.end()) {
      if (body.empty()) throw ConfigError("key '" + section + "' outside any section");
      throw ConfigError("unknown config section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw ConfigError("unknown config key " + section + "." + key);
      cfg.echo[section + "." + key] = value.data();
    }
  }

  auto get = [&](const std::string& key) -> std::optional<std::string> {
    const auto it = cfg.echo.find(key);
    if (it == cfg.echo.end()) return std::nullopt;
    return it->second;
  };
  auto num = [&]<class T>(const std::string& key, T& target) {
    if (auto v = get(key)) target = parse_scalar<T>(key, *v);
  };

  const auto seed = get("run.seed");
  if (!seed) throw ConfigError("missing required key run.seed (no implicit entropy)");
  {
    const auto& s = *seed;
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("run.seed must be a nonnegative integer, got '" + s + "'");
    try {
      cfg.seed = std::stoull(s);
    } catch (const std::exception&) {
      throw ConfigError("run.seed out of range: '" + s + "'");
    }
  }
  num("run.paths", cfg.paths);
  if (cfg.paths < 1) throw ConfigError("run.paths must be >= 1");
  if (auto v = get("run.output")) cfg.output = *v;

  num("grid.dim", cfg.grid.dim);
  num("grid.points", cfg.grid.points);
  num("grid.length", cfg.grid.length);

  if (auto v = get("nonlinearity.kind")) cfg.nonlinearity.kind = *v;
  num("nonlinearity.alpha", cfg.nonlinearity.alpha);
  if (cfg.nonlinearity.kind != "none" && cfg.nonlinearity.kind != "defocusing" && cfg.nonlinearity.kind != "focusing")
    throw ConfigError("nonlinearity.kind must be none, defocusing or focusing, got '" + cfg.nonlinearity.kind + "'");

  if (auto v = get("noise.family")) cfg.noise.family = *v;
  num("noise.modes", cfg.noise.modes);
  num("noise.amplitude", cfg.noise.amplitude);
  num("noise.decay", cfg.noise.decay);
  num("noise.width", cfg.noise.width);
  num("noise.radius", cfg.noise.radius);
  num("noise.edge", cfg.noise.edge);
  {
    const auto& f = cfg.noise.family;
    if (f != "none" && f != "constant" && f != "fourier" && f != "bump" && f != "indicator")
      throw ConfigError("noise.family must be none, constant, fourier, bump or indicator, got '" + f + "'");
    if (f == "none") {
      if (get("noise.modes") && cfg.noise.modes != 0) throw ConfigError("noise.modes must be 0 for noise.family = none");
      cfg.noise.modes = 0;
    } else {
      if (!get("noise.modes")) cfg.noise.modes = 1;
      if (cfg.noise.modes < 1) throw ConfigError("noise.modes must be >= 1 for noise.family = " + f);
      if (f == "constant" && cfg.noise.modes != 1) throw ConfigError("noise.modes must be 1 for noise.family = constant");
    }
  }

  if (auto v = get("initial.profile")) cfg.initial.profile = *v;
  num("initial.amplitude", cfg.initial.amplitude);
  num("initial.width", cfg.initial.width);
  if (auto v = get("initial.wavenumber")) {
    const auto k = parse_list<int>("initial.wavenumber", *v);
    if (k.size() > 3) throw ConfigError("initial.wavenumber takes at most 3 components");
    cfg.initial.wavenumber = {0, 0, 0};
    for (std::size_t i = 0; i < k.size(); ++i) cfg.initial.wavenumber[i] = k[i];
  }
  {
    const auto& p = cfg.initial.profile;
    if (p != "low_modes" && p != "gaussian" && p != "sech" && p != "plane_wave" && p != "constant")
      throw ConfigError("initial.profile must be low_modes, gaussian, sech, plane_wave or constant, got '" + p + "'");
  }

  if (auto v = get("stepper.scheme")) cfg.stepper.scheme = parse_scheme(*v);
  num("stepper.dt", cfg.stepper.dt);
  num("stepper.horizon", cfg.stepper.horizon);
  if (auto v = get("stepper.dealias")) cfg.stepper.dealias = parse_bool("stepper.dealias", *v);
  num("stepper.cayley_tolerance", cfg.stepper.cayley_tolerance);
  num("stepper.cayley_max_iterations", cfg.stepper.cayley_max_iterations);

  if (auto v = get("truncation.level")) {
    if (*v == "inactive") {
      cfg.level_inactive = true;
    } else {
      const int n = parse_scalar<int>("truncation.level", *v);
      if (n < 0) throw ConfigError("truncation.level must be >= 0 or 'inactive'");
      cfg.stepper.level = TruncationLevel(n);
    }
  }
  if (auto v = get("truncation.levels")) {
    cfg.sweep_levels = parse_list<int>("truncation.levels", *v);
    for (int n : cfg.sweep_levels)
      if (n < 0) throw ConfigError("truncation.levels entries must be >= 0");
  }

  num("sample.every", cfg.schedule.every);
  num("sample.snapshot_every", cfg.schedule.snapshot_every);
  if (cfg.schedule.every < 1) throw ConfigError("sample.every must be >= 1");
  cfg.schedule.gamma = cfg.nonlinearity.kind == "none" ? 0.25 : default_gamma(cfg.grid.dim, cfg.nonlinearity.alpha);
  num("sample.gamma", cfg.schedule.gamma);
  if (!(cfg.schedule.gamma >= 0.0 && cfg.schedule.gamma < 0.5)) throw ConfigError("sample.gamma must lie in [0, 1/2)");

  num("diagnostics.moment_order", cfg.moment_order);
  if (auto v = get("diagnostics.moment_norm")) cfg.moment_norm = parse_norm(*v);
  if (auto v = get("diagnostics.aldous_lags")) cfg.aldous_lags = parse_list<double>("diagnostics.aldous_lags", *v);
  num("diagnostics.aldous_eta", cfg.aldous_eta);
  for (double lag : cfg.aldous_lags)
    if (!(lag > 0.0)) throw ConfigError("diagnostics.aldous_lags entries must be positive");

  if (auto v = get("convergence.dt_exponents")) cfg.dt_exponents = parse_list<int>("convergence.dt_exponents", *v);
  num("convergence.reference_refinement", cfg.reference_refinement);
  if (cfg.reference_refinement < 2) throw ConfigError("convergence.reference_refinement must be >= 2");

  if (auto v = get("operator_tests.levels")) cfg.operator_levels = parse_list<int>("operator_tests.levels", *v);
  num("operator_tests.probes", cfg.probes);
  if (cfg.probes < 1) throw ConfigError("operator_tests.probes must be >= 1");

  // Cross-field checks reuse the library's own validation and surface it as a config error.
  try {
    const auto grid = Grid::create(cfg.grid.dim, cfg.grid.points, cfg.grid.length);
    if (cfg.level_inactive) cfg.stepper.level = TruncationLevel::inactive_on(*grid);
    (void)cfg.power();
    cfg.stepper.steps();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

inline RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace snls
