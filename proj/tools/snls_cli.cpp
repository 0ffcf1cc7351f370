#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "snls/experiments.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  int threads = 0;
  bool quiet = false;
};

void add_common(CLI::App* sub, Options& opt, bool needs_config) {
  auto* c = sub->add_option("--config", opt.config, "INI configuration file");
  if (needs_config) c->required()->check(CLI::ExistingFile);
  auto* o = sub->add_option("--out", opt.out, needs_config ? "output directory (default: run.output)" : "output directory");
  if (!needs_config) o->required();
  sub->add_option("--threads", opt.threads, "worker threads, 0 = hardware concurrency")->check(CLI::NonNegativeNumber);
  sub->add_flag("--quiet", opt.quiet, "print nothing on stdout");
}

int finish(const snls::Outcome& o, const Options& opt) {
  auto& stream = o.status == snls::exit_ok ? std::cout : std::cerr;
  if (!opt.quiet || o.status != snls::exit_ok)
    for (const auto& line : o.summary) stream << line << '\n';
  return o.status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudospectral stochastic NLS simulator with P_n / S_n truncation"};
  app.set_version_flag("--version", SNLS_VERSION);
  app.require_subcommand(1);

  Options opt;
  auto* run = app.add_subcommand("run", "simulate an ensemble at one truncation level");
  auto* sweep = app.add_subcommand("sweep-n", "repeat the ensemble over truncation.levels with shared noise");
  auto* ops = app.add_subcommand("operator-tests", "probe P_n and S_n bounds on random fields");
  auto* conv = app.add_subcommand("convergence", "strong error against an exact or fine-step reference");
  auto* report = app.add_subcommand("report", "verify manifest checksums and summarize an output directory");
  for (auto* sub : {run, sweep, ops, conv}) add_common(sub, opt, true);
  add_common(report, opt, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : snls::exit_invalid_config;
  }

  try {
    if (report->parsed()) return finish(snls::cmd_report(opt.out), opt);
    const snls::RunConfig cfg = snls::parse_config_file(opt.config);
    const std::filesystem::path out = opt.out.empty() ? cfg.output : std::filesystem::path(opt.out);
    if (out.empty()) throw snls::ConfigError("no output directory: pass --out or set run.output");
    const unsigned threads = snls::resolve_threads(opt.threads);
    if (run->parsed()) return finish(snls::cmd_run(cfg, out, threads), opt);
    if (sweep->parsed()) return finish(snls::cmd_sweep_n(cfg, out, threads), opt);
    if (ops->parsed()) return finish(snls::cmd_operator_tests(cfg, out, threads), opt);
    return finish(snls::cmd_convergence(cfg, out, threads), opt);
  } catch (const snls::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return snls::exit_invalid_config;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return snls::exit_invalid_config;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
