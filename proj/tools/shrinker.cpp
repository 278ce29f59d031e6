// shrinker: verify | spectrum | propagate | compare
#include "shrinker/config.hpp"
#include "shrinker/report.hpp"
#include "shrinker/workflows.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Flags {
  std::string config;
  std::map<std::string, std::string> values;  // "section.key" -> value
  std::vector<std::string> epsilon;
  std::vector<std::string> suite;
};

// One option per key; only flags actually given end up in `values`.
void add_run_options(CLI::App* sub, Flags& fl, shrinker::Command cmd)
{
  sub->add_option("--config", fl.config, "key = value config file with [sections]");
  auto opt = [&](const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(flag, [&fl, key](const std::string& v) { fl.values[key] = v; }, help);
  };
  opt("--model", "model.kind", "gaussian | cylinder");
  opt("--dim", "model.n", "dimension n");
  opt("--k", "model.k", "sphere dimension of the cylinder");
  opt("--resolution", "grid.resolution", "cells per Euclidean axis (>= 16)");
  opt("--truncation-radius", "grid.truncation_radius", "R_max in b units (>= 4)");
  opt("--stencil-order", "grid.stencil_order", "2 or 4");
  opt("--angular-resolution", "grid.angular_resolution", "cells around the azimuth (cylinder)");
  opt("--closure", "grid.closure", "dirichlet | natural");
  opt("--seed", "run.seed", "random seed");
  opt("--output", "run.output_dir", "output directory");
  opt("--jobs", "run.jobs", "worker threads for independent checks or sweep points");
  opt("--eigs", cmd == shrinker::Command::Propagate ? "propagate.eigen_count" : "spectrum.count", "number of eigenpairs");
  opt("--r", "propagate.r", "ball radius r of the approximate symmetry");
  sub->add_option("--epsilon", fl.epsilon, "perturbation sizes (comma separated or repeated)")->delimiter(',');
  sub->add_option("--suite", fl.suite, "verify checks, or all")->delimiter(',');
}

std::string join(const std::vector<std::string>& v)
{
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

int run_command(shrinker::Command cmd, const Flags& fl)
{
  using namespace shrinker;
  RunConfig cfg;
  try {
    if (!fl.config.empty()) parse_config_file(fl.config, cfg);
    cfg.command = cmd;
    for (const auto& [key, value] : fl.values) set_config_value(cfg, key, value);
    if (!fl.epsilon.empty()) set_config_value(cfg, "propagate.epsilon", join(fl.epsilon));
    if (!fl.suite.empty()) set_config_value(cfg, "verify.suite", join(fl.suite));
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return run(cfg);
}

int run_compare(const std::string& a, const std::string& b, const std::string& out)
{
  using namespace shrinker;
  try {
    const ConvergenceTable t = compare_runs(read_json(a), read_json(b));
    print_table(std::cout, t);
    if (!out.empty()) write_json(out, to_json(t));
    return t.any_flagged() ? 1 : 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Weighted operator workbench for model gradient shrinking Ricci solitons"};
  app.require_subcommand(1);

  Flags verify_flags, spectrum_flags, propagate_flags;
  auto* verify = app.add_subcommand("verify", "identity, dichotomy and structure checks");
  add_run_options(verify, verify_flags, shrinker::Command::Verify);
  auto* spectrum = app.add_subcommand("spectrum", "lowest eigenpairs of P and their checks");
  add_run_options(spectrum, spectrum_flags, shrinker::Command::Spectrum);
  auto* propagate = app.add_subcommand("propagate", "extend an approximate Killing field to a global eigenfield");
  add_run_options(propagate, propagate_flags, shrinker::Command::Propagate);

  std::string report_a, report_b, table_out;
  auto* compare = app.add_subcommand("compare", "convergence table between two reports");
  compare->add_option("report_a", report_a, "first report.json")->required();
  compare->add_option("report_b", report_b, "second report.json")->required();
  compare->add_option("--output", table_out, "write the table as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*verify) return run_command(shrinker::Command::Verify, verify_flags);
  if (*spectrum) return run_command(shrinker::Command::Spectrum, spectrum_flags);
  if (*propagate) return run_command(shrinker::Command::Propagate, propagate_flags);
  return run_compare(report_a, report_b, table_out);
}
