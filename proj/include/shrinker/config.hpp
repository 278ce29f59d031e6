// Run configuration: a flat key-value file with [sections], command-line
// overrides through the same key table, and validation against the module
// preconditions before anything is allocated.
#pragma once

#include "shrinker/discrete_field.hpp"
#include "shrinker/model_geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace shrinker {

enum class Command { Verify, Spectrum, Propagate };

inline std::string to_string(Command c)
{
  switch (c) {
    case Command::Verify: return "verify";
    case Command::Spectrum: return "spectrum";
    case Command::Propagate: return "propagate";
  }
  return "unknown";
}

/// Thrown for anything that should end the run with exit status 2.  `line`
/// is 0 when the problem is not tied to a config file line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message, int line = 0, const std::string& source = "")
      : std::runtime_error(format(field, message, line, source)), line(line), field(std::move(field))
  {
  }
  int line;
  std::string field;

 private:
  static std::string format(const std::string& field, const std::string& message, int line, const std::string& source)
  {
    std::string s;
    if (line > 0) s += (source.empty() ? std::string("config") : source) + ":" + std::to_string(line) + ": ";
    if (!field.empty()) s += "field '" + field + "': ";
    return s + message;
  }
};

inline const std::vector<std::string>& verify_suite_names()
{
  static const std::vector<std::string> names{"soliton",     "adjointness",   "identities", "dichotomy",
                                              "harmonicity", "bochner",       "interpolation", "cao_zhou"};
  return names;
}

struct ModelSpec {
  ModelKind kind = ModelKind::Gaussian;
  int n = 2;
  int k = 2;  // ignored for the Gaussian
};

struct VerifyBlock {
  std::vector<std::string> suite{"all"};
  double bump_radius = 0.0;  // 0 -> 0.4 truncation_radius
  double identity_tolerance = 1e-2;
  int adjoint_pairs = 10;
  int sample_points = 100;
};

struct SpectrumBlock {
  int count = 4;
  double tolerance = 1e-10;
  double check_tolerance = 1e-2;
  double block_tolerance = 1e-3;  // eigenvalues within this of a block's first member join it
};

struct PropagateBlock {
  std::string field = "rotation";
  double r = 5.0;
  std::vector<double> epsilon{1e-3};
  double radius_step = 0.0;  // 0 -> three grid spacings
  int eigen_count = 8;
  double fit_window = 1.8;   // growth fit over b in (r, fit_window * r)
  double fit_tolerance = 0.5;
};

struct RunConfig {
  Command command = Command::Verify;
  ModelSpec model;
  int resolution = 64;
  std::optional<double> truncation_radius;  // unset -> 8, or 2r + 2 for propagate
  int stencil_order = 2;
  int angular_resolution = 0;
  Closure closure = Closure::Dirichlet;
  std::size_t max_nodes = 4'000'000;
  VerifyBlock verify;
  SpectrumBlock spectrum;
  PropagateBlock propagate;
  unsigned seed = 1;
  std::string output_dir = "shrinker_out";
  int jobs = 1;

  double resolved_truncation_radius() const
  {
    if (truncation_radius) return *truncation_radius;
    return command == Command::Propagate ? 2.0 * propagate.r + 2.0 : 8.0;
  }

  GridOptions grid_options() const
  {
    GridOptions o;
    o.resolution = resolution;
    o.truncation_radius = resolved_truncation_radius();
    o.stencil_order = stencil_order;
    o.angular_resolution = angular_resolution;
    o.max_nodes = max_nodes;
    o.closure = closure;
    return o;
  }

  ModelShrinker make() const { return make_model(model.kind, model.n, model.kind == ModelKind::Cylinder ? model.k : 0); }

  std::vector<std::string> resolved_suite() const
  {
    for (const std::string& s : verify.suite)
      if (s == "all") return verify_suite_names();
    return verify.suite;
  }
};

namespace config_detail {

inline std::string trim(const std::string& s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v)
{
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline long long to_integer(const std::string& v)
{
  long long x = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, x);
  if (r.ec != std::errc() || r.ptr != end) throw std::invalid_argument("expected an integer, got '" + v + "'");
  return x;
}

inline int to_int(const std::string& v)
{
  const long long x = to_integer(v);
  if (x < -2147483647LL || x > 2147483647LL) throw std::invalid_argument("integer out of range: '" + v + "'");
  return static_cast<int>(x);
}

inline double to_double(const std::string& v)
{
  double x = 0.0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, x);
  if (r.ec != std::errc() || r.ptr != end || !std::isfinite(x))
    throw std::invalid_argument("expected a finite number, got '" + v + "'");
  return x;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

inline const std::map<std::string, Setter>& keys()
{
  static const std::map<std::string, Setter> table{
      {"run.command",
       [](RunConfig& c, const std::string& v) {
         if (v == "verify") c.command = Command::Verify;
         else if (v == "spectrum") c.command = Command::Spectrum;
         else if (v == "propagate") c.command = Command::Propagate;
         else throw std::invalid_argument("unknown command '" + v + "' (verify, spectrum, propagate)");
       }},
      {"run.seed",
       [](RunConfig& c, const std::string& v) {
         const long long s = to_integer(v);
         if (s < 0 || s > 4294967295LL) throw std::invalid_argument("seed must be in [0, 2^32)");
         c.seed = static_cast<unsigned>(s);
       }},
      {"run.output_dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
      {"run.jobs", [](RunConfig& c, const std::string& v) { c.jobs = to_int(v); }},
      {"model.kind",
       [](RunConfig& c, const std::string& v) {
         if (v == "gaussian" || v == "Gaussian") c.model.kind = ModelKind::Gaussian;
         else if (v == "cylinder" || v == "Cylinder") c.model.kind = ModelKind::Cylinder;
         else throw std::invalid_argument("unknown model '" + v + "' (gaussian, cylinder)");
       }},
      {"model.n", [](RunConfig& c, const std::string& v) { c.model.n = to_int(v); }},
      {"model.k", [](RunConfig& c, const std::string& v) { c.model.k = to_int(v); }},
      {"grid.resolution", [](RunConfig& c, const std::string& v) { c.resolution = to_int(v); }},
      {"grid.truncation_radius", [](RunConfig& c, const std::string& v) { c.truncation_radius = to_double(v); }},
      {"grid.stencil_order", [](RunConfig& c, const std::string& v) { c.stencil_order = to_int(v); }},
      {"grid.angular_resolution", [](RunConfig& c, const std::string& v) { c.angular_resolution = to_int(v); }},
      {"grid.closure",
       [](RunConfig& c, const std::string& v) {
         if (v == "dirichlet") c.closure = Closure::Dirichlet;
         else if (v == "natural") c.closure = Closure::Natural;
         else throw std::invalid_argument("unknown closure '" + v + "' (dirichlet, natural)");
       }},
      {"grid.max_nodes",
       [](RunConfig& c, const std::string& v) {
         const long long m = to_integer(v);
         if (m <= 0) throw std::invalid_argument("max_nodes must be positive");
         c.max_nodes = static_cast<std::size_t>(m);
       }},
      {"verify.suite", [](RunConfig& c, const std::string& v) { c.verify.suite = split_list(v); }},
      {"verify.bump_radius", [](RunConfig& c, const std::string& v) { c.verify.bump_radius = to_double(v); }},
      {"verify.identity_tolerance",
       [](RunConfig& c, const std::string& v) { c.verify.identity_tolerance = to_double(v); }},
      {"verify.adjoint_pairs", [](RunConfig& c, const std::string& v) { c.verify.adjoint_pairs = to_int(v); }},
      {"verify.sample_points", [](RunConfig& c, const std::string& v) { c.verify.sample_points = to_int(v); }},
      {"spectrum.count", [](RunConfig& c, const std::string& v) { c.spectrum.count = to_int(v); }},
      {"spectrum.tolerance", [](RunConfig& c, const std::string& v) { c.spectrum.tolerance = to_double(v); }},
      {"spectrum.check_tolerance",
       [](RunConfig& c, const std::string& v) { c.spectrum.check_tolerance = to_double(v); }},
      {"spectrum.block_tolerance",
       [](RunConfig& c, const std::string& v) { c.spectrum.block_tolerance = to_double(v); }},
      {"propagate.field", [](RunConfig& c, const std::string& v) { c.propagate.field = v; }},
      {"propagate.r", [](RunConfig& c, const std::string& v) { c.propagate.r = to_double(v); }},
      {"propagate.epsilon",
       [](RunConfig& c, const std::string& v) {
         c.propagate.epsilon.clear();
         for (const std::string& e : split_list(v)) c.propagate.epsilon.push_back(to_double(e));
       }},
      {"propagate.radius_step", [](RunConfig& c, const std::string& v) { c.propagate.radius_step = to_double(v); }},
      {"propagate.eigen_count", [](RunConfig& c, const std::string& v) { c.propagate.eigen_count = to_int(v); }},
      {"propagate.fit_window", [](RunConfig& c, const std::string& v) { c.propagate.fit_window = to_double(v); }},
      {"propagate.fit_tolerance",
       [](RunConfig& c, const std::string& v) { c.propagate.fit_tolerance = to_double(v); }},
  };
  return table;
}

}  // namespace config_detail

/// Names accepted by set_config_value, as "section.key".
inline std::vector<std::string> config_key_names()
{
  std::vector<std::string> out;
  for (const auto& [k, _] : config_detail::keys()) out.push_back(k);
  return out;
}

/// Assign one "section.key" value; unknown keys and unparsable values throw
/// ConfigError carrying the given line.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value, int line = 0,
                             const std::string& source = "")
{
  const auto& table = config_detail::keys();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError(key, "unknown key", line, source);
  try {
    it->second(cfg, config_detail::trim(value));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what(), line, source);
  }
}

/// Parse the flat format: `key = value` lines, `[section]` headers, `#` or
/// `;` comments.  Keys before the first header belong to [run].
inline void parse_config_text(const std::string& text, RunConfig& cfg, const std::string& source = "")
{
  std::istringstream in(text);
  std::string raw;
  std::string section = "run";
  std::set<std::string> seen;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    const auto hash = s.find_first_of("#;");
    if (hash != std::string::npos) s = s.substr(0, hash);
    s = config_detail::trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("", "unterminated section header", line, source);
      section = config_detail::trim(s.substr(1, s.size() - 2));
      static const std::set<std::string> sections{"run", "model", "grid", "verify", "spectrum", "propagate"};
      if (!sections.count(section)) throw ConfigError(section, "unknown section", line, source);
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("", "expected 'key = value'", line, source);
    const std::string key = section + "." + config_detail::trim(s.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(key, "duplicate key", line, source);
    set_config_value(cfg, key, s.substr(eq + 1), line, source);
  }
}

inline void parse_config_file(const std::string& path, RunConfig& cfg)
{
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  parse_config_text(ss.str(), cfg, path);
}

/// Rough primal node count, used to refuse huge grids before building them.
inline double estimated_nodes(const RunConfig& c)
{
  const int e = c.model.kind == ModelKind::Cylinder ? c.model.n - c.model.k : c.model.n;
  double count = std::pow(static_cast<double>(c.resolution), e);
  if (c.model.kind == ModelKind::Cylinder) {
    const int ang = c.angular_resolution > 0 ? c.angular_resolution : c.resolution;
    count *= std::pow(std::max(ang / 2, 4), c.model.k - 1) * ang;
  }
  return count;
}

/// Checks every precondition the workflows rely on.  Throws ConfigError.
inline void validate(const RunConfig& c)
{
  try {
    (void)c.make();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(c.model.kind == ModelKind::Cylinder && c.model.n >= 1 ? "model.k" : "model.n", e.what());
  }
  if (c.resolution < 16) throw ConfigError("grid.resolution", "resolution below minimum (16)");
  const double R = c.resolved_truncation_radius();
  if (R < 4.0) throw ConfigError("grid.truncation_radius", "truncation_radius must be >= 4");
  if (c.stencil_order != 2 && c.stencil_order != 4) throw ConfigError("grid.stencil_order", "stencil_order must be 2 or 4");
  if (c.model.kind == ModelKind::Cylinder && c.angular_resolution != 0 && c.angular_resolution < 8)
    throw ConfigError("grid.angular_resolution", "angular_resolution must be >= 8");
  if (c.angular_resolution < 0) throw ConfigError("grid.angular_resolution", "angular_resolution must be >= 0");
  if (estimated_nodes(c) > static_cast<double>(c.max_nodes))
    throw ConfigError("grid.resolution", "grid would have about " + std::to_string(static_cast<long long>(estimated_nodes(c))) +
                                             " nodes, above max_nodes = " + std::to_string(c.max_nodes));
  if (c.jobs < 1) throw ConfigError("run.jobs", "jobs must be >= 1");
  if (c.output_dir.empty()) throw ConfigError("run.output_dir", "output directory must not be empty");

  switch (c.command) {
    case Command::Verify: {
      if (c.verify.suite.empty()) throw ConfigError("verify.suite", "empty suite");
      const auto& names = verify_suite_names();
      for (const std::string& s : c.verify.suite)
        if (s != "all" && std::find(names.begin(), names.end(), s) == names.end())
          throw ConfigError("verify.suite", "unknown check '" + s + "'");
      if (c.verify.bump_radius < 0.0 || c.verify.bump_radius >= R)
        throw ConfigError("verify.bump_radius", "bump_radius must lie in [0, truncation_radius)");
      if (c.verify.identity_tolerance <= 0.0) throw ConfigError("verify.identity_tolerance", "must be positive");
      if (c.verify.adjoint_pairs < 1) throw ConfigError("verify.adjoint_pairs", "must be >= 1");
      if (c.verify.sample_points < 1) throw ConfigError("verify.sample_points", "must be >= 1");
      break;
    }
    case Command::Spectrum:
      if (c.spectrum.count < 1) throw ConfigError("spectrum.count", "count must be >= 1");
      if (c.spectrum.tolerance <= 0.0) throw ConfigError("spectrum.tolerance", "must be positive");
      if (c.spectrum.check_tolerance <= 0.0) throw ConfigError("spectrum.check_tolerance", "must be positive");
      if (c.spectrum.block_tolerance <= 0.0) throw ConfigError("spectrum.block_tolerance", "must be positive");
      break;
    case Command::Propagate: {
      const PropagateBlock& p = c.propagate;
      if (p.field != "rotation") throw ConfigError("propagate.field", "unknown field '" + p.field + "' (rotation)");
      if (c.model.kind == ModelKind::Gaussian && c.model.n < 2)
        throw ConfigError("propagate.field", "rotation needs n >= 2 on the Gaussian");
      if (p.r > R) throw ConfigError("propagate.r", "r exceeds truncation_radius");
      if (p.r < 4.0) throw ConfigError("propagate.r", "r must be >= 4");
      if (2.0 * p.r >= R) throw ConfigError("propagate.r", "extension needs truncation_radius > 2r for the outer annulus");
      if (p.epsilon.empty()) throw ConfigError("propagate.epsilon", "empty epsilon list");
      for (double e : p.epsilon)
        if (e < 0.0) throw ConfigError("propagate.epsilon", "epsilon must be >= 0");
      if (p.radius_step < 0.0) throw ConfigError("propagate.radius_step", "must be >= 0");
      if (p.eigen_count < 1) throw ConfigError("propagate.eigen_count", "must be >= 1");
      if (p.fit_window <= 1.0 || p.fit_window > 2.0) throw ConfigError("propagate.fit_window", "must lie in (1, 2]");
      if (p.fit_tolerance <= 0.0) throw ConfigError("propagate.fit_tolerance", "must be positive");
      break;
    }
  }
}

}  // namespace shrinker
