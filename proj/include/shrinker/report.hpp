// JSON report records and the convergence table between two reports.
#pragma once

#include "shrinker/config.hpp"
#include "shrinker/discrete_field.hpp"
#include "shrinker/model_geometry.hpp"
#include "shrinker/weighted_operators.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace shrinker {

using Json = nlohmann::ordered_json;

inline constexpr int report_schema_version = 1;

/// One named check in a report.  `error` is the quantity expected to shrink
/// under refinement, when there is one.
struct CheckRecord {
  std::string check_name;
  std::vector<std::pair<std::string, double>> residuals;
  std::optional<std::string> verdict;
  std::optional<double> error;
  bool pass = false;
  std::string note;
};

inline std::string model_label(const ModelShrinker& m)
{
  if (m.kind == ModelKind::Gaussian) return "gaussian(n=" + std::to_string(m.n) + ")";
  return "cylinder(n=" + std::to_string(m.n) + ",k=" + std::to_string(m.k) + ")";
}

inline Json to_json(const ModelShrinker& m)
{
  return Json{{"kind", to_string(m.kind)}, {"n", m.n}, {"k", m.k}, {"sphere_radius", m.sphere_radius}, {"f_offset", m.f_offset}};
}

inline Json to_json(const RunConfig& c)
{
  Json j;
  j["command"] = to_string(c.command);
  j["model"] = {{"kind", to_string(c.model.kind)}, {"n", c.model.n}, {"k", c.model.k}};
  j["grid"] = {{"resolution", c.resolution},
               {"truncation_radius", c.resolved_truncation_radius()},
               {"stencil_order", c.stencil_order},
               {"angular_resolution", c.angular_resolution},
               {"closure", to_string(c.closure)},
               {"max_nodes", c.max_nodes}};
  switch (c.command) {
    case Command::Verify:
      j["verify"] = {{"suite", c.resolved_suite()},
                     {"bump_radius", c.verify.bump_radius},
                     {"identity_tolerance", c.verify.identity_tolerance},
                     {"adjoint_pairs", c.verify.adjoint_pairs},
                     {"sample_points", c.verify.sample_points}};
      break;
    case Command::Spectrum:
      j["spectrum"] = {{"count", c.spectrum.count},
                       {"tolerance", c.spectrum.tolerance},
                       {"check_tolerance", c.spectrum.check_tolerance},
                       {"block_tolerance", c.spectrum.block_tolerance}};
      break;
    case Command::Propagate:
      j["propagate"] = {{"field", c.propagate.field},
                        {"r", c.propagate.r},
                        {"epsilon", c.propagate.epsilon},
                        {"radius_step", c.propagate.radius_step},
                        {"eigen_count", c.propagate.eigen_count},
                        {"fit_window", c.propagate.fit_window},
                        {"fit_tolerance", c.propagate.fit_tolerance}};
      break;
  }
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["jobs"] = c.jobs;
  return j;
}

/// Suite document entry: {check_name, model, resolution, residuals, verdict, pass}.
inline Json to_json(const CheckRecord& r, const ModelShrinker& m, int resolution)
{
  Json res = Json::object();
  for (const auto& [k, v] : r.residuals) res[k] = v;
  Json j{{"check_name", r.check_name}, {"model", model_label(m)}, {"resolution", resolution}, {"residuals", res}};
  j["verdict"] = r.verdict ? Json(*r.verdict) : Json(nullptr);
  j["pass"] = r.pass;
  j["error"] = r.error ? Json(*r.error) : Json(nullptr);
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

/// {identity_name, residual, resolution, stencil_order} per identity.
inline Json to_json(const IdentityReport& rep, const std::string& prefix = "")
{
  Json out = Json::array();
  for (const IdentityResidual& r : rep.residuals)
    out.push_back({{"identity_name", prefix + r.identity_name},
                   {"residual", r.residual},
                   {"resolution", rep.resolution},
                   {"stencil_order", rep.stencil_order}});
  return out;
}

inline Json to_json(const Grid& g)
{
  const double R = g.truncation_radius();
  return Json{{"resolution", g.options().resolution},
              {"truncation_radius", R},
              {"stencil_order", g.stencil_order()},
              {"closure", to_string(g.options().closure)},
              {"nodes", g.size()},
              {"line_spacing", g.line_spacing()},
              {"max_spacing", g.max_spacing()},
              {"total_mass", g.measure().total_mass()},
              {"tail_scale", std::pow(R, g.dim() + 4) * std::exp(-R * R / 4.0)}};
}

inline std::string utc_timestamp()
{
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Skeleton shared by all commands; the timestamp is the only field that
/// differs between reruns of the same configuration.
inline Json report_header(const RunConfig& cfg, const Grid& g)
{
  Json j;
  j["schema_version"] = report_schema_version;
  j["command"] = to_string(cfg.command);
  j["timestamp"] = utc_timestamp();
  j["config"] = to_json(cfg);
  j["model"] = to_json(g.model());
  j["grid"] = to_json(g);
  return j;
}

inline void write_json(const std::string& path, const Json& j)
{
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

inline Json read_json(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open report '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("malformed report '" + path + "': " + e.what());
  }
}

/// Plot-data file; the header names the intended axes.
inline void write_plot_csv(const std::string& path, const std::vector<std::array<double, 3>>& rows,
                           const std::string& header = "radius,I,bound")
{
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << header << "\n" << std::setprecision(17);
  for (const auto& r : rows) out << r[0] << "," << r[1] << "," << r[2] << "\n";
}

// ---------------------------------------------------------------------------

struct ConvergenceRow {
  std::string check_name;
  double error_coarse = 0.0;
  double error_fine = 0.0;
  double ratio = std::numeric_limits<double>::quiet_NaN();
  double order = std::numeric_limits<double>::quiet_NaN();
  bool flagged = false;
  std::string note;
};

struct ConvergenceTable {
  std::string command;
  std::string model;
  int resolution_coarse = 0;
  int resolution_fine = 0;
  int stencil_order = 2;
  std::vector<ConvergenceRow> rows;

  bool any_flagged() const
  {
    for (const auto& r : rows)
      if (r.flagged) return true;
    return false;
  }
};

/// Per-check error ratio (coarse / fine) and empirical order between two
/// reports of the same command and model.  Checks converging slower than
/// stencil_order - 0.5, and pairs at equal resolution, are flagged.  Errors
/// below `roundoff_floor` in both reports count as exact.
inline ConvergenceTable compare_runs(const Json& a, const Json& b, double roundoff_floor = 1e-12)
{
  if (!a.contains("command") || !b.contains("command") || !a.contains("checks") || !b.contains("checks"))
    throw std::invalid_argument("not a shrinker report");
  if (a["command"] != b["command"])
    throw std::invalid_argument("mismatched commands: " + a["command"].get<std::string>() + " vs " +
                                b["command"].get<std::string>());
  if (a["model"] != b["model"]) throw std::invalid_argument("mismatched models");
  const int sa = a["grid"]["stencil_order"].get<int>();
  const int sb = b["grid"]["stencil_order"].get<int>();
  if (sa != sb) throw std::invalid_argument("mismatched stencil orders");

  const int ra = a["grid"]["resolution"].get<int>();
  const int rb = b["grid"]["resolution"].get<int>();
  const Json& coarse = ra <= rb ? a : b;
  const Json& fine = ra <= rb ? b : a;

  ConvergenceTable t;
  t.command = a["command"].get<std::string>();
  t.model = a["model"]["kind"].get<std::string>() + "(n=" + std::to_string(a["model"]["n"].get<int>()) + ")";
  t.resolution_coarse = std::min(ra, rb);
  t.resolution_fine = std::max(ra, rb);
  t.stencil_order = sa;
  const double threshold = sa - 0.5;

  for (const auto& cc : coarse["checks"]) {
    const std::string name = cc["check_name"].get<std::string>();
    const Json* match = nullptr;
    for (const auto& cf : fine["checks"])
      if (cf["check_name"] == name) match = &cf;
    ConvergenceRow row;
    row.check_name = name;
    if (!match) {
      row.note = "missing from the finer report";
      t.rows.push_back(row);
      continue;
    }
    if (cc["error"].is_null() || (*match)["error"].is_null()) {
      row.note = "no error measure";
      t.rows.push_back(row);
      continue;
    }
    row.error_coarse = cc["error"].get<double>();
    row.error_fine = (*match)["error"].get<double>();
    if (row.error_coarse <= roundoff_floor && row.error_fine <= roundoff_floor) {
      row.ratio = row.error_fine == 0.0 ? 1.0 : row.error_coarse / row.error_fine;
      row.note = "at roundoff at both resolutions";
    } else if (row.error_fine == 0.0) {
      row.ratio = std::numeric_limits<double>::infinity();
      row.order = std::numeric_limits<double>::infinity();
      row.note = "exact at the finer resolution";
    } else {
      row.ratio = row.error_coarse / row.error_fine;
      if (t.resolution_fine > t.resolution_coarse)
        row.order = std::log(row.ratio) / std::log(static_cast<double>(t.resolution_fine) / t.resolution_coarse);
    }
    if (t.resolution_fine > t.resolution_coarse && std::isfinite(row.order) && row.order < threshold) {
      row.flagged = true;
      row.note = "converging below stencil order";
    }
    t.rows.push_back(row);
  }
  // Equal resolutions say nothing about convergence, whatever the rows hold.
  if (t.resolution_fine == t.resolution_coarse)
    for (auto& row : t.rows) {
      row.flagged = true;
      row.note = "same resolution, no refinement";
    }
  return t;
}

inline Json to_json(const ConvergenceTable& t)
{
  auto num = [](double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); };
  Json rows = Json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"check_name", r.check_name},
                    {"error_coarse", r.error_coarse},
                    {"error_fine", r.error_fine},
                    {"ratio", num(r.ratio)},
                    {"order", num(r.order)},
                    {"flagged", r.flagged},
                    {"note", r.note}});
  return Json{{"command", t.command},
              {"model", t.model},
              {"resolution_coarse", t.resolution_coarse},
              {"resolution_fine", t.resolution_fine},
              {"stencil_order", t.stencil_order},
              {"rows", rows}};
}

inline void print_table(std::ostream& os, const ConvergenceTable& t)
{
  os << t.command << " " << t.model << "  resolution " << t.resolution_coarse << " -> " << t.resolution_fine
     << "  stencil order " << t.stencil_order << "\n";
  os << std::left << std::setw(44) << "check" << std::right << std::setw(13) << "coarse" << std::setw(13) << "fine"
     << std::setw(10) << "ratio" << std::setw(8) << "order" << "  flag\n";
  for (const auto& r : t.rows) {
    os << std::left << std::setw(44) << r.check_name << std::right << std::scientific << std::setprecision(3)
       << std::setw(13) << r.error_coarse << std::setw(13) << r.error_fine << std::fixed << std::setprecision(2)
       << std::setw(10) << r.ratio << std::setw(8) << r.order << "  " << (r.flagged ? "FLAG" : "    ");
    if (!r.note.empty()) os << " " << r.note;
    os << "\n";
  }
  os.unsetf(std::ios::floatfield);
}

}  // namespace shrinker
