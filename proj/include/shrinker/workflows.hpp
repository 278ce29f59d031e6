// The three command workflows (verify, spectrum, propagate) and run(), which
// validates a RunConfig, executes it and writes report.json plus CSV files.
#pragma once

#include "shrinker/config.hpp"
#include "shrinker/discrete_field.hpp"
#include "shrinker/model_geometry.hpp"
#include "shrinker/propagation.hpp"
#include "shrinker/report.hpp"
#include "shrinker/sample_fields.hpp"
#include "shrinker/spectral.hpp"
#include "shrinker/verification.hpp"
#include "shrinker/weighted_operators.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace shrinker {

/// Evaluates fn(0..count-1) on up to `jobs` threads; results keep their index
/// order, and the first exception (by index) is rethrown.
template <class Fn>
auto parallel_map(int jobs, int count, Fn fn) -> std::vector<decltype(fn(0))>
{
  using T = decltype(fn(0));
  std::vector<std::optional<T>> slots(static_cast<std::size_t>(count));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        slots[static_cast<std::size_t>(i)].emplace(fn(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min(jobs, count));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<T> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

struct RunOutcome {
  Json report;
  std::vector<std::string> failed;
  int exit_code() const { return failed.empty() ? 0 : 1; }
};

namespace workflow_detail {

struct NamedField {
  std::string name;
  Field y;
  Verdict expected = Verdict::NotKilling;
};

/// Killing fields of the model with their expected verdicts, then the
/// coordinate stretch as the non-Killing control.
inline std::vector<NamedField> model_fields(const GridPtr& g)
{
  const ModelShrinker& m = g->model();
  std::vector<NamedField> out;
  if (m.kind == ModelKind::Gaussian) {
    if (m.n >= 2) out.push_back({"rotation_12", rotation_field(g, 0, 1), Verdict::PreservesF});
    out.push_back({"translation_1", translation_field(g, 0), Verdict::SplitsLine});
  } else {
    out.push_back({"azimuthal", azimuthal_rotation_field(g), Verdict::PreservesF});
    if (m.euclidean_dim() >= 2) out.push_back({"rotation_12", rotation_field(g, 0, 1), Verdict::PreservesF});
    out.push_back({"translation_t1", translation_field(g, 0), Verdict::SplitsLine});
  }
  out.push_back({"stretch_1", coordinate_stretch_field(g, 0), Verdict::NotKilling});
  return out;
}

/// Probabilists' Hermite polynomial He_d(x / sqrt 2) scaled for f = x^2/4:
/// x, x^2 - 2, x^3 - 6x, eigenfunctions of Lf with eigenvalue -d/2.
inline double hermite(int d, double x)
{
  switch (d) {
    case 1: return x;
    case 2: return x * x - 2.0;
    case 3: return x * x * x - 6.0 * x;
  }
  throw std::invalid_argument("hermite degree must be 1..3");
}

inline Field random_field(const GridPtr& g, Rank rank, std::mt19937_64& rng)
{
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Field f = Field::zeros(g, rank);
  for (Eigen::Index i = 0; i < f.values.size(); ++i) f.values(i) = u(rng);
  return f;
}

struct TaskOutput {
  std::vector<CheckRecord> checks;
  Json identities = Json::array();
};

inline TaskOutput check_soliton(const RunConfig& cfg, const GridPtr& g)
{
  TaskOutput out;
  const ModelShrinker& m = g->model();
  const ResidualReport rep = check_soliton_identities(m, random_chart_points(m, cfg.verify.sample_points, cfg.seed));
  CheckRecord r;
  r.check_name = "soliton_identities";
  r.residuals = {{"soliton_equation", rep.soliton_equation},
                 {"trace_identity", rep.trace_identity},
                 {"potential_identity", rep.potential_identity},
                 {"grad_b_excess", rep.grad_b_excess},
                 {"tolerance", rep.tolerance}};
  r.pass = rep.pass();
  for (const auto& f : rep.flagged) r.note += (r.note.empty() ? "" : "; ") + f;
  out.checks.push_back(r);
  return out;
}

inline TaskOutput check_adjointness(const RunConfig& cfg, const WeightedOperators& ops)
{
  TaskOutput out;
  const GridPtr& g = ops.grid();
  std::mt19937_64 rng(cfg.seed);
  double worst_vec = 0.0, worst_scalar = 0.0, min_rayleigh = std::numeric_limits<double>::infinity();
  for (int i = 0; i < cfg.verify.adjoint_pairs; ++i) {
    const Field v = random_field(g, Rank::Vector, rng);
    const Field h = random_field(g, Rank::Sym2, rng);
    const Field u = random_field(g, Rank::Scalar, rng);
    const Field sv = ops.div_f_star(v);
    const Field dh = ops.div_f_tensor(h);
    const double lhs = inner_product(sv, h), rhs = inner_product(v, dh);
    worst_vec = std::max(worst_vec, std::abs(lhs - rhs) / std::max(norm(sv) * norm(h), norm(v) * norm(dh)));
    // <grad u, v> = -<u, div_f v>
    const Field gu = ops.gradient(u);
    const Field dv = ops.div_f_vec(v);
    const double a = inner_product(gu, v), b = -inner_product(u, dv);
    worst_scalar = std::max(worst_scalar, std::abs(a - b) / std::max(norm(gu) * norm(v), norm(u) * norm(dv)));
    min_rayleigh = std::min(min_rayleigh, inner_product(ops.op_P(v), v) / inner_product(v, v));
  }
  CheckRecord r;
  r.check_name = "adjointness";
  r.residuals = {{"div_f_star_vs_div_f", worst_vec}, {"gradient_vs_div_f", worst_scalar}, {"min_rayleigh_P", min_rayleigh}};
  r.pass = worst_vec <= 1e-12 && worst_scalar <= 1e-12 && min_rayleigh >= -1e-8;
  out.checks.push_back(r);
  return out;
}

inline double bump_radius(const RunConfig& cfg, const Grid& g)
{
  return cfg.verify.bump_radius > 0.0 ? cfg.verify.bump_radius : 0.4 * g.truncation_radius();
}

/// Bump of the given radius centred half a radius along the first line
/// axis, so that no test field is divergence free by symmetry.  On a cylinder
/// it also vanishes within half a radian of the poles, and sphere directions
/// get a tilt in theta so that the azimuthal field is not divergence free
/// either.
inline Field times_offset_bump(const Field& y, double radius)
{
  const ModelShrinker& m = y.grid->model();
  const int e = m.euclidean_dim();
  return scale_pointwise(y, [&](const Point& x) {
    Eigen::VectorXd t = x.head(e);
    t(0) -= 0.5 * radius;
    double s = smooth_bump(t.norm() / radius);
    for (int a = e; a < m.n - 1; ++a) s *= smooth_bump((x(a) - 0.5 * M_PI) / (0.5 * M_PI - 0.5));
    if (m.has_sphere()) s *= 1.0 + 0.5 * std::cos(x(m.n - 1));
    return s;
  });
}

inline TaskOutput check_identities(const RunConfig& cfg, const WeightedOperators& ops)
{
  TaskOutput out;
  const GridPtr& g = ops.grid();
  const double radius = bump_radius(cfg, *g);
  for (const NamedField& nf : model_fields(g)) {
    const IdentityReport rep = identity_residuals(ops, times_offset_bump(nf.y, radius));
    for (const IdentityResidual& ir : rep.residuals) {
      CheckRecord r;
      r.check_name = "identity." + nf.name + "." + ir.identity_name;
      r.residuals = {{"residual", ir.residual}, {"tolerance", cfg.verify.identity_tolerance}};
      r.error = ir.residual;
      r.pass = ir.residual <= cfg.verify.identity_tolerance;
      if (rep.boundary_warning) r.note = "bump field reaches the truncation boundary";
      out.checks.push_back(r);
    }
    for (auto& j : to_json(rep, nf.name + ".")) out.identities.push_back(j);
  }
  return out;
}

inline TaskOutput check_dichotomy(const WeightedOperators& ops)
{
  TaskOutput out;
  for (const NamedField& nf : model_fields(ops.grid())) {
    const DichotomyVerdict d = classify_killing(ops, nf.y);
    const DichotomyVerdict d3 = classify_killing(ops, 3.0 * nf.y);
    CheckRecord r;
    r.check_name = "dichotomy." + nf.name;
    r.residuals = {{"killing_residual", d.evidence.killing_residual},
                   {"df_pairing_norm", d.evidence.df_pairing_norm},
                   {"hess_divf_norm", d.evidence.hess_divf_norm},
                   {"tolerance", d.tolerance}};
    r.verdict = to_string(d.verdict);
    r.pass = d.verdict == nf.expected && d3.verdict == d.verdict && d.consistent;
    if (d.verdict == Verdict::PreservesF)
      r.error = std::max(d.evidence.killing_residual, d.evidence.df_pairing_norm);
    else if (d.verdict == Verdict::SplitsLine)
      r.error = std::max(d.evidence.killing_residual, d.evidence.hess_divf_norm);
    if (d.verdict != nf.expected) r.note = "expected " + to_string(nf.expected);
    if (d3.verdict != d.verdict) r.note += (r.note.empty() ? "" : "; ") + std::string("verdict changes under Y -> 3Y");
    if (!d.consistent) r.note += (r.note.empty() ? "" : "; ") + std::string("Killing, moves f, Hess div_f Y nonzero");
    out.checks.push_back(r);
  }
  return out;
}

inline TaskOutput check_harmonicity(const WeightedOperators& ops)
{
  TaskOutput out;
  for (const NamedField& nf : model_fields(ops.grid())) {
    if (nf.expected == Verdict::NotKilling) continue;
    const CheckResult c = harmonicity_check(ops, nf.y);
    CheckRecord r;
    r.check_name = "harmonicity." + nf.name;
    r.residuals = {{"residual", c.residual}, {"tolerance", c.tolerance}};
    r.error = c.residual;
    r.pass = c.pass;
    r.note = c.warning;
    out.checks.push_back(r);
  }
  return out;
}

inline TaskOutput check_bochner(const WeightedOperators& ops)
{
  TaskOutput out;
  const GridPtr& g = ops.grid();
  for (int d = 1; d <= 3; ++d) {
    const Field v = sample_scalar(g, [d](const Point& x) { return hermite(d, x(0)); });
    const CheckResult c = drift_bochner_residual(ops, v, 0.5 * d);
    CheckRecord r;
    r.check_name = "bochner.hermite_" + std::to_string(d);
    r.residuals = {{"residual", c.residual}, {"tolerance", c.tolerance}, {"mu", 0.5 * d}};
    r.error = c.residual;
    r.pass = c.pass;
    r.note = c.warning;
    out.checks.push_back(r);
  }
  return out;
}

inline TaskOutput check_interpolation(const RunConfig& cfg, const WeightedOperators& ops)
{
  TaskOutput out;
  const GridPtr& g = ops.grid();
  const double radius = bump_radius(cfg, *g);
  for (const NamedField& nf : model_fields(g)) {
    const InterpolationReport rep = interp_inequality_check(ops, times_radial_bump(nf.y, radius));
    CheckRecord r;
    r.check_name = "interpolation." + nf.name;
    r.residuals = {{"lhs", rep.lhs}, {"rhs", rep.rhs}, {"slack", rep.slack}};
    r.pass = rep.pass;
    out.checks.push_back(r);
  }
  return out;
}

inline double unit_ball_volume(int n) { return std::pow(M_PI, 0.5 * n) / std::tgamma(0.5 * n + 1.0); }

inline TaskOutput check_cao_zhou(const Grid& g)
{
  TaskOutput out;
  const CaoZhouReport rep = cao_zhou_check(g);
  CheckRecord r;
  r.check_name = "cao_zhou";
  r.residuals = {{"c1", rep.c1}, {"c2", rep.c2}, {"c3", rep.c3}};
  const bool finite = std::isfinite(rep.c1) && std::isfinite(rep.c2) && std::isfinite(rep.c3);
  r.pass = !rep.insufficient_data && finite;
  if (g.model().kind == ModelKind::Gaussian) {
    const double omega = unit_ball_volume(g.dim());
    r.residuals.push_back({"euclidean_ball_constant", omega});
    const double dev = std::abs(rep.c3 / omega - 1.0);
    r.residuals.push_back({"c3_relative_deviation", dev});
    r.pass = r.pass && rep.c1 <= 1e-8 && rep.c2 <= 1e-8 && dev <= 0.05;
  }
  if (rep.insufficient_data) r.note = "insufficient data";
  out.checks.push_back(r);
  return out;
}

inline void collect(RunOutcome& o, Json& checks, const std::vector<CheckRecord>& recs, const Grid& g)
{
  for (const CheckRecord& r : recs) {
    checks.push_back(to_json(r, g.model(), g.options().resolution));
    if (!r.pass) o.failed.push_back(r.check_name);
  }
}

}  // namespace workflow_detail

inline RunOutcome run_verify(const RunConfig& cfg, const std::shared_ptr<WeightedOperators>& ops)
{
  using namespace workflow_detail;
  const GridPtr& g = ops->grid();
  const std::vector<std::string> suite = cfg.resolved_suite();
  std::vector<TaskOutput> parts = parallel_map(cfg.jobs, static_cast<int>(suite.size()), [&](int i) {
    const std::string& s = suite[static_cast<std::size_t>(i)];
    if (s == "soliton") return check_soliton(cfg, g);
    if (s == "adjointness") return check_adjointness(cfg, *ops);
    if (s == "identities") return check_identities(cfg, *ops);
    if (s == "dichotomy") return check_dichotomy(*ops);
    if (s == "harmonicity") return check_harmonicity(*ops);
    if (s == "bochner") return check_bochner(*ops);
    if (s == "interpolation") return check_interpolation(cfg, *ops);
    if (s == "cao_zhou") return check_cao_zhou(*g);
    throw std::invalid_argument("unknown check '" + s + "'");
  });
  RunOutcome o;
  o.report = report_header(cfg, *g);
  Json checks = Json::array();
  Json identities = Json::array();
  for (const TaskOutput& t : parts) {
    collect(o, checks, t.checks, *g);
    for (const auto& j : t.identities) identities.push_back(j);
  }
  o.report["checks"] = checks;
  o.report["identities"] = identities;
  return o;
}

inline RunOutcome run_spectrum(const RunConfig& cfg, const std::shared_ptr<WeightedOperators>& ops)
{
  using namespace workflow_detail;
  const GridPtr& g = ops->grid();
  EigenSolverOptions sopt;
  sopt.seed = cfg.seed;
  const std::vector<SpectralPair> pairs = lowest_eigenpairs_of_P(*ops, cfg.spectrum.count, cfg.spectrum.tolerance, sopt);
  const double tol = cfg.spectrum.check_tolerance;

  struct PairOut {
    Json entry;
    std::vector<CheckRecord> checks;
  };
  std::vector<PairOut> parts = parallel_map(cfg.jobs, static_cast<int>(pairs.size()), [&](int i) {
    const SpectralPair& p = pairs[static_cast<std::size_t>(i)];
    const std::string tag = "pair_" + std::to_string(i);
    const DivFCheck dc = eigencheck_divf(*ops, p);
    const Decomposition4main0 dec = decompose_4main0(*ops, p);
    const InterpolationReport ir = interp_inequality_check(*ops, p.field);
    const Field sz = ops->div_f_star(p.field);
    const double rayleigh = inner_product(p.field, ops->op_P(p.field));
    const double gap_bound = std::max(1e-6, 10.0 * p.residual);

    PairOut po;
    po.entry = {{"mu", p.mu},
                {"residual", p.residual},
                {"norm_checks",
                 {{"divf_norm_sq", dc.divf_norm_sq},
                  {"divf_bound", dc.bound},
                  {"divf_eigen_residual", dc.eigen_residual},
                  {"norm_gap", dec.norm_gap},
                  {"norm_gap_bound", gap_bound},
                  {"div_z_residual", dec.div_z_residual},
                  {"grad_div_eigen_residual", dec.grad_div_eigen_residual},
                  {"z_eigen_residual", dec.z_eigen_residual},
                  {"rayleigh_minus_mu", std::abs(rayleigh - p.mu)},
                  {"rayleigh_minus_killing_norm", std::abs(rayleigh - inner_product(sz, sz))},
                  {"interpolation_slack", ir.slack}}}};

    CheckRecord a;
    a.check_name = tag + ".divf";
    a.residuals = {{"eigen_residual", dc.eigen_residual}, {"divf_norm_sq", dc.divf_norm_sq}, {"bound", dc.bound}};
    a.error = dc.eigen_residual;
    a.pass = dc.pass(tol, 1e-3);
    CheckRecord b;
    b.check_name = tag + ".decomposition";
    b.residuals = {{"norm_gap", dec.norm_gap},
                   {"norm_gap_bound", gap_bound},
                   {"div_z_residual", dec.div_z_residual},
                   {"grad_div_eigen_residual", dec.grad_div_eigen_residual},
                   {"z_eigen_residual", dec.z_eigen_residual}};
    b.error = std::max({dec.div_z_residual, dec.grad_div_eigen_residual, dec.z_eigen_residual});
    b.pass = dec.norm_gap <= gap_bound && *b.error <= tol;
    CheckRecord c;
    c.check_name = tag + ".interpolation";
    c.residuals = {{"lhs", ir.lhs}, {"rhs", ir.rhs}, {"slack", ir.slack}};
    c.pass = ir.pass;
    po.checks = {a, b, c};
    return po;
  });

  RunOutcome o;
  o.report = report_header(cfg, *g);
  Json spectrum = Json::array();
  Json checks = Json::array();
  for (const PairOut& po : parts) {
    spectrum.push_back(po.entry);
    collect(o, checks, po.checks, *g);
  }
  Json blocks = Json::array();
  for (const auto& blk : degenerate_blocks(pairs, cfg.spectrum.block_tolerance)) blocks.push_back(blk);
  o.report["spectrum"] = spectrum;
  o.report["degenerate_blocks"] = blocks;
  o.report["checks"] = checks;
  return o;
}

inline RunOutcome run_propagate(const RunConfig& cfg, const std::shared_ptr<WeightedOperators>& ops,
                                const std::filesystem::path& out_dir)
{
  using namespace workflow_detail;
  const GridPtr& g = ops->grid();
  const ModelShrinker& m = g->model();
  const PropagateBlock& pb = cfg.propagate;
  const double r = pb.r;
  const int n = m.n;

  const Field exact = m.kind == ModelKind::Gaussian ? rotation_field(g, 0, 1) : azimuthal_rotation_field(g);
  const Field bump = perturbation_field(g, r, cfg.seed);
  std::vector<double> eps = pb.epsilon;
  std::vector<int> order(eps.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return eps[a] < eps[b]; });

  PropagationOptions popt;
  popt.eigen_count = pb.eigen_count;
  popt.radius_step = pb.radius_step;
  popt.solver.seed = cfg.seed;

  struct EpsOut {
    PropagationResult res;
    double cosine = 0.0;
    double lambda_bar = 0.0;
    ProfileFit fit;
    bool fit_ok = false;
    GrowthReport growth;
    RadialProfile window;
  };
  std::vector<EpsOut> runs = parallel_map(cfg.jobs, static_cast<int>(eps.size()), [&](int i) {
    EpsOut e;
    const Field y = exact + eps[static_cast<std::size_t>(i)] * bump;
    e.res = extend_symmetry(*ops, y, r, popt);
    const Field& z = e.res.Z.field;
    e.cosine = std::abs(inner_product(z, exact)) / (norm(z) * norm(exact));
    const Field w = ops->div_f_star(z);
    e.lambda_bar = measured_rayleigh_bound(*ops, w);
    e.window.w_label = e.res.z2_profile.w_label;
    for (std::size_t k = 0; k < e.res.z2_profile.radii.size(); ++k)
      if (k < static_cast<std::size_t>(e.res.z2_included) && e.res.z2_profile.radii[k] < pb.fit_window * r) {
        e.window.radii.push_back(e.res.z2_profile.radii[k]);
        e.window.values.push_back(e.res.z2_profile.values[k]);
      }
    try {
      e.fit = fit_growth_exponent(e.window);
      e.fit_ok = true;
    } catch (const std::invalid_argument&) {
      e.fit_ok = false;
    }
    e.growth = check_growth_bound(e.window, e.lambda_bar, r);
    return e;
  });

  // e:Liesmall style constant: fitted at the smallest epsilon, reused (up to
  // a factor 2) at the others.
  const double tail4 = tail_scale(r, n, 4);
  const EpsOut& ref = runs[static_cast<std::size_t>(order.front())];
  const double c_fit = std::max(0.0, ref.res.mu - 3.0 * ref.res.mu_bar) / tail4;

  RunOutcome o;
  o.report = report_header(cfg, *g);
  Json checks = Json::array();
  Json prop = Json::array();
  for (int idx : order) {
    const EpsOut& e = runs[static_cast<std::size_t>(idx)];
    const double epsilon = eps[static_cast<std::size_t>(idx)];
    const PropagationResult& res = e.res;
    const std::string tag = "eps_" + std::to_string(idx);
    const std::string profile_file = "profile_" + tag + ".csv";
    const std::string plot_file = "plot_" + tag + ".csv";
    {
      std::ofstream pf(out_dir / profile_file);
      if (!pf) throw std::runtime_error("cannot write " + (out_dir / profile_file).string());
      write_profile_csv(res.z2_profile, pf);
    }
    write_plot_csv((out_dir / plot_file).string(), res.plot_rows);

    const double liesmall_rhs = 3.0 * res.mu_bar + 2.0 * c_fit * tail4;
    std::vector<CheckRecord> recs(6);
    recs[0].check_name = tag + ".variational_bound";
    recs[0].residuals = {{"mu", res.mu}, {"v_rayleigh", res.v_rayleigh}, {"slack", res.variational_slack}};
    recs[0].pass = res.variational_slack >= -1e-10;
    recs[1].check_name = tag + ".defect_hypothesis";
    recs[1].residuals = {{"mu_bar", res.mu_bar}, {"c1", res.defect.c1}};
    recs[1].pass = res.defect.hypothesis_ok();
    recs[2].check_name = tag + ".liesmall";
    recs[2].residuals = {{"mu", res.mu}, {"bound", liesmall_rhs}, {"fitted_constant", c_fit}};
    recs[2].pass = res.mu <= liesmall_rhs + 1e-10;
    recs[3].check_name = tag + ".cosine";
    recs[3].residuals = {{"cosine", e.cosine}};
    recs[3].pass = e.cosine >= 0.99;
    recs[4].check_name = tag + ".growth_fit";
    recs[4].residuals = {{"slope", e.fit.slope}, {"max_residual", e.fit.max_residual}, {"tolerance", pb.fit_tolerance}};
    recs[4].pass = e.fit_ok && e.fit.max_residual <= pb.fit_tolerance;
    if (!e.fit_ok) recs[4].note = "too few positive samples in the fit window";
    recs[5].check_name = tag + ".growth_bound";
    recs[5].residuals = {{"lambda_bar", e.lambda_bar}, {"worst_ratio", e.growth.worst_ratio}};
    recs[5].pass = e.growth.pass;
    if (!e.growth.pass)
      recs[5].note = "worst pair (" + std::to_string(e.growth.worst_pair.first) + ", " +
                     std::to_string(e.growth.worst_pair.second) + ")";
    collect(o, checks, recs, *g);

    Json skipped = Json::array();
    for (double s : e.fit.skipped) skipped.push_back(s);
    prop.push_back({{"epsilon", epsilon},
                    {"mu", res.mu},
                    {"eigen_residual", res.Z.residual},
                    {"block_size", res.block_size},
                    {"mu_bar", res.mu_bar},
                    {"hypothesis_ok", res.defect.hypothesis_ok()},
                    {"c1", res.defect.c1},
                    {"v_norm_sq", res.v_norm_sq},
                    {"v_rayleigh", res.v_rayleigh},
                    {"variational_slack", res.variational_slack},
                    {"vbig_constant", res.vbig_constant},
                    {"liesmall_constant", res.liesmall_constant},
                    {"liesmall_fitted_constant", c_fit},
                    {"c2", res.c2},
                    {"z1_bound", res.z1_bound},
                    {"cosine_to_exact", e.cosine},
                    {"cutoff",
                     {{"band", {res.cutoff.transition_band.first, res.cutoff.transition_band.second}},
                      {"grad_bound", res.cutoff.grad_bound},
                      {"band_weight_max", res.cutoff.band_weight_max},
                      {"band_weight_reference", res.cutoff.band_weight_reference},
                      {"reference_holds", res.cutoff.weight_reference_holds()}}},
                    {"growth_fit",
                     {{"window", {r, pb.fit_window * r}},
                      {"samples", e.window.radii.size()},
                      {"slope", e.fit.slope},
                      {"intercept", e.fit.intercept},
                      {"max_residual", e.fit.max_residual},
                      {"skipped_radii", skipped}}},
                    {"profile_fit_full_range",
                     {{"slope", res.fitted.slope}, {"intercept", res.fitted.intercept}, {"max_residual", res.fitted.max_residual}}},
                    {"growth_bound",
                     {{"lambda_bar", e.lambda_bar},
                      {"worst_ratio", e.growth.worst_ratio},
                      {"worst_pair", {e.growth.worst_pair.first, e.growth.worst_pair.second}},
                      {"pass", e.growth.pass}}},
                    {"profile_samples_in_range", res.z2_included},
                    {"profile_file", profile_file},
                    {"plot_file", plot_file}});
  }
  o.report["propagation"] = prop;
  o.report["checks"] = checks;
  return o;
}

/// Validates, executes and writes report.json (and CSV files) into
/// cfg.output_dir.  Returns 0 when every check passes, 1 when one fails, 2 on
/// configuration errors.  `outcome`, when given, receives the report.
inline int run(const RunConfig& cfg, std::ostream& log = std::cout, std::ostream& err = std::cerr,
               RunOutcome* outcome = nullptr)
{
  try {
    validate(cfg);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  const std::filesystem::path out_dir(cfg.output_dir);
  GridPtr grid;
  try {
    grid = build_grid(cfg.make(), cfg.grid_options());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    err << "error: cannot create output directory '" << out_dir.string() << "': " << ec.message() << "\n";
    return 2;
  }
  auto ops = std::make_shared<WeightedOperators>(grid);
  RunOutcome o;
  try {
    switch (cfg.command) {
      case Command::Verify: o = run_verify(cfg, ops); break;
      case Command::Spectrum: o = run_spectrum(cfg, ops); break;
      case Command::Propagate: o = run_propagate(cfg, ops, out_dir); break;
    }
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::length_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "check failed: " << to_string(cfg.command) << ": " << e.what() << "\n";
    return 1;
  }
  o.report["pass"] = o.failed.empty();
  o.report["failed"] = o.failed;
  write_json((out_dir / "report.json").string(), o.report);
  for (const std::string& f : o.failed) err << "check failed: " << f << "\n";
  log << to_string(cfg.command) << ": " << o.report["checks"].size() << " checks, " << o.failed.size() << " failed; report "
      << (out_dir / "report.json").string() << "\n";
  const int code = o.exit_code();
  if (outcome) *outcome = std::move(o);
  return code;
}

}  // namespace shrinker
