// Standalone checks: the Killing dichotomy, harmonicity of div_f Y, the drift
// Bochner identity, the interpolation inequality and the Cao-Zhou bounds.
#pragma once

#include "shrinker/discrete_field.hpp"
#include "shrinker/weighted_operators.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace shrinker {

/// 10 h^order, the relative size below which a quantity counts as vanishing.
inline double vanishing_tolerance(const Grid& g) { return 10.0 * std::pow(g.max_spacing(), g.stencil_order()); }

/// Pointwise identities are measured on {b < R_max - 4 * order * h}, away from
/// the jump that the zero extension puts at the truncation boundary.
inline double interior_radius(const Grid& g)
{
  return g.truncation_radius() - 4.0 * g.stencil_order() * g.line_spacing();
}

inline double interior_norm(const Field& w)
{
  return std::sqrt(std::max(inner_product_inside(w, w, interior_radius(*w.grid)), 0.0));
}

/// Scalar field on the primal lattice from per-node values.
inline Field primal_scalar(const GridPtr& g, Eigen::VectorXd v) { return Field{Rank::Scalar, std::move(v), g}; }

/// <grad f, Y> on the primal lattice.
inline Field df_pairing(const WeightedOperators& ops, const Field& y)
{
  const GridPtr& g = ops.grid();
  const Eigen::MatrixXd c = ops.collocate(Space::Vector, y.values);
  const Lattice& P = g->primal();
  Eigen::VectorXd out(P.size());
  for (int p = 0; p < P.size(); ++p) out(p) = potential_data(g->model(), P.coords.col(p)).grad_f.dot(c.col(p));
  return primal_scalar(g, std::move(out));
}

/// Unweighted Laplacian: Delta u = Lf u + <grad f, grad u>.
inline Field laplacian(const WeightedOperators& ops, const Field& u)
{
  return ops.drift_laplacian(u) + df_pairing(ops, ops.gradient(u));
}

// ---------------------------------------------------------------------------

enum class Verdict { PreservesF, SplitsLine, NotKilling };

inline std::string to_string(Verdict v)
{
  switch (v) {
    case Verdict::PreservesF: return "PreservesF";
    case Verdict::SplitsLine: return "SplitsLine";
    case Verdict::NotKilling: return "NotKilling";
  }
  return "unknown";
}

// All three over the interior region, relative to ||Y|| there.
struct DichotomyEvidence {
  double killing_residual = 0.0;  // ||div_f* Y|| / ||Y||
  double df_pairing_norm = 0.0;   // ||<grad f, Y>|| / ||Y||
  double hess_divf_norm = 0.0;    // ||Hess div_f Y|| / ||Y||
};

struct DichotomyVerdict {
  Verdict verdict = Verdict::NotKilling;
  DichotomyEvidence evidence;
  double tolerance = 0.0;
  bool consistent = true;  // false: Killing, moves f, yet Hess div_f Y does not vanish
};

inline DichotomyVerdict classify_killing(const WeightedOperators& ops, const Field& y)
{
  const double yn = interior_norm(y);
  if (yn == 0.0) throw std::invalid_argument("zero field");
  DichotomyVerdict d;
  d.tolerance = vanishing_tolerance(*ops.grid());
  d.evidence.killing_residual = interior_norm(ops.div_f_star(y)) / yn;
  d.evidence.df_pairing_norm = interior_norm(df_pairing(ops, y)) / yn;
  d.evidence.hess_divf_norm = interior_norm(ops.hessian(ops.div_f_vec(y))) / yn;
  const double tol = d.tolerance;
  if (d.evidence.killing_residual > tol) {
    d.verdict = Verdict::NotKilling;
  } else if (d.evidence.df_pairing_norm <= tol) {
    d.verdict = Verdict::PreservesF;
  } else if (d.evidence.hess_divf_norm <= tol) {
    d.verdict = Verdict::SplitsLine;
  } else {
    d.verdict = Verdict::NotKilling;
    d.consistent = false;
  }
  return d;
}

struct CheckResult {
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string warning;
};

/// ||Delta div_f Y|| / max(||div_f Y||, 1) for a Killing field Y, both norms
/// over the interior region.
inline CheckResult harmonicity_check(const WeightedOperators& ops, const Field& y)
{
  CheckResult c;
  c.tolerance = vanishing_tolerance(*ops.grid());
  if (norm(y) > 0.0 && classify_killing(ops, y).verdict == Verdict::NotKilling)
    c.warning = "field is not Killing; harmonicity not expected";
  const Field u = ops.div_f_vec(y);
  c.residual = interior_norm(laplacian(ops, u)) / std::max(interior_norm(u), 1.0);
  c.pass = c.residual <= c.tolerance;
  return c;
}

/// Relative residual of (1/2) Lf |grad v|^2 = |Hess v|^2 + (1/2 - mu) |grad v|^2
/// over the interior region.
inline CheckResult drift_bochner_residual(const WeightedOperators& ops, const Field& v, double mu)
{
  CheckResult c;
  c.tolerance = vanishing_tolerance(*ops.grid());
  const double vn = norm(v);
  if (vn > 0.0) {
    const double eig = norm(ops.drift_laplacian(v) + mu * v) / vn;
    if (eig > c.tolerance) c.warning = "v is not an eigenfunction to tolerance (residual " + std::to_string(eig) + ")";
  }
  const GridPtr& g = ops.grid();
  const Field grad2 = primal_scalar(g, ops.pointwise_norm2(ops.gradient(v)));
  const Field hess2 = primal_scalar(g, ops.pointwise_norm2(ops.hessian(v)));
  const Field lhs = 0.5 * ops.drift_laplacian(grad2);
  const Field rhs = hess2 + (0.5 - mu) * grad2;
  const double scale = std::max({interior_norm(lhs), interior_norm(rhs), interior_norm(grad2)});
  c.residual = scale == 0.0 ? 0.0 : interior_norm(lhs - rhs) / scale;
  c.pass = c.residual <= c.tolerance;
  return c;
}

struct InterpolationReport {
  double lhs = 0.0;  // ||nabla Y||^2 + ||div_f Y||^2
  double rhs = 0.0;  // 2 ||Y|| ||(2P + kappa) Y||
  double slack = 0.0;
  bool pass = false;
};

inline InterpolationReport interp_inequality_check(const WeightedOperators& ops, const Field& y, double tolerance = 1e-8)
{
  InterpolationReport r;
  const double kappa = ops.grid()->model().kappa;
  const Field u = ops.div_f_vec(y);
  r.lhs = ops.nabla_vector_norm_sq(y) + inner_product(u, u);
  r.rhs = 2.0 * norm(y) * norm(2.0 * ops.op_P(y) + kappa * y);
  r.slack = r.rhs - r.lhs;
  r.pass = r.lhs <= r.rhs * (1.0 + tolerance) + 1e-300;
  return r;
}

// ---------------------------------------------------------------------------

struct CaoZhouReport {
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  std::vector<double> ladder;
  std::vector<double> volume_ratios;  // Vol(B_r) / r^n along the ladder
  bool insufficient_data = false;
};

/// Distance to the basepoint at min f: the origin of R^n, or (t = 0, north
/// pole) on a cylinder, where the sphere distance is rho * theta_1.
inline double distance_to_basepoint(const ModelShrinker& m, const Point& x)
{
  const int e = m.euclidean_dim();
  double d2 = x.head(e).squaredNorm();
  if (m.has_sphere()) {
    const double s = m.sphere_radius * x(e);
    d2 += s * s;
  }
  return std::sqrt(d2);
}

/// Smallest c1, c2 with (r - c1)^2/4 <= f <= (r + c2)^2/4 over the samples,
/// and c3 = max Vol(B_r)/r^n over the ladder.
inline CaoZhouReport cao_zhou_fit(const ModelShrinker& m, const Eigen::MatrixXd& points, const Eigen::VectorXd& volumes,
                                  const std::vector<double>& ladder)
{
  CaoZhouReport rep;
  rep.ladder = ladder;
  if (points.cols() < 2) {
    rep.insufficient_data = true;
    return rep;
  }
  std::vector<double> dist(static_cast<std::size_t>(points.cols()));
  for (Eigen::Index p = 0; p < points.cols(); ++p) {
    const Point x = points.col(p);
    const double r = distance_to_basepoint(m, x);
    const double b = 2.0 * std::sqrt(potential(m, x));
    dist[static_cast<std::size_t>(p)] = r;
    rep.c1 = std::max(rep.c1, r - b);
    rep.c2 = std::max(rep.c2, b - r);
  }
  for (double r : ladder) {
    double vol = 0.0;
    for (Eigen::Index p = 0; p < points.cols(); ++p)
      if (dist[static_cast<std::size_t>(p)] < r) vol += volumes(p);
    const double ratio = vol / std::pow(r, m.n);
    rep.volume_ratios.push_back(ratio);
    rep.c3 = std::max(rep.c3, ratio);
  }
  return rep;
}

/// Cao-Zhou constants over the primal lattice.  The volume ladder runs from
/// r_lo to 90% of the largest ball contained in the grid.
inline CaoZhouReport cao_zhou_check(const Grid& g, double r_lo = 2.0, double ladder_step = 0.25)
{
  const ModelShrinker& m = g.model();
  const double R = g.truncation_radius();
  // B_r lies in {b < R} when r^2 + 4 f_offset < R^2.
  const double r_hi = 0.9 * std::sqrt(std::max(R * R - 4.0 * m.f_offset, 0.0));
  std::vector<double> ladder;
  for (double r = r_lo; r <= r_hi + 1e-12; r += ladder_step) ladder.push_back(r);
  return cao_zhou_fit(m, g.primal().coords, g.primal().volume, ladder);
}

}  // namespace shrinker
