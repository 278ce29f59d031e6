// Closed-form gradient shrinking solitons: the Gaussian soliton on R^n and
// the round cylinder S^k(sqrt(2(k-1))) x R^(n-k).
//
// Chart coordinates are ordered (t_1..t_m, theta_1..theta_{k-1}, phi) where
// m = n - k is the Euclidean dimension and the sphere factor uses
// hyperspherical angles.  The Gaussian chart is plain Cartesian (m = n).
// Every metric handled here is diagonal in its chart.
#pragma once

#include "shrinker/tensor_layout.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace shrinker {

enum class ModelKind { Gaussian, Cylinder };

inline std::string to_string(ModelKind kind)
{
  return kind == ModelKind::Gaussian ? "gaussian" : "cylinder";
}

inline ModelKind parse_model_kind(const std::string& name)
{
  if (name == "gaussian" || name == "Gaussian") return ModelKind::Gaussian;
  if (name == "cylinder" || name == "Cylinder") return ModelKind::Cylinder;
  throw std::invalid_argument("unknown model kind '" + name + "'");
}

struct ModelShrinker {
  ModelKind kind = ModelKind::Gaussian;
  int n = 1;
  int k = 0;  // sphere dimension, 0 for Gaussian
  double kappa = 0.5;
  double sphere_radius = 0.0;
  double f_offset = 0.0;

  int euclidean_dim() const { return n - k; }
  bool has_sphere() const { return kind == ModelKind::Cylinder; }
};

inline ModelShrinker make_model(ModelKind kind, int n, int k = 0)
{
  if (n < 1) throw std::invalid_argument("model dimension must be >= 1");
  ModelShrinker m;
  m.kind = kind;
  m.n = n;
  if (kind == ModelKind::Gaussian) return m;

  if (k == 1) throw std::invalid_argument("cylinder sphere factor S^1 is Ricci-flat, need k >= 2");
  if (k < 2) throw std::invalid_argument("cylinder sphere dimension must be >= 2");
  if (k >= n) throw std::invalid_argument("cylinder needs a Euclidean factor: require k <= n - 1");
  m.k = k;
  m.sphere_radius = std::sqrt(2.0 * (k - 1));
  m.f_offset = 0.5 * k;
  return m;
}

/// Copy of `model` with the potential shifted; only useful for exercising
/// the identity checks against a deliberately broken model.
inline ModelShrinker with_shifted_potential(ModelShrinker model, double delta)
{
  model.f_offset += delta;
  return model;
}

using Point = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Metric and connection

inline Eigen::VectorXd metric_diag(const ModelShrinker& model, const Point& x)
{
  Eigen::VectorXd g = Eigen::VectorXd::Ones(model.n);
  if (!model.has_sphere()) return g;
  const int m = model.euclidean_dim();
  const double rho2 = model.sphere_radius * model.sphere_radius;
  double prod = rho2;
  for (int s = 0; s < model.k; ++s) {
    g(m + s) = prod;
    if (s < model.k - 1) {
      const double sn = std::sin(x(m + s));
      prod *= sn * sn;
    }
  }
  return g;
}

/// dg(l, a) = d_l g_aa.
inline Eigen::MatrixXd metric_diag_derivs(const ModelShrinker& model, const Point& x)
{
  Eigen::MatrixXd dg = Eigen::MatrixXd::Zero(model.n, model.n);
  if (!model.has_sphere()) return dg;
  const int m = model.euclidean_dim();
  const Eigen::VectorXd g = metric_diag(model, x);
  for (int l = 0; l < model.k - 1; ++l) {
    const double th = x(m + l);
    const double two_cot = 2.0 * std::cos(th) / std::sin(th);
    for (int s = l + 1; s < model.k; ++s) dg(m + l, m + s) = g(m + s) * two_cot;
  }
  return dg;
}

/// Christoffel symbols of the second kind, Gamma^c_{ab}.
class Christoffel {
 public:
  explicit Christoffel(int n) : n_(n), v_(static_cast<std::size_t>(n * n * n), 0.0) {}
  double operator()(int c, int a, int b) const { return v_[idx(c, a, b)]; }
  double& operator()(int c, int a, int b) { return v_[idx(c, a, b)]; }
  int dim() const { return n_; }

 private:
  std::size_t idx(int c, int a, int b) const { return static_cast<std::size_t>((c * n_ + a) * n_ + b); }
  int n_;
  std::vector<double> v_;
};

inline Christoffel christoffel(const ModelShrinker& model, const Point& x)
{
  const int n = model.n;
  Christoffel gam(n);
  if (!model.has_sphere()) return gam;
  const Eigen::VectorXd g = metric_diag(model, x);
  const Eigen::MatrixXd dg = metric_diag_derivs(model, x);
  // Diagonal metric: Gamma^c_ab = 1/(2 g_cc) (d_a g_bc + d_b g_ac - d_c g_ab).
  for (int c = 0; c < n; ++c)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        double s = 0.0;
        if (b == c) s += dg(a, c);
        if (a == c) s += dg(b, c);
        if (a == b) s -= dg(c, a);
        gam(c, a, b) = 0.5 * s / g(c);
      }
  return gam;
}

// ---------------------------------------------------------------------------
// Potential

struct PotentialData {
  double f = 0.0;
  Eigen::VectorXd grad_f;  // covariant, d_i f
  Eigen::MatrixXd hess_f;  // covariant
  double b = 0.0;
  std::optional<Eigen::VectorXd> grad_b;  // covariant; empty where f = 0
  double grad_b_norm = 0.0;
};

inline double potential(const ModelShrinker& model, const Point& x)
{
  const int m = model.euclidean_dim();
  return 0.25 * x.head(m).squaredNorm() + model.f_offset;
}

inline PotentialData potential_data(const ModelShrinker& model, const Point& x)
{
  if (x.size() != model.n) throw std::invalid_argument("point dimension does not match model");
  const int n = model.n;
  const int m = model.euclidean_dim();
  PotentialData pd;
  pd.f = potential(model, x);
  pd.grad_f = Eigen::VectorXd::Zero(n);
  pd.grad_f.head(m) = 0.5 * x.head(m);

  const Christoffel gam = christoffel(model, x);
  pd.hess_f = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < m; ++i) pd.hess_f(i, i) = 0.5;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int c = 0; c < n; ++c) pd.hess_f(i, j) -= gam(c, i, j) * pd.grad_f(c);

  pd.b = 2.0 * std::sqrt(std::max(pd.f, 0.0));
  if (pd.f > 0.0) {
    Eigen::VectorXd gb = pd.grad_f / std::sqrt(pd.f);
    const Eigen::VectorXd g = metric_diag(model, x);
    pd.grad_b_norm = std::sqrt((gb.array().square() / g.array()).sum());
    pd.grad_b = std::move(gb);
  }
  return pd;
}

/// |grad b| from the closed form.  On the Gaussian this is 1 away from the
/// origin; on the cylinder it is |t| / sqrt(|t|^2 + 2k).
inline double grad_b_norm(const ModelShrinker& model, const Point& x)
{
  const double f = potential(model, x);
  if (f <= 0.0) return 0.0;
  const int m = model.euclidean_dim();
  return 0.5 * x.head(m).norm() / std::sqrt(f);
}

// ---------------------------------------------------------------------------
// Curvature

/// R_{imjn} with the sign convention where the round sphere of radius rho has
/// R_{imjn} = (g_ij g_mn - g_in g_mj) / rho^2, so that Ric_ij = g^{mn} R_{imjn}.
inline double riemann(const ModelShrinker& model, const Eigen::VectorXd& g, int i, int m, int j, int n)
{
  if (!model.has_sphere()) return 0.0;
  const int e = model.euclidean_dim();
  if (i < e || m < e || j < e || n < e) return 0.0;
  const double inv_rho2 = 1.0 / (model.sphere_radius * model.sphere_radius);
  double val = 0.0;
  if (i == j && m == n) val += g(i) * g(m);
  if (i == n && m == j) val -= g(i) * g(m);
  return val * inv_rho2;
}

struct CurvaturePack {
  Eigen::MatrixXd ric;  // covariant
  double scalar = 0.0;
  Eigen::MatrixXd riemann_action;  // acts on upper-triangular h_ij storage
};

inline CurvaturePack curvature(const ModelShrinker& model, const Point& x)
{
  if (x.size() != model.n) throw std::invalid_argument("point dimension does not match model");
  const int n = model.n;
  const Eigen::VectorXd g = metric_diag(model, x);
  CurvaturePack cp;
  cp.ric = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int a = 0; a < n; ++a) cp.ric(i, j) += riemann(model, g, i, a, j, a) / g(a);
  for (int i = 0; i < n; ++i) cp.scalar += cp.ric(i, i) / g(i);

  // [R(h)]_ij = R_{i a j b} g^{aa} g^{bb} h_ab, summing both orderings of a
  // stored off-diagonal pair.
  const auto pairs = sym_pairs(n);
  const int nc = static_cast<int>(pairs.size());
  cp.riemann_action = Eigen::MatrixXd::Zero(nc, nc);
  for (int p = 0; p < nc; ++p) {
    const auto [i, j] = pairs[static_cast<std::size_t>(p)];
    for (int q = 0; q < nc; ++q) {
      const auto [a, b] = pairs[static_cast<std::size_t>(q)];
      double v = riemann(model, g, i, a, j, b) / (g(a) * g(b));
      if (a != b) v += riemann(model, g, i, b, j, a) / (g(a) * g(b));
      cp.riemann_action(p, q) = v;
    }
  }
  return cp;
}

// ---------------------------------------------------------------------------
// Identity self-checks

struct ResidualReport {
  double soliton_equation = 0.0;  // max |Ric + Hess f - g/2|
  double trace_identity = 0.0;    // max |Delta f + S - n/2|
  double potential_identity = 0.0;  // max ||grad f|^2 + S - f|
  double grad_b_excess = 0.0;     // max(|grad b| - 1, 0)
  double tolerance = 1e-10;
  std::vector<std::string> flagged;
  bool pass() const { return flagged.empty(); }
};

inline ResidualReport check_soliton_identities(const ModelShrinker& model, const std::vector<Point>& points,
                                               double tolerance = 1e-10)
{
  if (points.empty()) throw std::invalid_argument("check_soliton_identities needs at least one sample point");
  ResidualReport rep;
  rep.tolerance = tolerance;
  const int n = model.n;
  for (const Point& x : points) {
    const PotentialData pd = potential_data(model, x);
    const CurvaturePack cp = curvature(model, x);
    const Eigen::VectorXd g = metric_diag(model, x);
    Eigen::MatrixXd sol = cp.ric + pd.hess_f;
    for (int i = 0; i < n; ++i) sol(i, i) -= model.kappa * g(i);
    rep.soliton_equation = std::max(rep.soliton_equation, sol.cwiseAbs().maxCoeff());

    double lap_f = 0.0;
    double grad_f2 = 0.0;
    for (int i = 0; i < n; ++i) {
      lap_f += pd.hess_f(i, i) / g(i);
      grad_f2 += pd.grad_f(i) * pd.grad_f(i) / g(i);
    }
    rep.trace_identity = std::max(rep.trace_identity, std::abs(lap_f + cp.scalar - 0.5 * n));
    rep.potential_identity = std::max(rep.potential_identity, std::abs(grad_f2 + cp.scalar - pd.f));
    if (pd.grad_b) rep.grad_b_excess = std::max(rep.grad_b_excess, pd.grad_b_norm - 1.0);
  }
  rep.grad_b_excess = std::max(rep.grad_b_excess, 0.0);
  if (rep.soliton_equation > tolerance) rep.flagged.push_back("Ric + Hess f - g/2");
  if (rep.trace_identity > tolerance) rep.flagged.push_back("Delta f + S - n/2");
  if (rep.potential_identity > tolerance) rep.flagged.push_back("|grad f|^2 + S - f");
  if (rep.grad_b_excess > tolerance) rep.flagged.push_back("|grad b| - 1");
  return rep;
}

/// Uniformly drawn chart points: Euclidean coordinates in [-extent, extent],
/// sphere angles strictly inside the chart.
inline std::vector<Point> random_chart_points(const ModelShrinker& model, int count, unsigned seed,
                                              double extent = 5.0)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> line(-extent, extent);
  std::uniform_real_distribution<double> polar(0.05, M_PI - 0.05);
  std::uniform_real_distribution<double> azimuth(0.0, 2.0 * M_PI);
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(count));
  const int m = model.euclidean_dim();
  for (int c = 0; c < count; ++c) {
    Point x(model.n);
    for (int i = 0; i < m; ++i) x(i) = line(rng);
    for (int s = 0; s < model.k; ++s) x(m + s) = (s + 1 < model.k) ? polar(rng) : azimuth(rng);
    pts.push_back(std::move(x));
  }
  return pts;
}

}  // namespace shrinker
