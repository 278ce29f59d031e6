// From an approximate Killing field on a ball to a global eigenfield of P:
// cutoff, defect measurement, extension, and polynomial-growth checks on
// weighted spherical averages.
#pragma once

#include "shrinker/discrete_field.hpp"
#include "shrinker/spectral.hpp"
#include "shrinker/weighted_operators.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace shrinker {

/// Quintic smoothstep, C^2 with vanishing first and second derivatives at 0 and 1.
inline double smoothstep5(double s)
{
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

inline double smoothstep5_slope(double s)
{
  if (s <= 0.0 || s >= 1.0) return 0.0;
  return 30.0 * s * s * (1.0 - s) * (1.0 - s);
}

struct Cutoff {
  double r = 0.0;
  Field eta;
  std::pair<double, double> transition_band;  // in b
  double grad_bound = 0.0;                     // max |grad eta| measured on the grid
  double band_weight_max = 0.0;                // max e^{-f} over nodes inside the band
  double band_weight_reference = 0.0;          // e^{1 - r^2/4}

  /// eta as a function of b.
  double profile(double b) const
  {
    const double lo = transition_band.first;
    return 1.0 - smoothstep5((b - lo) / (transition_band.second - lo));
  }
  bool weight_reference_holds() const { return band_weight_max <= band_weight_reference; }
};

/// eta = 1 on {b <= r - 2/r}, 0 on {b >= r - 1/r}, quintic in b between.
/// The bound max |grad eta| <= 1.875 r follows since |grad b| <= 1.
inline Cutoff build_cutoff(const WeightedOperators& ops, double r)
{
  const Grid& g = *ops.grid();
  if (r < 4.0) throw std::invalid_argument("cutoff scale r must be >= 4");
  if (r > g.truncation_radius()) throw std::invalid_argument("r exceeds truncation_radius");
  const double lo = r - 2.0 / r;
  const double hi = r - 1.0 / r;
  const double h = g.line_spacing();  // b only depends on the line coordinates
  if (lo < 2.0 * h) throw std::invalid_argument("cutoff plateau narrower than two grid cells");
  if (hi - lo < h) throw std::invalid_argument("cutoff transition band under-resolved (narrower than one grid cell)");

  Cutoff c;
  c.r = r;
  c.transition_band = {lo, hi};
  c.eta = sample_scalar(ops.grid(), [&](const Point& x) { return c.profile(2.0 * std::sqrt(potential(g.model(), x))); });
  const Eigen::VectorXd g2 = ops.pointwise_norm2(ops.gradient(c.eta));
  c.grad_bound = std::sqrt(g2.maxCoeff());

  const Lattice& P = g.primal();
  for (int p = 0; p < P.size(); ++p)
    if (P.b(p) > lo && P.b(p) < hi) c.band_weight_max = std::max(c.band_weight_max, std::exp(-P.f(p)));
  c.band_weight_reference = std::exp(1.0 - r * r / 4.0);  // f > r^2/4 - 1 in the band
  return c;
}

// ---------------------------------------------------------------------------

struct DefectReport {
  double norm = 0.0;    // restricted weighted norm of the input on {b < r}
  double mu_bar = 0.0;  // restricted ||div_f* Y||^2 after normalising that norm to 1
  double c1 = 0.0;      // measured sup_{b<r} (|Y| + |nabla Y|) / r, normalised field
  bool hypothesis_ok() const { return mu_bar < 1.0; }
};

inline DefectReport measure_defect(const WeightedOperators& ops, const Field& y, double r)
{
  const double n2 = inner_product_inside(y, y, r);
  if (!(n2 > 0.0)) throw std::invalid_argument("zero field on {b < r}");
  DefectReport d;
  d.norm = std::sqrt(n2);
  const Field yn = y * (1.0 / d.norm);
  const Field s = ops.div_f_star(yn);
  d.mu_bar = inner_product_inside(s, s, r);

  const Eigen::VectorXd y2 = ops.pointwise_norm2(yn);
  const Eigen::VectorXd dy2 = ops.nabla_vector_norm2(yn);
  const Lattice& P = ops.grid()->primal();
  double sup = 0.0;
  for (int p = 0; p < P.size(); ++p)
    if (P.b(p) < r) sup = std::max(sup, std::sqrt(y2(p)) + std::sqrt(dy2(p)));
  d.c1 = sup / r;
  return d;
}

// ---------------------------------------------------------------------------

/// Tail scale r^{m+n} e^{-r^2/4}.
inline double tail_scale(double r, int n, int m) { return std::pow(r, m + n) * std::exp(-r * r / 4.0); }

struct PropagationOptions {
  int eigen_count = 8;
  double block_tolerance = 1e-6;   // eigenvalues within this of the lowest form one block
  std::optional<double> c2;        // reuse a calibrated constant instead of fitting
  double radius_step = 0.0;        // ladder step in b; 0 -> three grid spacings
  EigenSolverOptions solver;
};

struct ProfileFit {
  double slope = 0.0;
  double intercept = 0.0;
  double max_residual = 0.0;
  std::vector<double> skipped;  // radii with non-positive values
};

struct PropagationResult {
  SpectralPair Z;
  double mu = 0.0;
  double mu_bar = 0.0;
  DefectReport defect;
  Cutoff cutoff;
  double v_norm_sq = 0.0;          // ||eta Y||^2 with Y normalised on {b < r}
  double v_rayleigh = 0.0;         // ||div_f* V||^2 / ||V||^2
  double vbig_constant = 0.0;      // (1 - ||V||^2) / (r^{2+n} e^{-r^2/4})
  double liesmall_constant = 0.0;  // max(0, ||div_f* V||^2/||V||^2 - 3 mu_bar) / (r^{4+n} e^{-r^2/4})
  double c2 = 0.0;
  double z1_bound = 0.0;          // c2 (mu_bar + r^{4+n} e^{-r^2/4})
  double variational_slack = 0.0;  // ||div_f* V||^2/||V||^2 - mu, >= 0
  int block_size = 1;
  RadialProfile z2_profile;        // I_{div_f* Z} over b in (r, 2r)
  std::vector<double> z2_levels;   // s = b^2/4 for each profile radius
  std::size_t z2_included = 0;     // leading profile entries outside the outer 10% of the s-range
  ProfileFit fitted;
  std::vector<std::array<double, 3>> plot_rows;  // radius, I, fitted bound
};

ProfileFit fit_growth_exponent(const RadialProfile& profile);

/// V = eta Y, then the lowest block of P on the whole grid; Z is the weighted
/// projection of V onto that block, which is an eigenfield for a simple
/// eigenvalue and a member of the eigenspace for a degenerate one.
inline PropagationResult extend_symmetry(const WeightedOperators& ops, const Field& y_local, double r,
                                         const PropagationOptions& opt = {})
{
  const Grid& g = *ops.grid();
  const int n = g.dim();
  if (2.0 * r >= g.truncation_radius())
    throw std::invalid_argument("extension needs truncation_radius > 2r for the outer annulus");
  PropagationResult res;
  res.cutoff = build_cutoff(ops, r);
  res.defect = measure_defect(ops, y_local, r);
  res.mu_bar = res.defect.mu_bar;
  if (res.mu_bar > 0.25) throw std::invalid_argument("approximate Killing defect mu_bar exceeds 1/4");

  const Field yn = y_local * (1.0 / res.defect.norm);
  const Cutoff& cut = res.cutoff;
  const Field v = scale_pointwise(yn, [&](const Point& x) { return cut.profile(2.0 * std::sqrt(potential(g.model(), x))); });
  res.v_norm_sq = inner_product(v, v);
  const Field sv = ops.div_f_star(v);
  res.v_rayleigh = inner_product(sv, sv) / res.v_norm_sq;
  res.vbig_constant = (1.0 - res.v_norm_sq) / tail_scale(r, n, 2);
  res.liesmall_constant = std::max(0.0, res.v_rayleigh - 3.0 * res.mu_bar) / tail_scale(r, n, 4);

  const std::vector<SpectralPair> pairs =
      lowest_eigenpairs(ops.handle(OperatorKind::OpP), opt.eigen_count, 1e-10, opt.solver);
  const std::vector<int> block = degenerate_blocks(pairs, opt.block_tolerance).front();
  res.block_size = static_cast<int>(block.size());
  Field z = Field::zeros(ops.grid(), Rank::Vector);
  for (int i : block) z = z + inner_product(v, pairs[static_cast<std::size_t>(i)].field) * pairs[static_cast<std::size_t>(i)].field;
  if (norm(z) == 0.0) z = pairs.front().field;
  z = z * (1.0 / norm(z));
  const Field pz = ops.op_P(z);
  res.mu = inner_product(z, pz);
  res.Z = {res.mu, z, norm(pz - res.mu * z)};
  res.variational_slack = res.v_rayleigh - res.mu;
  if (res.variational_slack < -1e-10)
    throw std::logic_error("variational bound violated: mu exceeds the Rayleigh quotient of the cutoff field");

  const double tail4 = tail_scale(r, n, 4);
  res.c2 = opt.c2 ? *opt.c2 : res.mu / (res.mu_bar + tail4);
  res.z1_bound = res.c2 * (res.mu_bar + tail4);

  const double step = opt.radius_step > 0.0 ? opt.radius_step : 3.0 * g.line_spacing();
  std::vector<double> radii;
  for (double b = r + step; b < 2.0 * r - 1e-12; b += step) radii.push_back(b);
  res.z2_profile = radial_profile(ops.div_f_star(z), radii, step, "div_f_star_Z");
  const double s_lo = r * r / 4.0, s_hi = r * r;
  for (double b : radii) {
    res.z2_levels.push_back(b * b / 4.0);
    if (b * b / 4.0 < s_lo + 0.9 * (s_hi - s_lo)) ++res.z2_included;
  }
  RadialProfile inner = res.z2_profile;
  inner.radii.resize(res.z2_included);
  inner.values.resize(res.z2_included);
  try {
    res.fitted = fit_growth_exponent(inner);
  } catch (const std::invalid_argument&) {
    res.fitted = {};  // too few positive samples; reported as a zero fit
  }
  for (std::size_t i = 0; i < radii.size(); ++i)
    res.plot_rows.push_back({radii[i], res.z2_profile.values[i],
                             std::exp(res.fitted.intercept) * std::pow(radii[i], res.fitted.slope)});
  return res;
}

// ---------------------------------------------------------------------------

struct GrowthReport {
  double worst_ratio = 0.0;
  std::pair<double, double> worst_pair{0.0, 0.0};
  std::vector<std::pair<double, double>> skipped;  // pairs touching a zero value
  bool pass = false;
};

/// Checks I(r2) <= 2 (r2/r1)^{5 lambda_bar} I(r1) for every r2 > r1 >= r0.
inline GrowthReport check_growth_bound(const RadialProfile& profile, double lambda_bar, double r0,
                                       double tolerance = 1e-9)
{
  if (lambda_bar < 0.0) throw std::invalid_argument("lambda_bar must be >= 0");
  const auto& rs = profile.radii;
  const auto& is = profile.values;
  for (double x : rs)
    if (x < r0) throw std::invalid_argument("profile radius " + std::to_string(x) + " below r0");
  GrowthReport rep;
  for (std::size_t a = 0; a < rs.size(); ++a)
    for (std::size_t b = a + 1; b < rs.size(); ++b) {
      if (is[a] <= 0.0 || is[b] <= 0.0) {
        rep.skipped.emplace_back(rs[a], rs[b]);
        continue;
      }
      const double ratio = is[b] / (2.0 * std::pow(rs[b] / rs[a], 5.0 * lambda_bar) * is[a]);
      if (ratio > rep.worst_ratio) {
        rep.worst_ratio = ratio;
        rep.worst_pair = {rs[a], rs[b]};
      }
    }
  rep.pass = rep.worst_ratio <= 1.0 + tolerance;
  return rep;
}

/// Least-squares line through (log r, log I) over positive samples.
inline ProfileFit fit_growth_exponent(const RadialProfile& profile)
{
  ProfileFit fit;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < profile.radii.size(); ++i) {
    if (profile.values[i] > 0.0) {
      x.push_back(std::log(profile.radii[i]));
      y.push_back(std::log(profile.values[i]));
    } else {
      fit.skipped.push_back(profile.radii[i]);
    }
  }
  if (x.empty()) throw std::invalid_argument("no positive samples");
  if (x.size() < 4) throw std::invalid_argument("growth fit needs at least 4 positive samples");
  Eigen::MatrixXd a(static_cast<long>(x.size()), 2);
  Eigen::VectorXd rhs(static_cast<long>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    a(static_cast<long>(i), 0) = x[i];
    a(static_cast<long>(i), 1) = 1.0;
    rhs(static_cast<long>(i)) = y[i];
  }
  const Eigen::Vector2d c = a.colPivHouseholderQr().solve(rhs);
  fit.slope = c(0);
  fit.intercept = c(1);
  fit.max_residual = (a * c - rhs).cwiseAbs().maxCoeff();
  return fit;
}

/// Pointwise-integrated lower bound lambda with <L w, w> >= -lambda ||w||^2,
/// measured for a tensor (or any-rank) field.
inline double measured_rayleigh_bound(const WeightedOperators& ops, const Field& w)
{
  const double w2 = inner_product(w, w);
  if (w2 == 0.0) return 0.0;
  return std::max(0.0, -inner_product(ops.drift_laplacian(w), w) / w2);
}

}  // namespace shrinker
