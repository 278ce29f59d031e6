// Structured grids on the model charts, the e^{-f}-weighted quadrature, and
// sampled fields.
//
// Components are staggered: a tensor component with chart indices
// (i_1, ..., i_r) lives on the lattice shifted by half a cell along every
// axis that occurs an odd number of times among its indices.  Scalars,
// diagonal tensor entries and the like sit on the primal lattice; vector
// component Y^i sits half a cell off along axis i; and so on.  A partial
// derivative along axis a then maps one lattice onto its neighbour with a
// compact two-point (or four-point) difference, which keeps the discrete
// Killing fields exact and rules out odd-even decoupled null modes.
#pragma once

#include "shrinker/model_geometry.hpp"
#include "shrinker/tensor_layout.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace shrinker {

enum class AxisKind { Line, Polar, Periodic };

/// One chart axis.  `cells` counts cells of width `step`; the primal and
/// half-shifted coordinate sets are
///   Line:     primal lo + (i + 1/2) step (i < cells), half lo + i step (i <= cells)
///   Polar:    primal (i + 1) step (i < cells - 1),    half (i + 1/2) step (i < cells)
///   Periodic: primal i step (i < cells),              half (i + 1/2) step (i < cells)
/// so polar primal nodes stop one cell short of each pole.
struct Axis {
  AxisKind kind = AxisKind::Line;
  int cells = 0;
  double lo = 0.0;
  double step = 0.0;

  int count(bool half) const
  {
    switch (kind) {
      case AxisKind::Line: return half ? cells + 1 : cells;
      case AxisKind::Polar: return half ? cells : cells - 1;
      case AxisKind::Periodic: return cells;
    }
    return 0;
  }
  double first(bool half) const
  {
    switch (kind) {
      case AxisKind::Line: return half ? lo : lo + 0.5 * step;
      case AxisKind::Polar: return half ? lo + 0.5 * step : lo + step;
      case AxisKind::Periodic: return half ? lo + 0.5 * step : lo;
    }
    return 0.0;
  }
  double coordinate(bool half, int i) const { return first(half) + step * i; }

  /// Index of the coordinate `x` on the given set, wrapping periodic axes;
  /// empty when x falls outside the axis.
  std::optional<int> index_of(bool half, double x) const
  {
    const long i = std::lround((x - first(half)) / step);
    const int c = count(half);
    if (kind == AxisKind::Periodic) return static_cast<int>(((i % c) + c) % c);
    if (i < 0 || i >= c) return std::nullopt;
    return static_cast<int>(i);
  }
};

/// Treatment of the truncation boundary b = R_max.
enum class Closure { Dirichlet, Natural };

inline std::string to_string(Closure c) { return c == Closure::Dirichlet ? "dirichlet" : "natural"; }

struct GridOptions {
  int resolution = 64;             // cells per Euclidean axis
  double truncation_radius = 8.0;  // R_max in b-units
  int stencil_order = 2;
  int angular_resolution = 0;      // cells around the azimuth; 0 -> resolution
  std::size_t max_nodes = 4'000'000;
  Closure closure = Closure::Dirichlet;
};

struct WeightedMeasure {
  Eigen::VectorXd node_weights;  // dV * e^{-f} on the primal lattice
  double total_mass() const { return node_weights.sum(); }
};

using Parity = unsigned;  // bit a set: half-shifted along axis a

/// Nodes of one staggered lattice with everything the quadrature needs.
struct Lattice {
  Parity parity = 0;
  std::vector<int> counts;
  std::vector<long> stride;
  std::vector<int> node_of_box;  // -1 outside {b < R_max}
  std::vector<long> box_of_node;
  Eigen::MatrixXd coords;  // n x N chart coordinates
  Eigen::MatrixXd metric;  // n x N diagonal metric
  Eigen::VectorXd f, b, grad_b, volume, weight;

  int size() const { return static_cast<int>(box_of_node.size()); }
  int box_coordinate(int p, int axis) const
  {
    return static_cast<int>((box_of_node[static_cast<std::size_t>(p)] / stride[static_cast<std::size_t>(axis)]) %
                            counts[static_cast<std::size_t>(axis)]);
  }
};

/// Chart indices of one stored component and the lattice it lives on.
struct Component {
  std::vector<int> indices;
  Parity parity = 0;
  long offset = 0;
  int count = 0;
};

/// Which tensor space a component layout describes.  Mixed and Cov3 are the
/// derivative spaces nabla Y (entries nabla_i Y^j) and nabla h (nabla_k h_ij).
enum class Space { Scalar, Vector, Sym2, Mixed, Cov3 };

inline Space space_of(Rank r)
{
  return r == Rank::Scalar ? Space::Scalar : (r == Rank::Vector ? Space::Vector : Space::Sym2);
}

struct Layout {
  Space space = Space::Scalar;
  std::vector<Component> components;
  long total = 0;
};

inline Parity parity_of(const std::vector<int>& idx)
{
  Parity p = 0;
  for (int i : idx) p ^= (1u << i);
  return p;
}

class Grid {
 public:
  const ModelShrinker& model() const { return model_; }
  int dim() const { return model_.n; }
  int stencil_order() const { return options_.stencil_order; }
  double truncation_radius() const { return options_.truncation_radius; }
  const GridOptions& options() const { return options_; }
  const std::vector<Axis>& axes() const { return axes_; }
  const Axis& axis(int a) const { return axes_[static_cast<std::size_t>(a)]; }

  const Lattice& lattice(Parity p) const { return lattices_[p]; }
  const Lattice& primal() const { return lattices_[0]; }
  /// Primal node count.
  int size() const { return primal().size(); }
  const WeightedMeasure& measure() const { return measure_; }

  /// Physical step along the Euclidean axes (the ones b depends on).
  double line_spacing() const { return axes_.front().step; }
  /// Largest physical step, sphere axes measured on the equator.
  double max_spacing() const
  {
    double h = 0.0;
    for (const Axis& a : axes_) h = std::max(h, a.kind == AxisKind::Line ? a.step : a.step * model_.sphere_radius);
    return h;
  }

  const Layout& layout(Space s) const { return layouts_[static_cast<std::size_t>(s)]; }
  const Layout& layout(Rank r) const { return layout(space_of(r)); }

  /// Metric factor of the pointwise inner product for every stored entry.
  Eigen::VectorXd component_metric(Space s) const
  {
    const Layout& lay = layout(s);
    Eigen::VectorXd out(lay.total);
    for (const Component& c : lay.components) {
      const Lattice& L = lattice(c.parity);
      for (int p = 0; p < c.count; ++p) out(c.offset + p) = metric_factor(s, c.indices, L.metric.col(p));
    }
    return out;
  }
  Eigen::VectorXd component_metric(Rank r) const { return component_metric(space_of(r)); }

  /// Diagonal of the weighted Gram matrix.
  Eigen::VectorXd gram(Space s) const
  {
    Eigen::VectorXd g = component_metric(s);
    for (const Component& c : layout(s).components) g.segment(c.offset, c.count).array() *= lattice(c.parity).weight.array();
    return g;
  }
  Eigen::VectorXd gram(Rank r) const { return gram(space_of(r)); }

  static double metric_factor(Space s, const std::vector<int>& idx, const Eigen::VectorXd& g)
  {
    switch (s) {
      case Space::Scalar: return 1.0;
      case Space::Vector: return g(idx[0]);
      case Space::Sym2: return (idx[0] == idx[1] ? 1.0 : 2.0) / (g(idx[0]) * g(idx[1]));
      case Space::Mixed: return g(idx[1]) / g(idx[0]);
      case Space::Cov3: return 1.0 / (g(idx[0]) * g(idx[1]) * g(idx[2]));
    }
    return 1.0;
  }

  friend std::shared_ptr<const Grid> build_grid(const ModelShrinker&, const GridOptions&);

 private:
  Grid() = default;

  ModelShrinker model_;
  GridOptions options_;
  std::vector<Axis> axes_;
  std::vector<Lattice> lattices_;
  std::array<Layout, 5> layouts_;
  WeightedMeasure measure_;
};

using GridPtr = std::shared_ptr<const Grid>;

namespace detail {

inline Lattice build_lattice(const ModelShrinker& model, const std::vector<Axis>& axes, Parity parity, double R,
                             std::size_t cap)
{
  const int n = model.n;
  Lattice L;
  L.parity = parity;
  L.counts.resize(static_cast<std::size_t>(n));
  L.stride.assign(static_cast<std::size_t>(n), 1);
  long total = 1;
  for (int a = n - 1; a >= 0; --a) {
    L.counts[static_cast<std::size_t>(a)] = axes[static_cast<std::size_t>(a)].count((parity >> a) & 1u);
    L.stride[static_cast<std::size_t>(a)] = total;
    total *= L.counts[static_cast<std::size_t>(a)];
  }
  if (static_cast<std::size_t>(total) > 4 * cap + 4096) throw std::length_error("grid node count exceeds configured cap");
  L.node_of_box.assign(static_cast<std::size_t>(total), -1);
  double cell = 1.0;
  for (const Axis& ax : axes) cell *= ax.step;

  std::vector<double> xs;
  Eigen::VectorXd x(n);
  for (long box = 0; box < total; ++box) {
    for (int a = 0; a < n; ++a) {
      const int i = static_cast<int>((box / L.stride[static_cast<std::size_t>(a)]) % L.counts[static_cast<std::size_t>(a)]);
      x(a) = axes[static_cast<std::size_t>(a)].coordinate((parity >> a) & 1u, i);
    }
    if (2.0 * std::sqrt(potential(model, x)) >= R) continue;
    L.node_of_box[static_cast<std::size_t>(box)] = static_cast<int>(L.box_of_node.size());
    L.box_of_node.push_back(box);
    xs.insert(xs.end(), x.data(), x.data() + n);
    if (L.box_of_node.size() > cap) throw std::length_error("grid node count exceeds configured cap");
  }
  const int N = L.size();
  L.coords = Eigen::Map<Eigen::MatrixXd>(xs.data(), n, N);
  L.metric.resize(n, N);
  L.f.resize(N);
  L.b.resize(N);
  L.grad_b.resize(N);
  L.volume.resize(N);
  L.weight.resize(N);
  for (int p = 0; p < N; ++p) {
    const Eigen::VectorXd pt = L.coords.col(p);
    const Eigen::VectorXd gm = metric_diag(model, pt);
    L.metric.col(p) = gm;
    L.f(p) = potential(model, pt);
    L.b(p) = 2.0 * std::sqrt(L.f(p));
    L.grad_b(p) = grad_b_norm(model, pt);
    L.volume(p) = cell * std::sqrt(gm.prod());
    L.weight(p) = L.volume(p) * std::exp(-L.f(p));
  }
  return L;
}

inline void index_tuples(int n, int rank, std::vector<int>& cur, std::vector<std::vector<int>>& out)
{
  if (static_cast<int>(cur.size()) == rank) {
    out.push_back(cur);
    return;
  }
  for (int i = 0; i < n; ++i) {
    cur.push_back(i);
    index_tuples(n, rank, cur, out);
    cur.pop_back();
  }
}

inline Layout make_layout(Space s, int n, const std::vector<Lattice>& lattices)
{
  std::vector<std::vector<int>> idx;
  switch (s) {
    case Space::Scalar: idx.push_back({}); break;
    case Space::Vector:
      for (int i = 0; i < n; ++i) idx.push_back({i});
      break;
    case Space::Sym2:
      for (const auto& [i, j] : sym_pairs(n)) idx.push_back({i, j});
      break;
    case Space::Mixed: {
      std::vector<int> cur;
      index_tuples(n, 2, cur, idx);
      break;
    }
    case Space::Cov3: {
      std::vector<int> cur;
      index_tuples(n, 3, cur, idx);
      break;
    }
  }
  Layout lay;
  lay.space = s;
  for (auto& ix : idx) {
    Component c;
    c.parity = parity_of(ix);
    c.indices = std::move(ix);
    c.offset = lay.total;
    c.count = lattices[c.parity].size();
    lay.total += c.count;
    lay.components.push_back(std::move(c));
  }
  return lay;
}

}  // namespace detail

/// Builds the grid, its staggered lattices and the weighted measure.
/// Euclidean axes cover [-L, L] with L the largest |t| inside {b < R_max};
/// nodes at or beyond b = R_max are dropped (fields extend by zero there).
inline GridPtr build_grid(const ModelShrinker& model, const GridOptions& options)
{
  if (options.resolution < 16) throw std::invalid_argument("resolution below minimum (16)");
  if (options.truncation_radius < 4.0) throw std::invalid_argument("truncation_radius must be >= 4");
  if (options.stencil_order != 2 && options.stencil_order != 4)
    throw std::invalid_argument("stencil_order must be 2 or 4");
  const int ang = options.angular_resolution > 0 ? options.angular_resolution : options.resolution;
  if (model.has_sphere() && ang < 8) throw std::invalid_argument("angular_resolution below minimum (8)");

  std::shared_ptr<Grid> g(new Grid());
  g->model_ = model;
  g->options_ = options;
  g->options_.angular_resolution = ang;

  const double R = options.truncation_radius;
  const double quarter = R * R / 4.0 - model.f_offset;  // |t|^2 / 4 < R^2/4 - f_offset
  if (quarter <= 0.0) throw std::invalid_argument("truncation_radius leaves no nodes for this model");
  const double L = 2.0 * std::sqrt(quarter);
  for (int i = 0; i < model.euclidean_dim(); ++i)
    g->axes_.push_back({AxisKind::Line, options.resolution, -L, 2.0 * L / options.resolution});
  for (int s = 0; s + 1 < model.k; ++s) {
    const int cells = std::max(ang / 2, 4);
    g->axes_.push_back({AxisKind::Polar, cells, 0.0, M_PI / cells});
  }
  if (model.has_sphere()) g->axes_.push_back({AxisKind::Periodic, ang, 0.0, 2.0 * M_PI / ang});

  const int n = model.n;
  for (Parity p = 0; p < (1u << n); ++p)
    g->lattices_.push_back(detail::build_lattice(model, g->axes_, p, R, options.max_nodes));
  for (Space s : {Space::Scalar, Space::Vector, Space::Sym2, Space::Mixed, Space::Cov3})
    g->layouts_[static_cast<std::size_t>(s)] = detail::make_layout(s, n, g->lattices_);
  g->measure_.node_weights = g->lattices_[0].weight;
  return g;
}

// ---------------------------------------------------------------------------
// Fields

struct Field {
  Rank rank = Rank::Scalar;
  Eigen::VectorXd values;  // concatenated per component, see Grid::layout
  GridPtr grid;

  Field operator+(const Field& o) const { return with(values + o.values); }
  Field operator-(const Field& o) const { return with(values - o.values); }
  Field operator*(double s) const { return with(values * s); }
  Field with(Eigen::VectorXd v) const { return Field{rank, std::move(v), grid}; }

  static Field zeros(const GridPtr& grid, Rank rank)
  {
    return Field{rank, Eigen::VectorXd::Zero(grid->layout(rank).total), grid};
  }
};

inline Field operator*(double s, const Field& f) { return f * s; }

/// Evaluates `fn(point, component_indices)` for every stored entry.
inline Field sample_components(const GridPtr& grid, Rank rank,
                               const std::function<double(const Point&, const std::vector<int>&)>& fn)
{
  Field out = Field::zeros(grid, rank);
  for (const Component& c : grid->layout(rank).components) {
    const Lattice& L = grid->lattice(c.parity);
    for (int p = 0; p < c.count; ++p) out.values(c.offset + p) = fn(L.coords.col(p), c.indices);
  }
  return out;
}

inline Field sample_scalar(const GridPtr& grid, const std::function<double(const Point&)>& fn)
{
  return sample_components(grid, Rank::Scalar, [&](const Point& x, const std::vector<int>&) { return fn(x); });
}

/// `fn` returns contravariant chart components; component i is read at its
/// own lattice location.
inline Field sample_vector(const GridPtr& grid, const std::function<Eigen::VectorXd(const Point&)>& fn)
{
  return sample_components(grid, Rank::Vector, [&](const Point& x, const std::vector<int>& ix) { return fn(x)(ix[0]); });
}

/// `fn` returns the covariant chart matrix.
inline Field sample_sym2(const GridPtr& grid, const std::function<Eigen::MatrixXd(const Point&)>& fn)
{
  return sample_components(grid, Rank::Sym2,
                           [&](const Point& x, const std::vector<int>& ix) { return fn(x)(ix[0], ix[1]); });
}

/// Multiplies every stored entry by a scalar function evaluated at its location.
inline Field scale_pointwise(const Field& w, const std::function<double(const Point&)>& fn)
{
  Field out = w;
  for (const Component& c : w.grid->layout(w.rank).components) {
    const Lattice& L = w.grid->lattice(c.parity);
    for (int p = 0; p < c.count; ++p) out.values(c.offset + p) *= fn(L.coords.col(p));
  }
  return out;
}

inline void require_compatible(const Field& a, const Field& b)
{
  if (a.grid != b.grid) throw std::invalid_argument("fields live on different grids");
  if (a.rank != b.rank) throw std::invalid_argument("field rank mismatch: " + to_string(a.rank) + " vs " + to_string(b.rank));
}

/// Weighted L^2(e^{-f}) inner product with the model metric in the pointwise
/// contraction.
inline double inner_product(const Field& a, const Field& b)
{
  require_compatible(a, b);
  return (a.grid->gram(a.rank).array() * a.values.array() * b.values.array()).sum();
}

inline double norm(const Field& a) { return std::sqrt(std::max(inner_product(a, a), 0.0)); }

/// Inner product restricted to entries whose location satisfies b < radius.
inline double inner_product_inside(const Field& a, const Field& b, double radius)
{
  require_compatible(a, b);
  const Eigen::VectorXd g = a.grid->gram(a.rank);
  double s = 0.0;
  for (const Component& c : a.grid->layout(a.rank).components) {
    const Lattice& L = a.grid->lattice(c.parity);
    for (int p = 0; p < c.count; ++p)
      if (L.b(p) < radius) s += g(c.offset + p) * a.values(c.offset + p) * b.values(c.offset + p);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Weighted spherical averages

struct RadialProfile {
  std::vector<double> radii;
  std::vector<double> values;
  std::string w_label;
};

/// I_w(r) = r^{1-n} int_{b=r} |w|^2 |grad b|, estimated by co-area binning
/// over shells |b - r| < shell/2 (unweighted volume).  Each stored entry is
/// binned at its own location.  shell <= 0 selects three grid spacings.
inline RadialProfile radial_profile(const Field& w, const std::vector<double>& radii, double shell = 0.0,
                                    std::string label = "w")
{
  const Grid& g = *w.grid;
  const double h = g.line_spacing();
  if (shell <= 0.0) shell = 3.0 * h;
  if (shell < 2.0 * h - 1e-12) throw std::invalid_argument("shell thickness must be at least two grid spacings");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0) || radii[i] >= g.truncation_radius())
      throw std::invalid_argument("radius " + std::to_string(radii[i]) + " outside (0, truncation_radius)");
    if (i > 0 && radii[i] <= radii[i - 1]) throw std::invalid_argument("radii must be strictly ascending");
  }
  const Eigen::VectorXd cm = g.component_metric(w.rank);
  RadialProfile prof;
  prof.w_label = std::move(label);
  prof.radii = radii;
  const int n = g.dim();
  for (double r : radii) {
    double acc = 0.0;
    bool hit = false;
    for (const Component& c : g.layout(w.rank).components) {
      const Lattice& L = g.lattice(c.parity);
      for (int p = 0; p < c.count; ++p) {
        const double bp = L.b(p);
        if (bp < r - 0.5 * shell || bp >= r + 0.5 * shell) continue;
        hit = true;
        const double v = w.values(c.offset + p);
        acc += cm(c.offset + p) * v * v * L.grad_b(p) * L.grad_b(p) * L.volume(p);
      }
    }
    if (!hit) throw std::invalid_argument("empty shell at radius " + std::to_string(r));
    prof.values.push_back(std::pow(r, 1 - n) * acc / shell);
  }
  return prof;
}

inline void write_profile_csv(const RadialProfile& prof, std::ostream& out)
{
  out << "radius,value,w_label\n";
  out.precision(17);
  for (std::size_t i = 0; i < prof.radii.size(); ++i)
    out << prof.radii[i] << ',' << prof.values[i] << ',' << prof.w_label << '\n';
}

/// Evenly spaced ladder lo, lo + step, ... strictly below hi.
inline std::vector<double> radius_ladder(double lo, double hi, double step)
{
  std::vector<double> r;
  for (int i = 0;; ++i) {
    const double x = lo + i * step;
    if (x >= hi - 1e-12) break;
    r.push_back(x);
  }
  return r;
}

}  // namespace shrinker
