// Discrete weighted operator calculus on a Grid.
//
// Only the covariant derivatives (gradient, nabla on vectors, nabla on
// symmetric tensors) are discretised directly.  Everything else is built from
// them and their adjoints in the weighted quadrature inner product:
//
//   div_f on vectors  = -(grad)^*          drift Laplacian (scalar) = div_f grad
//   div_f* Y          = -(1/2) L_Y g       div_f on tensors = (div_f*)^*
//   P                 = div_f div_f*       drift Laplacian (tensors) = -nabla^* nabla
//   L h               = drift Laplacian h + 2 R(h)
//
// so adjointness, symmetry and positivity hold to rounding by construction.
#pragma once

#include "shrinker/discrete_field.hpp"
#include "shrinker/finite_difference.hpp"
#include "shrinker/model_geometry.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace shrinker {

enum class OperatorKind {
  DivFStar,
  DivFVec,
  DivFTensor,
  DriftLaplacianScalar,
  DriftLaplacianVector,
  DriftLaplacianTensor,
  OpP,
  OpL,
  Gradient,
  Hessian
};

inline std::string to_string(OperatorKind k)
{
  switch (k) {
    case OperatorKind::DivFStar: return "div_f_star";
    case OperatorKind::DivFVec: return "div_f_vec";
    case OperatorKind::DivFTensor: return "div_f_tensor";
    case OperatorKind::DriftLaplacianScalar: return "drift_laplacian_scalar";
    case OperatorKind::DriftLaplacianVector: return "drift_laplacian_vector";
    case OperatorKind::DriftLaplacianTensor: return "drift_laplacian_tensor";
    case OperatorKind::OpP: return "P";
    case OperatorKind::OpL: return "L";
    case OperatorKind::Gradient: return "gradient";
    case OperatorKind::Hessian: return "hessian";
  }
  return "unknown";
}

/// A sparse linear map between component spaces of one grid.
struct OperatorHandle {
  OperatorKind kind;
  SpMat matrix;
  Rank domain;
  Rank range;
  GridPtr grid;
};

namespace detail {

inline Eigen::VectorXd inverse(const Eigen::VectorXd& v) { return v.cwiseInverse(); }

inline SpMat diag(const Eigen::VectorXd& v)
{
  SpMat d(v.size(), v.size());
  d.reserve(Eigen::VectorXi::Constant(v.size(), 1));
  for (Eigen::Index i = 0; i < v.size(); ++i) d.insert(i, i) = v(i);
  return d;
}

/// Accumulates sparse blocks (optionally row-scaled) into one big matrix.
struct Assembler {
  std::vector<Triplet> trips;

  void add(long row0, long col0, const SpMat& block, const Eigen::VectorXd* row_scale = nullptr, double coef = 1.0)
  {
    for (int k = 0; k < block.outerSize(); ++k)
      for (SpMat::InnerIterator it(block, k); it; ++it) {
        const double v = coef * it.value() * (row_scale ? (*row_scale)(it.row()) : 1.0);
        if (v != 0.0) trips.emplace_back(row0 + it.row(), col0 + it.col(), v);
      }
  }
  SpMat build(long rows, long cols) const
  {
    SpMat m(rows, cols);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
  }
};

}  // namespace detail

class WeightedOperators {
 public:
  explicit WeightedOperators(GridPtr grid) : grid_(std::move(grid))
  {
    gram_s_ = grid_->gram(Space::Scalar);
    gram_v_ = grid_->gram(Space::Vector);
    gram_t_ = grid_->gram(Space::Sym2);
  }

  const GridPtr& grid() const { return grid_; }
  const Eigen::VectorXd& gram(Rank r) const
  {
    return r == Rank::Scalar ? gram_s_ : (r == Rank::Vector ? gram_v_ : gram_t_);
  }

  /// Staggered d/dx_axis out of lattice `from`.
  const SpMat& derivative(Parity from, int axis) const { return shift(from, axis, true); }

  /// Interpolation from lattice `from` onto lattice `to` (identity if equal).
  SpMat transfer(Parity from, Parity to) const
  {
    const int N = grid_->lattice(from).size();
    SpMat m(N, N);
    m.setIdentity();
    Parity cur = from;
    for (int a = 0; a < grid_->dim(); ++a)
      if (((from ^ to) >> a) & 1u) {
        m = shift(cur, a, false) * m;
        cur ^= (1u << a);
      }
    return m;
  }

  /// Scalar -> vector, (grad u)^i = g^{ii} d_i u.
  const SpMat& gradient() const
  {
    std::call_once(grad_once_, [this] {
      const Layout& V = grid_->layout(Space::Vector);
      detail::Assembler as;
      for (const Component& c : V.components) {
        const int i = c.indices[0];
        const Eigen::VectorXd inv = grid_->lattice(c.parity).metric.row(i).transpose().cwiseInverse();
        as.add(c.offset, 0, derivative(0, i), &inv);
      }
      grad_ = as.build(V.total, grid_->layout(Space::Scalar).total);
    });
    return grad_;
  }

  /// Vector -> Mixed, entry (i, j) = nabla_i Y^j = d_i Y^j + Gamma^j_{ik} Y^k.
  const SpMat& nabla_vector() const
  {
    std::call_once(nabla_v_once_, [this] {
      const int n = grid_->dim();
      const Layout& V = grid_->layout(Space::Vector);
      const Layout& M = grid_->layout(Space::Mixed);
      detail::Assembler as;
      for (const Component& c : M.components) {
        const int i = c.indices[0], j = c.indices[1];
        const Component& yj = V.components[static_cast<std::size_t>(j)];
        as.add(c.offset, yj.offset, derivative(yj.parity, i));
        if (!grid_->model().has_sphere()) continue;
        const std::vector<Christoffel>& gam = christoffels(c.parity);
        for (int k = 0; k < n; ++k) {
          Eigen::VectorXd coef(c.count);
          for (int p = 0; p < c.count; ++p) coef(p) = gam[static_cast<std::size_t>(p)](j, i, k);
          if (coef.cwiseAbs().maxCoeff() == 0.0) continue;
          const Component& yk = V.components[static_cast<std::size_t>(k)];
          as.add(c.offset, yk.offset, transfer(yk.parity, c.parity), &coef);
        }
      }
      nabla_v_ = as.build(M.total, V.total);
    });
    return nabla_v_;
  }

  /// Sym2 -> Cov3, entry (k, i, j) = nabla_k h_ij.
  const SpMat& nabla_sym() const
  {
    std::call_once(nabla_t_once_, [this] {
      const int n = grid_->dim();
      const Layout& T = grid_->layout(Space::Sym2);
      const Layout& C = grid_->layout(Space::Cov3);
      auto hc = [&](int a, int b) -> const Component& {
        return T.components[static_cast<std::size_t>(sym_index(std::min(a, b), std::max(a, b), n))];
      };
      detail::Assembler as;
      for (const Component& c : C.components) {
        const int k = c.indices[0], i = c.indices[1], j = c.indices[2];
        const Component& hij = hc(i, j);
        as.add(c.offset, hij.offset, derivative(hij.parity, k));
        if (!grid_->model().has_sphere()) continue;
        const std::vector<Christoffel>& gam = christoffels(c.parity);
        for (int l = 0; l < n; ++l)
          for (int side = 0; side < 2; ++side) {
            // -Gamma^l_{ki} h_lj and -Gamma^l_{kj} h_il
            const int m = side == 0 ? i : j;
            Eigen::VectorXd coef(c.count);
            for (int p = 0; p < c.count; ++p) coef(p) = gam[static_cast<std::size_t>(p)](l, k, m);
            if (coef.cwiseAbs().maxCoeff() == 0.0) continue;
            const Component& h = side == 0 ? hc(l, j) : hc(i, l);
            as.add(c.offset, h.offset, transfer(h.parity, c.parity), &coef, -1.0);
          }
      }
      nabla_t_ = as.build(C.total, T.total);
    });
    return nabla_t_;
  }

  /// div_f* Y = -(1/2)(nabla_i Y_j + nabla_j Y_i).
  const SpMat& div_f_star() const
  {
    std::call_once(star_once_, [this] {
      const int n = grid_->dim();
      const Layout& T = grid_->layout(Space::Sym2);
      const Layout& M = grid_->layout(Space::Mixed);
      detail::Assembler as;
      for (const Component& c : T.components) {
        const int i = c.indices[0], j = c.indices[1];
        const Lattice& L = grid_->lattice(c.parity);
        SpMat eye(c.count, c.count);
        eye.setIdentity();
        const Eigen::VectorXd gj = L.metric.row(j).transpose();
        const Eigen::VectorXd gi = L.metric.row(i).transpose();
        as.add(c.offset, M.components[static_cast<std::size_t>(i * n + j)].offset, eye, &gj, -0.5);
        as.add(c.offset, M.components[static_cast<std::size_t>(j * n + i)].offset, eye, &gi, -0.5);
      }
      const SpMat lower = as.build(T.total, M.total);
      star_ = (lower * nabla_vector()).pruned();
    });
    return star_;
  }

  const SpMat& div_f_vec() const
  {
    std::call_once(divv_once_, [this] {
      divv_ = -(detail::diag(detail::inverse(gram_s_)) * SpMat(gradient().transpose()) * detail::diag(gram_v_));
    });
    return divv_;
  }

  const SpMat& div_f_tensor() const
  {
    std::call_once(divt_once_, [this] {
      divt_ = detail::diag(detail::inverse(gram_v_)) * SpMat(div_f_star().transpose()) * detail::diag(gram_t_);
    });
    return divt_;
  }

  const SpMat& op_P() const
  {
    std::call_once(p_once_, [this] { p_ = (div_f_tensor() * div_f_star()).pruned(); });
    return p_;
  }

  const SpMat& drift_laplacian(Rank rank) const
  {
    switch (rank) {
      case Rank::Scalar:
        std::call_once(lap_s_once_, [this] { lap_s_ = (div_f_vec() * gradient()).pruned(); });
        return lap_s_;
      case Rank::Vector:
        std::call_once(lap_v_once_, [this] {
          lap_v_ = -(detail::diag(detail::inverse(gram_v_)) * SpMat(nabla_vector().transpose()) *
                     detail::diag(mixed_gram()) * nabla_vector());
          lap_v_.prune(0.0);
        });
        return lap_v_;
      case Rank::Sym2:
        std::call_once(lap_t_once_, [this] {
          lap_t_ = -(detail::diag(detail::inverse(gram_t_)) * SpMat(nabla_sym().transpose()) *
                     detail::diag(cov3_gram()) * nabla_sym());
          lap_t_.prune(0.0);
        });
        return lap_t_;
    }
    throw std::invalid_argument("drift_laplacian: unsupported rank");
  }

  /// h -> R(h), local up to the interpolation between lattices.
  const SpMat& curvature_action() const
  {
    std::call_once(curv_once_, [this] {
      const Layout& T = grid_->layout(Space::Sym2);
      detail::Assembler as;
      if (grid_->model().has_sphere()) {
        const int nc = static_cast<int>(T.components.size());
        for (int a = 0; a < nc; ++a) {
          const Component& ca = T.components[static_cast<std::size_t>(a)];
          const Lattice& L = grid_->lattice(ca.parity);
          Eigen::MatrixXd coef(ca.count, nc);
          for (int p = 0; p < ca.count; ++p)
            coef.row(p) = curvature(grid_->model(), L.coords.col(p)).riemann_action.row(a);
          for (int b = 0; b < nc; ++b) {
            if (coef.col(b).cwiseAbs().maxCoeff() == 0.0) continue;
            const Component& cb = T.components[static_cast<std::size_t>(b)];
            const Eigen::VectorXd col = coef.col(b);
            as.add(ca.offset, cb.offset, transfer(cb.parity, ca.parity), &col);
          }
        }
      }
      curv_ = as.build(T.total, T.total);
    });
    return curv_;
  }

  const SpMat& op_L() const
  {
    std::call_once(l_once_, [this] { l_ = drift_laplacian(Rank::Sym2) + 2.0 * curvature_action(); });
    return l_;
  }

  /// Hess u = -div_f*(grad u).
  const SpMat& hessian() const
  {
    std::call_once(hess_once_, [this] { hess_ = -(div_f_star() * gradient()); });
    return hess_;
  }

  OperatorHandle handle(OperatorKind kind) const
  {
    switch (kind) {
      case OperatorKind::DivFStar: return {kind, div_f_star(), Rank::Vector, Rank::Sym2, grid_};
      case OperatorKind::DivFVec: return {kind, div_f_vec(), Rank::Vector, Rank::Scalar, grid_};
      case OperatorKind::DivFTensor: return {kind, div_f_tensor(), Rank::Sym2, Rank::Vector, grid_};
      case OperatorKind::DriftLaplacianScalar: return {kind, drift_laplacian(Rank::Scalar), Rank::Scalar, Rank::Scalar, grid_};
      case OperatorKind::DriftLaplacianVector: return {kind, drift_laplacian(Rank::Vector), Rank::Vector, Rank::Vector, grid_};
      case OperatorKind::DriftLaplacianTensor: return {kind, drift_laplacian(Rank::Sym2), Rank::Sym2, Rank::Sym2, grid_};
      case OperatorKind::OpP: return {kind, op_P(), Rank::Vector, Rank::Vector, grid_};
      case OperatorKind::OpL: return {kind, op_L(), Rank::Sym2, Rank::Sym2, grid_};
      case OperatorKind::Gradient: return {kind, gradient(), Rank::Scalar, Rank::Vector, grid_};
      case OperatorKind::Hessian: return {kind, hessian(), Rank::Scalar, Rank::Sym2, grid_};
    }
    throw std::invalid_argument("unknown operator kind");
  }

  // Field-level wrappers -----------------------------------------------------

  Field apply(const SpMat& m, const Field& in, Rank in_rank, Rank out_rank) const
  {
    check(in, in_rank);
    return Field{out_rank, m * in.values, grid_};
  }

  Field div_f_star(const Field& y) const { return apply(div_f_star(), y, Rank::Vector, Rank::Sym2); }
  Field div_f_tensor(const Field& h) const { return apply(div_f_tensor(), h, Rank::Sym2, Rank::Vector); }
  Field div_f_vec(const Field& y) const { return apply(div_f_vec(), y, Rank::Vector, Rank::Scalar); }
  Field gradient(const Field& u) const { return apply(gradient(), u, Rank::Scalar, Rank::Vector); }
  Field hessian(const Field& u) const { return apply(hessian(), u, Rank::Scalar, Rank::Sym2); }
  Field op_P(const Field& y) const { return apply(op_P(), y, Rank::Vector, Rank::Vector); }
  Field op_L(const Field& h) const { return apply(op_L(), h, Rank::Sym2, Rank::Sym2); }
  Field drift_laplacian(const Field& u) const { return apply(drift_laplacian(u.rank), u, u.rank, u.rank); }

  /// Components of a stored vector in space `s`, interpolated onto the
  /// primal lattice: one row per component, one column per primal node.
  Eigen::MatrixXd collocate(Space s, const Eigen::VectorXd& values) const
  {
    const Layout& lay = grid_->layout(s);
    Eigen::MatrixXd out(static_cast<long>(lay.components.size()), grid_->size());
    for (std::size_t c = 0; c < lay.components.size(); ++c) {
      const Component& comp = lay.components[c];
      out.row(static_cast<long>(c)) = (transfer(comp.parity, 0) * values.segment(comp.offset, comp.count)).transpose();
    }
    return out;
  }

  /// Pointwise |w|^2 on the primal lattice (after interpolation).
  Eigen::VectorXd pointwise_norm2(Space s, const Eigen::VectorXd& values) const
  {
    const Layout& lay = grid_->layout(s);
    const Eigen::MatrixXd c = collocate(s, values);
    const Lattice& P = grid_->primal();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(grid_->size());
    for (std::size_t k = 0; k < lay.components.size(); ++k)
      for (int p = 0; p < grid_->size(); ++p)
        out(p) += Grid::metric_factor(s, lay.components[k].indices, P.metric.col(p)) * c(static_cast<long>(k), p) *
                  c(static_cast<long>(k), p);
    return out;
  }
  Eigen::VectorXd pointwise_norm2(const Field& w) const { return pointwise_norm2(space_of(w.rank), w.values); }

  /// Pointwise |nabla Y|^2 on the primal lattice.
  Eigen::VectorXd nabla_vector_norm2(const Field& y) const
  {
    check(y, Rank::Vector);
    return pointwise_norm2(Space::Mixed, nabla_vector() * y.values);
  }

  /// Weighted ||nabla Y||^2.
  double nabla_vector_norm_sq(const Field& y) const
  {
    const Eigen::VectorXd d = nabla_vector() * y.values;
    return (mixed_gram().array() * d.array().square()).sum();
  }

  Eigen::VectorXd mixed_gram() const { return grid_->gram(Space::Mixed); }
  Eigen::VectorXd cov3_gram() const { return grid_->gram(Space::Cov3); }

 private:
  void check(const Field& f, Rank r) const
  {
    if (f.grid != grid_) throw std::invalid_argument("field lives on a different grid");
    if (f.rank != r) throw std::invalid_argument("expected a " + to_string(r) + " field, got " + to_string(f.rank));
  }

  const SpMat& shift(Parity from, int axis, bool deriv) const
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    const int key = static_cast<int>(from) * 2 * grid_->dim() + axis * 2 + (deriv ? 1 : 0);
    auto it = shifts_.find(key);
    if (it == shifts_.end()) it = shifts_.emplace(key, staggered_shift(*grid_, from, axis, deriv)).first;
    return it->second;
  }

  const std::vector<Christoffel>& christoffels(Parity p) const
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto it = gammas_.find(p);
    if (it == gammas_.end()) {
      const Lattice& L = grid_->lattice(p);
      std::vector<Christoffel> v;
      v.reserve(static_cast<std::size_t>(L.size()));
      for (int q = 0; q < L.size(); ++q) v.push_back(christoffel(grid_->model(), L.coords.col(q)));
      it = gammas_.emplace(p, std::move(v)).first;
    }
    return it->second;
  }

  GridPtr grid_;
  Eigen::VectorXd gram_s_, gram_v_, gram_t_;

  mutable std::mutex cache_mutex_;
  mutable std::map<int, SpMat> shifts_;
  mutable std::map<Parity, std::vector<Christoffel>> gammas_;

  mutable std::once_flag grad_once_, nabla_v_once_, nabla_t_once_, star_once_, divv_once_, divt_once_, p_once_,
      lap_s_once_, lap_v_once_, lap_t_once_, curv_once_, l_once_, hess_once_;
  mutable SpMat grad_, nabla_v_, nabla_t_, star_, divv_, divt_, p_, lap_s_, lap_v_, lap_t_, curv_, l_, hess_;
};

// ---------------------------------------------------------------------------
// Identity residuals

struct IdentityResidual {
  std::string identity_name;
  double residual = 0.0;
};

struct IdentityReport {
  std::vector<IdentityResidual> residuals;
  int resolution = 0;
  int stencil_order = 2;
  bool boundary_warning = false;

  double get(const std::string& name) const
  {
    for (const auto& r : residuals)
      if (r.identity_name == name) return r.residual;
    throw std::out_of_range("no identity named " + name);
  }
};

inline double relative_difference(const Field& lhs, const Field& rhs)
{
  const double scale = std::max(norm(lhs), norm(rhs));
  if (scale == 0.0) return 0.0;
  return norm(lhs - rhs) / scale;
}

/// True when `y` is nonzero within `cells` line spacings of the truncation
/// boundary.
inline bool touches_boundary(const Field& y, double cells)
{
  const Grid& g = *y.grid;
  const double cut = g.truncation_radius() - cells * g.line_spacing();
  for (const Component& c : g.layout(y.rank).components) {
    const Lattice& L = g.lattice(c.parity);
    for (int p = 0; p < c.count; ++p)
      if (L.b(p) >= cut && y.values(c.offset + p) != 0.0) return true;
  }
  return false;
}

/// Relative L^2(e^{-f}) residuals of the four operator identities
///   claim1:  (Lf + k) div_f Y      = -div_f (P Y)
///   claim2:  Lf grad div_f Y       = -grad div_f (P Y)
///   bochner: -2 P Y                = grad div_f Y + Lf Y + k Y
///   firstc:  L div_f* Y            = div_f* (Lf + k) Y
/// with Lf the drift Laplacian and k = 1/2.
inline IdentityReport identity_residuals(const WeightedOperators& ops, const Field& y)
{
  const Grid& g = *ops.grid();
  const double kappa = g.model().kappa;
  IdentityReport rep;
  rep.resolution = g.options().resolution;
  rep.stencil_order = g.stencil_order();
  rep.boundary_warning = touches_boundary(y, 4.0 * stencil_half_width(g.stencil_order()));

  const Field u = ops.div_f_vec(y);
  const Field py = ops.op_P(y);
  const Field lap_y = ops.drift_laplacian(y);

  rep.residuals.push_back(
      {"claim1", relative_difference(ops.drift_laplacian(u) + kappa * u, -1.0 * ops.div_f_vec(py))});
  rep.residuals.push_back({"claim2", relative_difference(ops.drift_laplacian(ops.gradient(u)),
                                                         -1.0 * ops.gradient(ops.div_f_vec(py)))});
  rep.residuals.push_back({"bochner", relative_difference(-2.0 * py, ops.gradient(u) + lap_y + kappa * y)});
  rep.residuals.push_back(
      {"firstc", relative_difference(ops.op_L(ops.div_f_star(y)), ops.div_f_star(lap_y + kappa * y))});
  return rep;
}

}  // namespace shrinker
