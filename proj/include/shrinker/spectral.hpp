// Lowest eigenpairs of the weighted operator P and checks built on them.
//
// P is symmetric in the weighted inner product <u, v> = u^T G v with G the
// (diagonal) Gram matrix of the vector space, so G^{1/2} P G^{-1/2} is an
// ordinary symmetric matrix.  Small problems use a dense solve; larger ones
// use shift-invert subspace iteration with a sparse LDL^T factorisation.
#pragma once

#include "shrinker/discrete_field.hpp"
#include "shrinker/weighted_operators.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace shrinker {

class AdjointnessError : public std::runtime_error {
 public:
  explicit AdjointnessError(const std::string& what) : std::runtime_error("adjointness broken: " + what) {}
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double best) : std::runtime_error(what), best_residual(best) {}
  double best_residual;
};

struct SpectralPair {
  double mu = 0.0;
  Field field;  // unit weighted norm
  double residual = 0.0;
};

struct EigenSolverOptions {
  long dense_limit = 2500;  // unknowns; larger problems go iterative
  bool force_iterative = false;
  double shift = 1e-3;      // factor P + shift
  int max_iterations = 400;
  int extra_vectors = 8;
  unsigned seed = 12345;
};

namespace detail {

inline SpMat symmetrized(const SpMat& p, const Eigen::VectorXd& gram)
{
  const Eigen::VectorXd s = gram.cwiseSqrt();
  const Eigen::VectorXd si = s.cwiseInverse();
  SpMat a = diag(s) * p * diag(si);
  SpMat at = a.transpose();
  return 0.5 * (a + at);
}

inline void validate_symmetry(const SpMat& p, const Eigen::VectorXd& gram)
{
  const SpMat m = diag(gram) * p;
  const SpMat mt = m.transpose();
  const SpMat diff = m - mt;
  double scale = 0.0;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it) scale = std::max(scale, std::abs(it.value()));
  double asym = 0.0;
  for (int k = 0; k < diff.outerSize(); ++k)
    for (SpMat::InnerIterator it(diff, k); it; ++it) asym = std::max(asym, std::abs(it.value()));
  if (asym > 1e-10 * scale) throw AdjointnessError("operator is not symmetric in the weighted inner product");
}

inline Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& x)
{
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  return qr.householderQ() * Eigen::MatrixXd::Identity(x.rows(), x.cols());
}

struct RawEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

inline RawEigen dense_lowest(const SpMat& a, int count)
{
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(a), Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) throw ConvergenceError("dense eigensolver failed", INFINITY);
  return {es.eigenvalues().head(count), es.eigenvectors().leftCols(count)};
}

inline RawEigen subspace_lowest(const SpMat& a, int count, double tol, const EigenSolverOptions& opt)
{
  const long n = a.rows();
  const int p = static_cast<int>(std::min<long>(n, count + opt.extra_vectors));
  SpMat shifted = a;
  for (long i = 0; i < n; ++i) shifted.coeffRef(i, i) += opt.shift;
  Eigen::SimplicialLDLT<SpMat> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) throw AdjointnessError("shifted operator is not positive definite");

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd x(n, p);
  for (long i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) x(i, j) = nd(rng);
  x = orthonormalize(x);

  double best = INFINITY;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    Eigen::MatrixXd y = ldlt.solve(x);
    Eigen::MatrixXd q = orthonormalize(y);
    Eigen::MatrixXd aq = a * q;
    Eigen::MatrixXd h = q.transpose() * aq;
    h = 0.5 * (h + h.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    x = q * es.eigenvectors();
    const Eigen::MatrixXd ax = aq * es.eigenvectors();
    double worst = 0.0;
    for (int j = 0; j < count; ++j) {
      const double th = es.eigenvalues()(j);
      worst = std::max(worst, (ax.col(j) - th * x.col(j)).norm() / std::max(1.0, std::abs(th)));
    }
    best = std::min(best, worst);
    if (worst <= tol) return {es.eigenvalues().head(count), x.leftCols(count)};
  }
  throw ConvergenceError("subspace iteration did not converge; best residual " + std::to_string(best), best);
}

}  // namespace detail

/// Lowest `count` eigenpairs of a vector-field operator, ascending.
inline std::vector<SpectralPair> lowest_eigenpairs(const OperatorHandle& op, int count, double tolerance = 1e-10,
                                                   const EigenSolverOptions& opt = {})
{
  if (count < 1) throw std::invalid_argument("eigenpair count must be >= 1");
  if (op.domain != Rank::Vector || op.range != Rank::Vector)
    throw std::invalid_argument("lowest_eigenpairs expects an operator on vector fields");
  const Eigen::VectorXd gram = op.grid->gram(Rank::Vector);
  detail::validate_symmetry(op.matrix, gram);
  const SpMat a = detail::symmetrized(op.matrix, gram);
  count = static_cast<int>(std::min<long>(count, a.rows()));

  const bool dense = !opt.force_iterative && a.rows() <= opt.dense_limit;
  const detail::RawEigen raw = dense ? detail::dense_lowest(a, count) : detail::subspace_lowest(a, count, tolerance, opt);

  double scale = 1.0;
  for (int k = 0; k < a.outerSize(); ++k)
    for (SpMat::InnerIterator it(a, k); it; ++it) scale = std::max(scale, std::abs(it.value()));
  if (raw.values(0) < -1e-8 * scale) throw AdjointnessError("negative eigenvalue " + std::to_string(raw.values(0)));

  const Eigen::VectorXd si = gram.cwiseSqrt().cwiseInverse();
  std::vector<SpectralPair> out;
  for (int j = 0; j < count; ++j) {
    Field f{Rank::Vector, si.cwiseProduct(raw.vectors.col(j)), op.grid};
    f = f * (1.0 / norm(f));
    const double mu = raw.values(j);
    const Field r = Field{Rank::Vector, op.matrix * f.values, op.grid} - mu * f;
    out.push_back({mu, std::move(f), norm(r)});
  }
  return out;
}

/// Groups indices of ascending pairs whose eigenvalues lie within `tol` of the
/// first member of the group.
inline std::vector<std::vector<int>> degenerate_blocks(const std::vector<SpectralPair>& pairs, double tol)
{
  std::vector<std::vector<int>> blocks;
  for (int i = 0; i < static_cast<int>(pairs.size()); ++i) {
    if (blocks.empty() || pairs[static_cast<std::size_t>(i)].mu - pairs[static_cast<std::size_t>(blocks.back().front())].mu > tol)
      blocks.push_back({});
    blocks.back().push_back(i);
  }
  return blocks;
}

inline std::vector<SpectralPair> lowest_eigenpairs_of_P(const WeightedOperators& ops, int count,
                                                        double tolerance = 1e-10, const EigenSolverOptions& opt = {})
{
  return lowest_eigenpairs(ops.handle(OperatorKind::OpP), count, tolerance, opt);
}

// ---------------------------------------------------------------------------

struct DivFCheck {
  bool skipped = false;
  double eigen_residual = 0.0;  // ||(Lf + 1/2 + mu) div_f Z|| / max(||div_f Z||, ||Z||)
  double divf_norm_sq = 0.0;    // ||div_f Z||^2
  double bound = 0.0;           // 4 mu + 1
  bool pass(double residual_tol = 1e-2, double bound_slack = 1e-3) const
  {
    return skipped || (eigen_residual <= residual_tol && divf_norm_sq <= bound + bound_slack);
  }
};

/// The scalar eigen-equation satisfied by div_f of an eigenfield together with
/// the bound ||div_f Z||^2 <= 4 mu + 1.
inline DivFCheck eigencheck_divf(const WeightedOperators& ops, const SpectralPair& pair)
{
  DivFCheck c;
  const double yn = norm(pair.field);
  if (yn == 0.0) {
    c.skipped = true;
    return c;
  }
  const Field z = pair.field * (1.0 / yn);
  const Field u = ops.div_f_vec(z);
  const Field e = ops.drift_laplacian(u) + (0.5 + pair.mu) * u;
  c.eigen_residual = norm(e) / std::max(norm(u), 1.0);
  c.divf_norm_sq = inner_product(u, u);
  c.bound = 4.0 * pair.mu + 1.0;
  return c;
}

struct Decomposition4main0 {
  Field Y;
  Field Z;
  Field grad_div;
  double mu = 0.0;
  double norm_gap = 0.0;
  double div_z_residual = 0.0;         // ||div_f Z|| / max(||div_f Y||, ||Y||)
  double grad_div_eigen_residual = 0.0;  // ||(Lf + mu) grad div_f Y|| / max(||grad div_f Y||, ||Y||)
  double z_eigen_residual = 0.0;       // ||(Lf + 2 mu + 1/2) Z|| / max(||Z||, ||Y||)
};

/// Splits an eigenfield Y of P into Z = Y + 2/(2mu+1) grad div_f Y and the
/// gradient part, with the residuals of the three eigen-relations and of the
/// norm identity ||Y||^2 = ||Z||^2 + (mu+1/2)^{-2} ||grad div_f Y||^2.
inline Decomposition4main0 decompose_4main0(const WeightedOperators& ops, const SpectralPair& pair)
{
  if (pair.mu + 0.5 <= 1e-12) throw std::domain_error("mu + 1/2 must be positive");
  Decomposition4main0 d;
  d.mu = pair.mu;
  d.Y = pair.field;
  const Field u = ops.div_f_vec(d.Y);
  d.grad_div = ops.gradient(u);
  d.Z = d.Y + (2.0 / (2.0 * d.mu + 1.0)) * d.grad_div;

  const double yn = norm(d.Y);
  const double gn = norm(d.grad_div);
  const double zn = norm(d.Z);
  d.norm_gap = std::abs(yn * yn - zn * zn - gn * gn / ((d.mu + 0.5) * (d.mu + 0.5)));
  d.div_z_residual = norm(ops.div_f_vec(d.Z)) / std::max(norm(u), yn);
  d.grad_div_eigen_residual = norm(ops.drift_laplacian(d.grad_div) + d.mu * d.grad_div) / std::max(gn, yn);
  d.z_eigen_residual = norm(ops.drift_laplacian(d.Z) + (2.0 * d.mu + 0.5) * d.Z) / std::max(zn, yn);
  return d;
}

}  // namespace shrinker
