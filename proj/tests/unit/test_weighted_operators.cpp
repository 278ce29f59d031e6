#include "helpers.hpp"
#include "shrinker/sample_fields.hpp"
#include "shrinker/weighted_operators.hpp"

#include <gtest/gtest.h>

using namespace shrinker;
using namespace testing_helpers;

namespace {

Field sym2_of(const GridPtr& g, const std::function<Eigen::MatrixXd(const Point&)>& fn) { return sample_sym2(g, fn); }

Field x_dx(const GridPtr& g)
{
  return sample_vector(g, [](const Point& x) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
    y(0) = x(0);
    return y;
  });
}

Field bump_dx(const GridPtr& g, double radius)
{
  return times_radial_bump(translation_field(g, 0), radius);
}

}  // namespace

TEST(WeightedOperators, TranslationIsKilling)
{
  const auto g = gaussian(2, 32);
  WeightedOperators ops(g);
  EXPECT_LE(interior_norm(ops.div_f_star(translation_field(g, 0))), 1e-13);
}

TEST(WeightedOperators, RotationIsKilling)
{
  const auto g = gaussian(2, 32);
  WeightedOperators ops(g);
  EXPECT_LE(interior_norm(ops.div_f_star(rotation_field(g))), 1e-12);
}

TEST(WeightedOperators, DilationGivesMinusMetric)
{
  const auto g = gaussian(1, 64);
  WeightedOperators ops(g);
  const Field s = ops.div_f_star(x_dx(g));
  const Field minus_g = sym2_of(g, [](const Point&) { return Eigen::MatrixXd::Constant(1, 1, -1.0); });
  EXPECT_LE(interior_error(s, minus_g), 1e-12);
}

TEST(WeightedOperators, DivergenceOfMinusMetricIsHalfPosition)
{
  for (int order : {2, 4}) {
    double prev = 0.0;
    for (int res : {64, 128}) {
      const auto g = gaussian(1, res, 8.0, order);
      WeightedOperators ops(g);
      const Field h = sym2_of(g, [](const Point&) { return Eigen::MatrixXd::Constant(1, 1, -1.0); });
      const Field half_x = sample_vector(g, [](const Point& x) { return Eigen::VectorXd(0.5 * x); });
      const double e = interior_error(ops.div_f_tensor(h), half_x);
      EXPECT_LE(e, vanishing_tolerance(*g)) << order << " " << res;
      if (res == 128) {
        EXPECT_GT(prev / e, std::pow(2.0, order) * 0.7) << order;
      }
      prev = e;
    }
  }
}

TEST(WeightedOperators, ZeroMapsToZero)
{
  const auto g = gaussian(2, 32);
  WeightedOperators ops(g);
  EXPECT_EQ(norm(ops.div_f_tensor(Field::zeros(g, Rank::Sym2))), 0.0);
  EXPECT_EQ(norm(ops.op_L(Field::zeros(g, Rank::Sym2))), 0.0);
  EXPECT_EQ(norm(ops.op_P(Field::zeros(g, Rank::Vector))), 0.0);
}

TEST(WeightedOperators, TensorDivergenceIsAdjointOfStar)
{
  for (int order : {2, 4}) {
    const auto g = gaussian(2, 32, 8.0, order);
    WeightedOperators ops(g);
    for (unsigned s = 0; s < 5; ++s) {
      const Field v = random_field(g, Rank::Vector, 2 * s);
      const Field h = random_field(g, Rank::Sym2, 2 * s + 1);
      const double lhs = inner_product(ops.div_f_star(v), h);
      const double rhs = inner_product(v, ops.div_f_tensor(h));
      const double scale = norm(ops.div_f_star(v)) * norm(h) + norm(v) * norm(ops.div_f_tensor(h));
      EXPECT_LE(std::abs(lhs - rhs), 1e-12 * scale);
    }
  }
}

TEST(WeightedOperators, TranslationDivergence)
{
  const auto g = gaussian(2, 64);
  WeightedOperators ops(g);
  const Field expect = sample_scalar(g, [](const Point& x) { return -0.5 * x(0); });
  EXPECT_LE(interior_error(ops.div_f_vec(translation_field(g, 0)), expect), vanishing_tolerance(*g));
}

TEST(WeightedOperators, CoordinateIsDriftEigenfunction)
{
  const auto g = gaussian(2, 64, 8.0, 4);
  WeightedOperators ops(g);
  const Field x1 = sample_scalar(g, [](const Point& x) { return x(0); });
  EXPECT_LE(interior_error(ops.drift_laplacian(x1), -0.5 * x1), vanishing_tolerance(*g));
  const Field one = sample_scalar(g, [](const Point&) { return 1.0; });
  EXPECT_LE(interior_norm(ops.drift_laplacian(one)), 1e-12);
}

TEST(WeightedOperators, RotationInKernelOfP)
{
  const auto g = gaussian(2, 64);
  WeightedOperators ops(g);
  const Field y = rotation_field(g);
  EXPECT_LE(interior_norm(ops.op_P(y)) / interior_norm(y), vanishing_tolerance(*g));
}

TEST(WeightedOperators, DilationIsEigenfieldOfP)
{
  const auto g = gaussian(1, 128);
  WeightedOperators ops(g);
  const Field y = x_dx(g);
  EXPECT_LE(interior_error(ops.op_P(y), 0.5 * y), vanishing_tolerance(*g));
}

TEST(WeightedOperators, CylinderTranslationInKernelOfP)
{
  const auto g = cylinder(32, 32);
  WeightedOperators ops(g);
  const Field y = translation_field(g, 0);
  EXPECT_LE(interior_norm(ops.op_P(y)) / interior_norm(y), vanishing_tolerance(*g));
}

TEST(WeightedOperators, LichnerowiczIsDriftLaplacianOnFlatSpace)
{
  const auto g = gaussian(2, 32);
  WeightedOperators ops(g);
  const Field h = random_field(g, Rank::Sym2, 4);
  EXPECT_LE(norm(ops.op_L(h) - ops.drift_laplacian(h)), 1e-12 * norm(ops.drift_laplacian(h)));
}

// Measured away from the poles: the lat-long tensor stencils are not
// consistent within a few cells of theta = 0, pi for fields that do not vanish
// there.
TEST(WeightedOperators, CylinderCurvatureRestoresSphereMetric)
{
  auto polar_free_norm = [](const Field& w) {
    const Grid& g = *w.grid;
    const Eigen::VectorXd gr = g.gram(w.rank);
    double s = 0.0;
    for (const Component& c : g.layout(w.rank).components) {
      const Lattice& L = g.lattice(c.parity);
      for (int p = 0; p < c.count; ++p) {
        const double th = L.coords(1, p);
        if (L.b(p) < interior_radius(g) && th > 0.5 && th < M_PI - 0.5)
          s += gr(c.offset + p) * w.values(c.offset + p) * w.values(c.offset + p);
      }
    }
    return std::sqrt(s);
  };
  std::vector<double> err;
  for (int ang : {32, 64}) {
    const auto g = cylinder(32, ang);
    WeightedOperators ops(g);
    const auto& m = g->model();
    const Field h = sym2_of(g, [&](const Point& x) {
      const Eigen::VectorXd gd = metric_diag(m, x);
      Eigen::MatrixXd s = Eigen::MatrixXd::Zero(3, 3);
      s(1, 1) = gd(1);
      s(2, 2) = gd(2);
      return s;
    });
    // The sphere metric is parallel, so L h = 2 R(h) = h.
    err.push_back(polar_free_norm(ops.op_L(h) - h) / polar_free_norm(h));
    EXPECT_LE(err.back(), vanishing_tolerance(*g)) << ang;
    EXPECT_LE(norm(ops.op_L(h) - ops.drift_laplacian(h) - h), 1e-10 * norm(h));
  }
  EXPECT_LT(err[1], err[0]);
}

TEST(WeightedOperators, ZeroFieldIdentitiesVanish)
{
  const auto g = gaussian(2, 32);
  WeightedOperators ops(g);
  const auto rep = identity_residuals(ops, Field::zeros(g, Rank::Vector));
  ASSERT_EQ(rep.residuals.size(), 4u);
  for (const auto& r : rep.residuals) EXPECT_EQ(r.residual, 0.0) << r.identity_name;
}

// Order 4 needs finer grids before the bump's high derivatives are resolved.
TEST(WeightedOperators, BumpIdentitiesConvergeAtStencilOrder)
{
  struct Case {
    int order, coarse;
    double radius;
  };
  for (const Case& c : {Case{2, 32, 3.5}, Case{4, 256, 5.0}}) {
    std::vector<IdentityReport> reps;
    for (int res : {c.coarse, 2 * c.coarse}) {
      const auto g = gaussian(2, res, 8.0, c.order);
      WeightedOperators ops(g);
      reps.push_back(identity_residuals(ops, bump_dx(g, c.radius)));
      EXPECT_FALSE(reps.back().boundary_warning);
    }
    for (std::size_t i = 0; i < reps[0].residuals.size(); ++i) {
      const double ratio = reps[0].residuals[i].residual / reps[1].residuals[i].residual;
      EXPECT_GT(ratio, std::pow(2.0, c.order) * 0.7) << c.order << " " << reps[0].residuals[i].identity_name;
      EXPECT_LT(ratio, std::pow(2.0, c.order) * 1.4) << c.order << " " << reps[0].residuals[i].identity_name;
    }
  }
}

TEST(WeightedOperators, RotationBumpIdentitiesWithinTolerance)
{
  const auto g = gaussian(2, 64);
  WeightedOperators ops(g);
  const Field y = scale_pointwise(rotation_field(g), [](const Point& x) {
    Point c = x;
    c(0) -= 1.5;
    return smooth_bump(c.norm() / 3.0);
  });
  const auto rep = identity_residuals(ops, y);
  for (const auto& r : rep.residuals) EXPECT_LE(r.residual, vanishing_tolerance(*g)) << r.identity_name;
}

TEST(WeightedOperators, BoundaryWarningForWideSupport)
{
  const auto g = gaussian(2, 32);
  WeightedOperators ops(g);
  EXPECT_TRUE(identity_residuals(ops, translation_field(g, 0)).boundary_warning);
}

// Random fields: the composite operators are self-adjoint and nonnegative.
TEST(WeightedOperatorsProperty, PIsSelfAdjointAndNonnegative)
{
  for (int order : {2, 4}) {
    const auto g = gaussian(2, 24, 6.0, order);
    WeightedOperators ops(g);
    for (unsigned s = 0; s < 6; ++s) {
      const Field a = random_field(g, Rank::Vector, 100 + s);
      const Field b = random_field(g, Rank::Vector, 200 + s);
      const double pab = inner_product(ops.op_P(a), b), apb = inner_product(a, ops.op_P(b));
      EXPECT_LE(std::abs(pab - apb), 1e-11 * norm(ops.op_P(a)) * norm(b));
      EXPECT_GE(inner_product(ops.op_P(a), a), -1e-10 * norm(ops.op_P(a)) * norm(a));
    }
  }
}

TEST(WeightedOperatorsProperty, DriftLaplacianIsSelfAdjointNonpositive)
{
  const auto g = gaussian(2, 24, 6.0);
  WeightedOperators ops(g);
  for (Rank r : {Rank::Scalar, Rank::Vector, Rank::Sym2})
    for (unsigned s = 0; s < 3; ++s) {
      const Field a = random_field(g, r, 300 + s);
      const Field b = random_field(g, r, 400 + s);
      const double scale = norm(ops.drift_laplacian(a)) * norm(b);
      EXPECT_LE(std::abs(inner_product(ops.drift_laplacian(a), b) - inner_product(a, ops.drift_laplacian(b))),
                1e-11 * scale);
      EXPECT_LE(inner_product(ops.drift_laplacian(a), a), 1e-10 * scale);
    }
}

TEST(WeightedOperatorsProperty, GradientIsMinusAdjointOfDivergence)
{
  const auto g = cylinder(16, 16);
  WeightedOperators ops(g);
  for (unsigned s = 0; s < 4; ++s) {
    const Field u = random_field(g, Rank::Scalar, 500 + s);
    const Field v = random_field(g, Rank::Vector, 600 + s);
    const double lhs = inner_product(ops.gradient(u), v);
    const double rhs = -inner_product(u, ops.div_f_vec(v));
    EXPECT_LE(std::abs(lhs - rhs), 1e-12 * (norm(ops.gradient(u)) * norm(v) + norm(u) * norm(ops.div_f_vec(v))));
  }
}
