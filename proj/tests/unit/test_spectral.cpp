#include "helpers.hpp"
#include "shrinker/sample_fields.hpp"
#include "shrinker/spectral.hpp"

#include <gtest/gtest.h>

using namespace shrinker;
using namespace testing_helpers;

namespace {

double cosine(const Field& a, const Field& b) { return std::abs(inner_product(a, b)) / (norm(a) * norm(b)); }

Field x_dx(const GridPtr& g)
{
  return sample_vector(g, [](const Point& x) { return Eigen::VectorXd(x.head(1)); });
}

const SpectralPair& nearest(const std::vector<SpectralPair>& pairs, double mu)
{
  const SpectralPair* best = &pairs.front();
  for (const auto& p : pairs)
    if (std::abs(p.mu - mu) < std::abs(best->mu - mu)) best = &p;
  return *best;
}

}  // namespace

TEST(Spectral, PlaneKernelHoldsThreeKillingFields)
{
  const auto g = gaussian(2, 32);
  WeightedOperators ops(g);
  const auto pairs = lowest_eigenpairs_of_P(ops, 4);
  ASSERT_EQ(pairs.size(), 4u);
  const double h2 = g->line_spacing() * g->line_spacing();
  for (int i = 0; i < 3; ++i) EXPECT_LE(pairs[static_cast<std::size_t>(i)].mu, h2) << i;
  EXPECT_GT(pairs[3].mu, 0.25);
  // The lowest three span the Killing fields: each projects fully onto them.
  const std::vector<Field> killing{translation_field(g, 0), translation_field(g, 1), rotation_field(g)};
  for (int i = 0; i < 3; ++i) {
    const Field& y = pairs[static_cast<std::size_t>(i)].field;
    Eigen::Matrix3d gram;
    Eigen::Vector3d rhs;
    for (int a = 0; a < 3; ++a) {
      rhs(a) = inner_product(killing[static_cast<std::size_t>(a)], y);
      for (int b = 0; b < 3; ++b)
        gram(a, b) = inner_product(killing[static_cast<std::size_t>(a)], killing[static_cast<std::size_t>(b)]);
    }
    EXPECT_GT(rhs.dot(gram.ldlt().solve(rhs)), 0.99) << i;
  }
}

TEST(Spectral, LineSpectrumContainsDilation)
{
  const auto g = gaussian(1, 256);
  WeightedOperators ops(g);
  const auto pairs = lowest_eigenpairs_of_P(ops, 2);
  ASSERT_EQ(pairs.size(), 2u);
  const auto& p = nearest(pairs, 0.5);
  EXPECT_NEAR(p.mu, 0.5, 1e-3);
  EXPECT_GE(cosine(p.field, x_dx(g)), 0.99);
  EXPECT_NEAR(norm(p.field), 1.0, 1e-12);
}

TEST(Spectral, IterativeSolverAgreesWithDense)
{
  const auto g = gaussian(1, 256);
  WeightedOperators ops(g);
  const auto dense = lowest_eigenpairs_of_P(ops, 3);
  EigenSolverOptions opt;
  opt.force_iterative = true;
  const auto iter = lowest_eigenpairs_of_P(ops, 3, 1e-10, opt);
  for (int i = 0; i < 3; ++i)
    EXPECT_NEAR(dense[static_cast<std::size_t>(i)].mu, iter[static_cast<std::size_t>(i)].mu, 1e-8) << i;
}

TEST(Spectral, BrokenAdjointIsRejected)
{
  const auto g = gaussian(1, 64);
  WeightedOperators ops(g);
  OperatorHandle h = ops.handle(OperatorKind::OpP);
  h.matrix = h.matrix.pruned();
  for (SpMat::InnerIterator it(h.matrix, 3); it; ++it)
    if (it.row() != it.col()) it.valueRef() = 0.0;
  try {
    lowest_eigenpairs(h, 2);
    FAIL() << "expected an adjointness error";
  } catch (const AdjointnessError& e) {
    EXPECT_NE(std::string(e.what()).find("adjointness broken"), std::string::npos);
  }
}

TEST(Spectral, RejectsNonVectorOperators)
{
  const auto g = gaussian(1, 64);
  WeightedOperators ops(g);
  EXPECT_THROW(lowest_eigenpairs(ops.handle(OperatorKind::DivFStar), 2), std::invalid_argument);
  EXPECT_THROW(lowest_eigenpairs_of_P(ops, 0), std::invalid_argument);
}

TEST(Spectral, DilationPairDivergence)
{
  const auto g = gaussian(1, 256);
  WeightedOperators ops(g);
  const auto pairs = lowest_eigenpairs_of_P(ops, 3);
  const auto& p = nearest(pairs, 0.5);
  const DivFCheck c = eigencheck_divf(ops, p);
  EXPECT_FALSE(c.skipped);
  EXPECT_LE(c.eigen_residual, 1e-2);
  EXPECT_LE(c.divf_norm_sq, c.bound + 1e-3);
  EXPECT_TRUE(c.pass());
  // div_f Y is proportional to 1 - x^2/2.
  const Field u = ops.div_f_vec(p.field);
  const Field shape = sample_scalar(g, [](const Point& x) { return 1.0 - 0.5 * x(0) * x(0); });
  EXPECT_GE(std::abs(inner_product(u, shape)) / (norm(u) * norm(shape)), 0.99);
}

TEST(Spectral, KillingPairsSatisfyDivergenceBound)
{
  const auto g = gaussian(2, 32);
  WeightedOperators ops(g);
  for (const auto& p : lowest_eigenpairs_of_P(ops, 3)) {
    const DivFCheck c = eigencheck_divf(ops, p);
    EXPECT_LE(c.divf_norm_sq, c.bound + 1e-3);
  }
  // Translation: ||div_f d1||^2 / ||d1||^2 = 1/2.
  const Field t = translation_field(g, 0);
  const Field u = ops.div_f_vec(t);
  EXPECT_NEAR(inner_product(u, u) / inner_product(t, t), 0.5, 0.02);
}

TEST(Spectral, ZeroFieldIsSkipped)
{
  const auto g = gaussian(1, 64);
  WeightedOperators ops(g);
  const DivFCheck c = eigencheck_divf(ops, SpectralPair{0.0, Field::zeros(g, Rank::Vector), 0.0});
  EXPECT_TRUE(c.skipped);
  EXPECT_TRUE(c.pass());
}

TEST(Spectral, DilationDecomposesIntoGradient)
{
  const auto g = gaussian(1, 256, 10.0, 4);
  WeightedOperators ops(g);
  const auto pairs = lowest_eigenpairs_of_P(ops, 3);
  const auto& p = nearest(pairs, 0.5);
  const auto d = decompose_4main0(ops, p);
  EXPECT_LE(norm(d.Z), 1e-2);
  EXPECT_NEAR(norm(d.grad_div) / (p.mu + 0.5), 1.0, 1e-2);
  EXPECT_LE(d.norm_gap, std::max(1e-6, 10.0 * p.residual));
  EXPECT_LE(d.grad_div_eigen_residual, 1e-2);
}

TEST(Spectral, RotationDecomposesIntoItself)
{
  const auto g = gaussian(2, 64, 12.0, 4);
  WeightedOperators ops(g);
  const Field y = rotation_field(g) * (1.0 / norm(rotation_field(g)));
  const auto d = decompose_4main0(ops, SpectralPair{0.0, y, 0.0});
  // Only the zero extension at the truncation boundary separates Z from Y.
  EXPECT_LE(norm(d.Z - y), 1e-3);
  EXPECT_LE(d.norm_gap, 1e-6);
}

TEST(Spectral, DecompositionRejectsNegativeShift)
{
  const auto g = gaussian(1, 64);
  WeightedOperators ops(g);
  EXPECT_THROW(decompose_4main0(ops, SpectralPair{-0.5, x_dx(g), 0.0}), std::domain_error);
}

TEST(Spectral, DegenerateBlocksGroupFromFirstMember)
{
  std::vector<SpectralPair> pairs;
  for (double mu : {0.0, 1e-4, 0.5, 0.5005, 0.502, 1.0}) pairs.push_back({mu, Field{}, 0.0});
  const auto blocks = degenerate_blocks(pairs, 1e-3);
  ASSERT_EQ(blocks.size(), 4u);
  EXPECT_EQ(blocks[0], (std::vector<int>{0, 1}));
  EXPECT_EQ(blocks[1], (std::vector<int>{2, 3}));
  EXPECT_EQ(blocks[2], (std::vector<int>{4}));
}

// Eigenpairs are ascending, unit-normed, with small residuals, and pairwise
// orthogonal in the weighted inner product.
TEST(SpectralProperty, PairsAreOrthonormalAscending)
{
  for (int order : {2, 4}) {
    const auto g = gaussian(2, 24, 6.0, order);
    WeightedOperators ops(g);
    const auto pairs = lowest_eigenpairs_of_P(ops, 6);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      EXPECT_NEAR(norm(pairs[i].field), 1.0, 1e-10);
      EXPECT_LE(pairs[i].residual, 1e-8);
      EXPECT_GE(pairs[i].mu, -1e-8);
      if (i > 0) {
        EXPECT_GE(pairs[i].mu, pairs[i - 1].mu - 1e-12);
      }
      for (std::size_t j = 0; j < i; ++j) EXPECT_LE(std::abs(inner_product(pairs[i].field, pairs[j].field)), 1e-8);
    }
  }
}

// The bound ||div_f Z||^2 <= 4 mu + 1 over the low spectrum.
TEST(SpectralProperty, DivergenceBoundOverLowSpectrum)
{
  const auto g = gaussian(2, 32, 8.0);
  WeightedOperators ops(g);
  for (const auto& p : lowest_eigenpairs_of_P(ops, 8)) {
    const DivFCheck c = eigencheck_divf(ops, p);
    EXPECT_LE(c.divf_norm_sq, c.bound + 1e-3) << p.mu;
  }
}
