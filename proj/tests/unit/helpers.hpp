#pragma once

#include "shrinker/discrete_field.hpp"
#include "shrinker/verification.hpp"

#include <random>

namespace testing_helpers {

using namespace shrinker;

inline GridPtr gaussian(int n, int res, double R = 8.0, int order = 2)
{
  GridOptions o;
  o.resolution = res;
  o.truncation_radius = R;
  o.stencil_order = order;
  return build_grid(make_model(ModelKind::Gaussian, n), o);
}

inline GridPtr cylinder(int res, int ang, double R = 8.0, int order = 2)
{
  GridOptions o;
  o.resolution = res;
  o.angular_resolution = ang;
  o.truncation_radius = R;
  o.stencil_order = order;
  return build_grid(make_model(ModelKind::Cylinder, 3, 2), o);
}

inline Field random_field(const GridPtr& g, Rank r, unsigned seed)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Field f = Field::zeros(g, r);
  for (Eigen::Index i = 0; i < f.values.size(); ++i) f.values(i) = d(rng);
  return f;
}

/// Interior-region norm of a - b relative to that of b (or of `ref`).
inline double interior_error(const Field& a, const Field& b, const Field* ref = nullptr)
{
  const double s = interior_norm(ref ? *ref : b);
  return interior_norm(a - b) / (s > 0.0 ? s : 1.0);
}

}  // namespace testing_helpers
