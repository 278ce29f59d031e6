// Closed-form test fields: Killing fields of the models, smooth bumps and
// seeded perturbations.
#pragma once

#include "shrinker/discrete_field.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace shrinker {

/// C-infinity bump exp(1 - 1/(1 - s^2)) on |s| < 1, equal to 1 at s = 0.
inline double smooth_bump(double s)
{
  const double s2 = s * s;
  if (s2 >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - s2));
}

/// Euclidean norm of the line coordinates.
inline double line_radius(const ModelShrinker& model, const Point& x)
{
  return x.head(model.euclidean_dim()).norm();
}

/// Translation along Euclidean axis `axis`.
inline Field translation_field(const GridPtr& grid, int axis = 0)
{
  if (axis < 0 || axis >= grid->model().euclidean_dim()) throw std::invalid_argument("translation axis out of range");
  return sample_vector(grid, [&](const Point& x) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
    y(axis) = 1.0;
    return y;
  });
}

/// Rotation x_j d_i - x_i d_j in the Euclidean (i, j) plane.
inline Field rotation_field(const GridPtr& grid, int i = 0, int j = 1)
{
  const int m = grid->model().euclidean_dim();
  if (i < 0 || j < 0 || i >= m || j >= m || i == j) throw std::invalid_argument("rotation plane out of range");
  return sample_vector(grid, [&](const Point& x) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
    y(i) = x(j);
    y(j) = -x(i);
    return y;
  });
}

/// d_phi on the sphere factor of a cylinder (rotation about the polar axis).
inline Field azimuthal_rotation_field(const GridPtr& grid)
{
  if (!grid->model().has_sphere()) throw std::invalid_argument("azimuthal rotation needs a sphere factor");
  return sample_vector(grid, [&](const Point& x) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
    y(x.size() - 1) = 1.0;
    return y;
  });
}

/// Rotation of S^2 about an equatorial axis: -sin(phi) d_theta - cot(theta) cos(phi) d_phi.
/// On a grid this is Killing only up to discretisation error.
inline Field sphere_tilt_rotation_field(const GridPtr& grid)
{
  const ModelShrinker& m = grid->model();
  if (!m.has_sphere() || m.k != 2) throw std::invalid_argument("tilt rotation is defined for S^2 factors");
  const int e = m.euclidean_dim();
  return sample_vector(grid, [&](const Point& x) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
    const double th = x(e);
    const double ph = x(e + 1);
    y(e) = -std::sin(ph);
    y(e + 1) = -std::cos(th) / std::sin(th) * std::cos(ph);
    return y;
  });
}

/// x_axis d_axis, the standard non-Killing dilation component.
inline Field coordinate_stretch_field(const GridPtr& grid, int axis = 0)
{
  return sample_vector(grid, [&](const Point& x) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
    y(axis) = x(axis);
    return y;
  });
}

/// Multiply a vector field pointwise by a radial bump of the given radius in
/// the line coordinates.
inline Field times_radial_bump(const Field& y, double radius)
{
  const ModelShrinker& m = y.grid->model();
  return scale_pointwise(y, [&](const Point& x) { return smooth_bump(line_radius(m, x) / radius); });
}

/// Deterministic smooth perturbation used for approximate Killing fields.
/// seed 0 gives x_1^2 d_1 times a radial bump of radius `radius`; other seeds
/// superpose three bumps with seeded centres and directions inside the same
/// ball.
inline Field perturbation_field(const GridPtr& grid, double radius, unsigned seed = 0)
{
  const ModelShrinker& m = grid->model();
  const int e = m.euclidean_dim();
  if (seed == 0) {
    return sample_vector(grid, [&](const Point& x) {
      Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
      y(0) = x(0) * x(0) * smooth_bump(line_radius(m, x) / radius);
      return y;
    });
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  struct Blob {
    Eigen::VectorXd centre, dir;
  };
  std::vector<Blob> blobs;
  for (int i = 0; i < 3; ++i) {
    Blob b{Eigen::VectorXd(e), Eigen::VectorXd::Zero(m.n)};
    for (int a = 0; a < e; ++a) b.centre(a) = 0.3 * radius * u(rng);
    for (int a = 0; a < e; ++a) b.dir(a) = u(rng);
    blobs.push_back(std::move(b));
  }
  return sample_vector(grid, [&](const Point& x) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
    for (const Blob& b : blobs) y += b.dir * smooth_bump((x.head(e) - b.centre).norm() / (0.6 * radius));
    return y;
  });
}

}  // namespace shrinker
