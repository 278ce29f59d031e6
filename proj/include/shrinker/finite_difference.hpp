// Staggered differences and interpolations between neighbouring lattices.
//
// Along axis a, a lattice with parity s talks to the lattice with parity
// s ^ (1 << a); its nodes sit half a step away.  Azimuthal axes wrap.  At
// the truncation boundary fields extend by zero (Dirichlet closure) or the
// rule drops to two points and differences reaching outside the chart are
// left out (natural closure).  Polar caps always use the latter.
#pragma once

#include "shrinker/discrete_field.hpp"

#include <Eigen/Sparse>

#include <optional>
#include <stdexcept>
#include <vector>

namespace shrinker {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct Stencil {
  std::vector<double> offsets;  // in steps, relative to the target node
  std::vector<double> coeffs;
};

inline Stencil staggered_stencil(int order, bool derivative)
{
  if (order == 2) {
    if (derivative) return {{-0.5, 0.5}, {-1.0, 1.0}};
    return {{-0.5, 0.5}, {0.5, 0.5}};
  }
  if (order == 4) {
    if (derivative) return {{-1.5, -0.5, 0.5, 1.5}, {1.0 / 24, -27.0 / 24, 27.0 / 24, -1.0 / 24}};
    return {{-1.5, -0.5, 0.5, 1.5}, {-1.0 / 16, 9.0 / 16, 9.0 / 16, -1.0 / 16}};
  }
  throw std::invalid_argument("stencil_order must be 2 or 4");
}

inline int stencil_half_width(int order) { return order / 2; }

/// d/dx_axis (derivative == true) or midpoint interpolation along `axis`,
/// mapping lattice `from` to lattice from ^ (1 << axis).
inline SpMat staggered_shift(const Grid& grid, Parity from, int axis, bool derivative)
{
  const Parity to = from ^ (1u << axis);
  const Lattice& src = grid.lattice(from);
  const Lattice& dst = grid.lattice(to);
  const Axis& ax = grid.axis(axis);
  const bool src_half = (from >> axis) & 1u;
  const bool dst_half = !src_half;
  const double scale = derivative ? 1.0 / ax.step : 1.0;
  const Stencil wide = staggered_stencil(grid.stencil_order(), derivative);
  const Stencil narrow = staggered_stencil(2, derivative);

  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(dst.size()) * wide.offsets.size());
  std::vector<int> nodes;
  for (int p = 0; p < dst.size(); ++p) {
    const int i = dst.box_coordinate(p, axis);
    const double x = ax.coordinate(dst_half, i);
    long base = 0;  // source box index with the `axis` coordinate removed
    for (int a = 0; a < grid.dim(); ++a)
      if (a != axis) base += static_cast<long>(dst.box_coordinate(p, a)) * src.stride[static_cast<std::size_t>(a)];

    auto gather = [&](const Stencil& st) {
      nodes.clear();
      bool complete = true;
      for (double o : st.offsets) {
        const std::optional<int> j = ax.index_of(src_half, x + o * ax.step);
        const int q = j ? src.node_of_box[static_cast<std::size_t>(base + static_cast<long>(*j) *
                                                                              src.stride[static_cast<std::size_t>(axis)])]
                        : -1;
        nodes.push_back(q);
        complete = complete && q >= 0;
      }
      return complete;
    };
    const Stencil* st = &wide;
    const bool complete = gather(wide);
    if (!complete && ax.kind == AxisKind::Line && grid.options().closure == Closure::Dirichlet) {
      for (std::size_t s = 0; s < st->offsets.size(); ++s)
        if (nodes[s] >= 0) trips.emplace_back(p, nodes[s], st->coeffs[s] * scale);
      continue;
    }
    if (!complete) {
      st = &narrow;
      if (!gather(narrow)) {
        // Edge of the chart: no difference across it, and interpolation
        // copies the surviving neighbour.
        if (derivative) continue;
        const int q = nodes[0] >= 0 ? nodes[0] : nodes[1];
        if (q >= 0) trips.emplace_back(p, q, 1.0);
        continue;
      }
    }
    for (std::size_t s = 0; s < st->offsets.size(); ++s) trips.emplace_back(p, nodes[s], st->coeffs[s] * scale);
  }
  SpMat m(dst.size(), src.size());
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

}  // namespace shrinker
