#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "fbac/errors.hpp"
#include "fbac/linalg.hpp"

namespace fbac {

/// Axis-aligned box.
struct Box {
  Vec lo, hi;

  int dim() const { return lo.n; }
  double side(int axis) const { return hi[axis] - lo[axis]; }
};

using Index = std::array<int, 3>;

/// Uniform structured grid over a box, d in {2, 3}. Spacing is isotropic.
struct Grid {
  int dim = 0;
  Index shape{1, 1, 1};
  Vec origin;
  double h = 0.0;

  size_t num_nodes() const {
    size_t n = 1;
    for (int a = 0; a < dim; ++a) n *= static_cast<size_t>(shape[size_t(a)]);
    return n;
  }

  /// Row-major flat index, last axis fastest.
  size_t flat(const Index& i) const {
    size_t f = 0;
    for (int a = 0; a < dim; ++a) f = f * size_t(shape[size_t(a)]) + size_t(i[size_t(a)]);
    return f;
  }

  Index unflat(size_t f) const {
    Index i{0, 0, 0};
    for (int a = dim - 1; a >= 0; --a) {
      i[size_t(a)] = int(f % size_t(shape[size_t(a)]));
      f /= size_t(shape[size_t(a)]);
    }
    return i;
  }

  Vec node(const Index& i) const {
    Vec p(dim);
    for (int a = 0; a < dim; ++a) p[a] = origin[a] + double(i[size_t(a)]) * h;
    return p;
  }

  Box box() const {
    Box b;
    b.lo = origin;
    b.hi = Vec(dim);
    for (int a = 0; a < dim; ++a) b.hi[a] = origin[a] + double(shape[size_t(a)] - 1) * h;
    return b;
  }

  bool contains(const Vec& p, double slack = 1e-12) const {
    Box b = box();
    for (int a = 0; a < dim; ++a)
      if (p[a] < b.lo[a] - slack || p[a] > b.hi[a] + slack) return false;
    return true;
  }

  /// Minimum distance from p to the box boundary (negative if outside).
  double boundary_distance(const Vec& p) const {
    Box b = box();
    double d = 1e300;
    for (int a = 0; a < dim; ++a) {
      d = std::min(d, p[a] - b.lo[a]);
      d = std::min(d, b.hi[a] - p[a]);
    }
    return d;
  }

  /// Base grid: same grid with the last (vertical) axis dropped.
  Grid base() const {
    Grid g;
    g.dim = dim - 1;
    g.origin = Vec(dim - 1);
    for (int a = 0; a < dim - 1; ++a) {
      g.shape[size_t(a)] = shape[size_t(a)];
      g.origin[a] = origin[a];
    }
    g.shape[size_t(g.dim)] = 1;
    g.h = h;
    return g;
  }
};

/// Build a grid covering the box with spacing h. h must tile every side.
inline Grid build_grid(const Box& box, double h) {
  if (h <= 0.0) throw BadConfig("build_grid: spacing must be positive");
  Grid g;
  g.dim = box.dim();
  g.origin = box.lo;
  g.h = h;
  for (int a = 0; a < g.dim; ++a) {
    double side = box.side(a);
    if (side <= 0.0) throw BadConfig("build_grid: degenerate box");
    double m = side / h;
    long mi = std::lround(m);
    if (mi < 1 || std::abs(double(mi) * h - side) > 1e-12 * std::max(1.0, std::abs(side)))
      throw NonCommensurate("build_grid: h = " + fmt17(h) + " does not tile side " + fmt17(side) +
                            " of axis " + std::to_string(a));
    g.shape[size_t(a)] = int(mi) + 1;
    if (g.shape[size_t(a)] < 4)
      throw TooCoarse("build_grid: axis " + std::to_string(a) + " has only " +
                      std::to_string(g.shape[size_t(a)]) + " nodes (need >= 4)");
  }
  return g;
}

} // namespace fbac
