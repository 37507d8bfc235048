#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fbac/errors.hpp"
#include "fbac/grid.hpp"
#include "fbac/linalg.hpp"

namespace fbac {

namespace detail {

/// Nodal derivative of a grid array along one axis: central in the interior,
/// second-order one-sided on the boundary ring.
class NodalDiff {
public:
  NodalDiff(const Grid& g, const std::vector<double>& f) : g_(g), f_(f) {}

  double d1(Index i, int axis) const {
    int m = g_.shape[size_t(axis)];
    int k = i[size_t(axis)];
    double h = g_.h;
    if (k == 0) return (-3.0 * at(i, axis, 0) + 4.0 * at(i, axis, 1) - at(i, axis, 2)) / (2.0 * h);
    if (k == m - 1)
      return (3.0 * at(i, axis, 0) - 4.0 * at(i, axis, -1) + at(i, axis, -2)) / (2.0 * h);
    return (at(i, axis, 1) - at(i, axis, -1)) / (2.0 * h);
  }

  double d2(Index i, int axis) const {
    int m = g_.shape[size_t(axis)];
    int k = i[size_t(axis)];
    double h2 = g_.h * g_.h;
    if (k == 0)
      return (2.0 * at(i, axis, 0) - 5.0 * at(i, axis, 1) + 4.0 * at(i, axis, 2) - at(i, axis, 3)) / h2;
    if (k == m - 1)
      return (2.0 * at(i, axis, 0) - 5.0 * at(i, axis, -1) + 4.0 * at(i, axis, -2) - at(i, axis, -3)) / h2;
    return (at(i, axis, 1) - 2.0 * at(i, axis, 0) + at(i, axis, -1)) / h2;
  }

private:
  double at(Index i, int axis, int off) const {
    i[size_t(axis)] += off;
    return f_[g_.flat(i)];
  }
  const Grid& g_;
  const std::vector<double>& f_;
};

} // namespace detail

/// Grid-sampled scalar function with multilinear interpolation and
/// second-order nodal finite differences (derivatives are computed at nodes,
/// then interpolated to the query point).
class ScalarField {
public:
  ScalarField() = default;
  ScalarField(Grid grid, std::vector<double> values, std::string label = {},
              std::optional<double> eps = std::nullopt)
      : grid_(std::move(grid)), values_(std::move(values)), label_(std::move(label)), eps_(eps) {
    if (values_.size() != grid_.num_nodes())
      throw BadConfig("ScalarField: value count does not match grid");
    for (double v : values_)
      if (!std::isfinite(v)) throw BadConfig("ScalarField: non-finite value");
    if (eps_ && *eps_ <= 0.0) throw BadConfig("ScalarField: eps must be positive");
  }

  const Grid& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  const std::string& label() const { return label_; }
  std::optional<double> eps() const { return eps_; }
  void set_label(std::string s) { label_ = std::move(s); }
  void set_eps(double e) { eps_ = e; }

  double value(const Index& i) const { return values_[grid_.flat(i)]; }

  /// Multilinear interpolation. Exact at nodes and on affine functions.
  double sample(const Vec& p) const {
    check_inside(p);
    return interp(values_, p);
  }

  /// Multilinear in the base axes, 4-point Lagrange cubic along the vertical
  /// axis. Restrictions to height graphs need the cubic: the multilinear
  /// error's cell phase wraps with the height and second-differencing it
  /// produces O(1) noise.
  double sample_vertical_cubic(const Vec& p) const {
    check_inside(p);
    int d = grid_.dim;
    int vert = d - 1;
    Index cell{0, 0, 0};
    double t[3] = {0, 0, 0};
    for (int a = 0; a < vert; ++a) {
      double x = (p[a] - grid_.origin[a]) / grid_.h;
      int i = std::clamp(int(std::floor(x)), 0, grid_.shape[size_t(a)] - 2);
      double frac = x - double(i);
      if (frac < 1e-9) frac = 0.0;
      if (frac > 1.0 - 1e-9) frac = 1.0;
      cell[size_t(a)] = i;
      t[a] = frac;
    }
    double xv = (p[vert] - grid_.origin[vert]) / grid_.h;
    int start = std::clamp(int(std::floor(xv)) - 1, 0, grid_.shape[size_t(vert)] - 4);
    double xi = xv - double(start);
    double w[4];
    w[0] = -(xi - 1.0) * (xi - 2.0) * (xi - 3.0) / 6.0;
    w[1] = xi * (xi - 2.0) * (xi - 3.0) / 2.0;
    w[2] = -xi * (xi - 1.0) * (xi - 3.0) / 2.0;
    w[3] = xi * (xi - 1.0) * (xi - 2.0) / 6.0;

    double acc = 0.0;
    int corners = 1 << vert;
    for (int c = 0; c < corners; ++c) {
      double bw = 1.0;
      Index idx = cell;
      for (int a = 0; a < vert; ++a) {
        int bit = (c >> a) & 1;
        bw *= bit ? t[a] : (1.0 - t[a]);
        idx[size_t(a)] += bit;
      }
      if (bw == 0.0) continue;
      double col = 0.0;
      for (int j = 0; j < 4; ++j) {
        idx[size_t(vert)] = start + j;
        col += w[j] * values_[grid_.flat(idx)];
      }
      acc += bw * col;
    }
    return acc;
  }

  /// Interpolated nodal central-difference gradient. Requires p at distance
  /// >= 2h from the box boundary.
  Vec gradient_at(const Vec& p) const {
    check_margin(p);
    ensure_derivs();
    Vec g(grid_.dim);
    for (int a = 0; a < grid_.dim; ++a) g[a] = interp(grad_[size_t(a)], p);
    return g;
  }

  /// Gradient without the 2h interior-margin requirement: boundary-ring nodes
  /// contribute one-sided stencils. For callers that must evaluate up to the
  /// lateral boundary (level-surface caches on the full base).
  Vec gradient_at_unchecked(const Vec& p) const {
    check_inside(p);
    ensure_derivs();
    Vec g(grid_.dim);
    for (int a = 0; a < grid_.dim; ++a) g[a] = interp(grad_[size_t(a)], p);
    return g;
  }

  /// Interpolated nodal second-difference Hessian (symmetric).
  Mat hessian_at(const Vec& p) const {
    check_margin(p);
    ensure_derivs();
    Mat m(grid_.dim);
    for (int a = 0; a < grid_.dim; ++a)
      for (int b = a; b < grid_.dim; ++b) {
        double v = interp(hess_[size_t(comp(a, b))], p);
        m(a, b) = v;
        m(b, a) = v;
      }
    return m;
  }

  double laplacian_at(const Vec& p) const { return hessian_at(p).trace(); }

  /// Cubic-interpolated variants of the nodal-derivative samplers. Series
  /// sampled along flow trajectories need these: the multilinear error's cell
  /// phase wraps along the path, which a tau-difference quotient amplifies to
  /// an h^2/dtau noise floor.
  Vec gradient_at_cubic(const Vec& p) const {
    check_margin(p);
    ensure_derivs();
    Vec g(grid_.dim);
    for (int a = 0; a < grid_.dim; ++a) g[a] = interp_cubic(grad_[size_t(a)], p);
    return g;
  }

  /// As gradient_at_cubic without the margin requirement (one-sided stencils
  /// near edges); for surface caches that extend to the lateral boundary.
  Vec gradient_at_cubic_unchecked(const Vec& p) const {
    check_inside(p);
    ensure_derivs();
    Vec g(grid_.dim);
    for (int a = 0; a < grid_.dim; ++a) g[a] = interp_cubic(grad_[size_t(a)], p);
    return g;
  }

  Mat hessian_at_cubic(const Vec& p) const {
    check_margin(p);
    ensure_derivs();
    Mat m(grid_.dim);
    for (int a = 0; a < grid_.dim; ++a)
      for (int b = a; b < grid_.dim; ++b) {
        double v = interp_cubic(hess_[size_t(comp(a, b))], p);
        m(a, b) = v;
        m(b, a) = v;
      }
    return m;
  }

  double laplacian_at_cubic(const Vec& p) const { return hessian_at_cubic(p).trace(); }

  /// Nodal gradient component (no interpolation); boundary ring is one-sided.
  double nodal_gradient(const Index& i, int axis) const {
    ensure_derivs();
    return grad_[size_t(axis)][grid_.flat(i)];
  }

  double nodal_laplacian(const Index& i) const {
    ensure_derivs();
    double s = 0;
    size_t f = grid_.flat(i);
    for (int a = 0; a < grid_.dim; ++a) s += hess_[size_t(comp(a, a))][f];
    return s;
  }

private:
  static int comp_count(int d) { return d * (d + 1) / 2; }
  int comp(int a, int b) const {
    // components ordered (0,0),(0,1),...,(0,d-1),(1,1),...
    int d = grid_.dim;
    int idx = 0;
    for (int r = 0; r < a; ++r) idx += d - r;
    return idx + (b - a);
  }

  void check_inside(const Vec& p) const {
    if (p.n != grid_.dim) throw BadConfig("sample: point dimension mismatch");
    if (!grid_.contains(p))
      throw OutOfDomain("point outside the field domain");
  }

  void check_margin(const Vec& p) const {
    check_inside(p);
    if (grid_.boundary_distance(p) < 2.0 * grid_.h - 1e-12)
      throw TooNearBoundary("point closer than 2h to the box boundary");
  }

  double interp(const std::vector<double>& f, const Vec& p) const {
    int d = grid_.dim;
    Index cell{0, 0, 0};
    double t[3] = {0, 0, 0};
    for (int a = 0; a < d; ++a) {
      double x = (p[a] - grid_.origin[a]) / grid_.h;
      int i = int(std::floor(x));
      i = std::clamp(i, 0, grid_.shape[size_t(a)] - 2);
      double frac = x - double(i);
      if (frac < 1e-9) frac = 0.0;
      if (frac > 1.0 - 1e-9) frac = 1.0;
      cell[size_t(a)] = i;
      t[a] = frac;
    }
    double acc = 0.0;
    int corners = 1 << d;
    for (int c = 0; c < corners; ++c) {
      double w = 1.0;
      Index idx = cell;
      for (int a = 0; a < d; ++a) {
        int bit = (c >> a) & 1;
        w *= bit ? t[a] : (1.0 - t[a]);
        idx[size_t(a)] += bit;
      }
      if (w != 0.0) acc += w * f[grid_.flat(idx)];
    }
    return acc;
  }

  /// Tensor-product 4-point Lagrange interpolation (one-sided near edges).
  double interp_cubic(const std::vector<double>& f, const Vec& p) const {
    int d = grid_.dim;
    int start[3];
    double w[3][4];
    for (int a = 0; a < d; ++a) {
      double x = (p[a] - grid_.origin[a]) / grid_.h;
      int s = std::clamp(int(std::floor(x)) - 1, 0, grid_.shape[size_t(a)] - 4);
      double xi = x - double(s);
      start[a] = s;
      w[a][0] = -(xi - 1.0) * (xi - 2.0) * (xi - 3.0) / 6.0;
      w[a][1] = xi * (xi - 2.0) * (xi - 3.0) / 2.0;
      w[a][2] = -xi * (xi - 1.0) * (xi - 3.0) / 2.0;
      w[a][3] = xi * (xi - 1.0) * (xi - 2.0) / 6.0;
    }
    double acc = 0.0;
    int corners = 1;
    for (int a = 0; a < d; ++a) corners *= 4;
    for (int c = 0; c < corners; ++c) {
      double weight = 1.0;
      Index idx{0, 0, 0};
      int rem = c;
      for (int a = 0; a < d; ++a) {
        int bit = rem % 4;
        rem /= 4;
        weight *= w[a][bit];
        idx[size_t(a)] = start[a] + bit;
      }
      if (weight != 0.0) acc += weight * f[grid_.flat(idx)];
    }
    return acc;
  }

  void ensure_derivs() const {
    if (derivs_ready_) return;
    int d = grid_.dim;
    size_t n = grid_.num_nodes();
    detail::NodalDiff diff(grid_, values_);
    for (int a = 0; a < d; ++a) grad_[size_t(a)].assign(n, 0.0);
    for (int c = 0; c < comp_count(d); ++c) hess_[size_t(c)].assign(n, 0.0);
    for (size_t f = 0; f < n; ++f) {
      Index i = grid_.unflat(f);
      for (int a = 0; a < d; ++a) grad_[size_t(a)][f] = diff.d1(i, a);
    }
    // Pure second derivatives from values; mixed ones from the gradient
    // fields, symmetrized.
    for (size_t f = 0; f < n; ++f) {
      Index i = grid_.unflat(f);
      for (int a = 0; a < d; ++a) hess_[size_t(comp(a, a))][f] = diff.d2(i, a);
    }
    for (int a = 0; a < d; ++a)
      for (int b = a + 1; b < d; ++b) {
        detail::NodalDiff da(grid_, grad_[size_t(a)]);
        detail::NodalDiff db(grid_, grad_[size_t(b)]);
        auto& out = hess_[size_t(comp(a, b))];
        for (size_t f = 0; f < n; ++f) {
          Index i = grid_.unflat(f);
          out[f] = 0.5 * (da.d1(i, b) + db.d1(i, a));
        }
      }
    derivs_ready_ = true;
  }

  Grid grid_;
  std::vector<double> values_;
  std::string label_;
  std::optional<double> eps_;

  mutable bool derivs_ready_ = false;
  mutable std::array<std::vector<double>, 3> grad_;
  mutable std::array<std::vector<double>, 6> hess_;
};

/// Parameters for the analytic oracle fields.
struct OracleParams {
  double eps = 0.0;  // profile1d, tilted
  Vec e;             // tilted: unit direction
  Vec center;        // distance: center point
};

/// Analytic oracle fields sampled exactly at the nodes.
///   profile1d:    clamp(x_d / eps, -1, 1)
///   tilted:       clamp((x . e) / eps, -1, 1)
///   distance:     |x - c|
///   harmonic_exp: exp(x1) cos(x2)
inline ScalarField analytic_field(const std::string& name, const OracleParams& params,
                                  const Grid& grid) {
  size_t n = grid.num_nodes();
  std::vector<double> v(n);
  std::string label;
  std::optional<double> eps;
  if (name == "profile1d") {
    if (params.eps <= 0.0) throw BadConfig("profile1d: eps must be positive");
    for (size_t f = 0; f < n; ++f) {
      Vec p = grid.node(grid.unflat(f));
      v[f] = std::clamp(p[grid.dim - 1] / params.eps, -1.0, 1.0);
    }
    label = "profile1d eps=" + fmt17(params.eps);
    eps = params.eps;
  } else if (name == "tilted") {
    if (params.eps <= 0.0) throw BadConfig("tilted: eps must be positive");
    if (params.e.n != grid.dim || std::abs(norm(params.e) - 1.0) > 1e-12)
      throw BadConfig("tilted: direction must be a unit vector of the grid dimension");
    for (size_t f = 0; f < n; ++f) {
      Vec p = grid.node(grid.unflat(f));
      v[f] = std::clamp(dot(p, params.e) / params.eps, -1.0, 1.0);
    }
    label = "tilted eps=" + fmt17(params.eps);
    eps = params.eps;
  } else if (name == "distance") {
    if (params.center.n != grid.dim) throw BadConfig("distance: center dimension mismatch");
    for (size_t f = 0; f < n; ++f) {
      Vec p = grid.node(grid.unflat(f));
      v[f] = norm(p - params.center);
    }
    label = "distance";
  } else if (name == "harmonic_exp") {
    // exp along the vertical axis, cosine along the first base axis: levels
    // are monotone height graphs over the base
    for (size_t f = 0; f < n; ++f) {
      Vec p = grid.node(grid.unflat(f));
      v[f] = std::exp(p[grid.dim - 1]) * std::cos(p[0]);
    }
    label = "harmonic_exp";
  } else {
    throw UnknownOracle("unknown oracle field: " + name);
  }
  return ScalarField(grid, std::move(v), std::move(label), eps);
}

} // namespace fbac
