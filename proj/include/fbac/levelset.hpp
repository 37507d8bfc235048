#pragma once

#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "fbac/field.hpp"

namespace fbac {

// ============================================================================
// Level surfaces as height graphs
// ============================================================================

/// A level set {u = tau} represented as a height graph over the base grid,
/// with cached first/second fundamental data.
///
/// Conventions: nu = grad u/|grad u| (positive vertical component),
/// h_ij = D2gamma_ij / W in the coordinate tangent basis with
/// W = sqrt(1 + |Dgamma|^2), H = g^{ij} h_ij = -div nu. Outward-oriented
/// spheres have H = -(d-1)/r.
struct LevelSurface {
  double tau = 0.0;
  Grid base;                    // n = d-1 dimensional grid
  std::vector<double> gamma;    // heights per base node
  std::vector<Vec> dgamma;      // Dgamma (n-vector)
  std::vector<Mat> d2gamma;     // D2gamma (n x n, symmetric)
  std::vector<Mat> metric;      // g = I + Dgamma (x) Dgamma
  std::vector<Mat> metric_inv;
  std::vector<Vec> nu;          // unit normal, d components
  std::vector<double> sigma;    // 1/|grad u| at (x, gamma(x)); 0 where unavailable
  std::vector<Mat> hform;       // h_ij (coordinate basis)
  std::vector<double> Hmean;    // g-trace of hform
  bool extrapolated = false;    // built by tau-extrapolation rather than extraction

  size_t num_nodes() const { return base.num_nodes(); }

  double W(size_t f) const { return std::sqrt(1.0 + dot(dgamma[f], dgamma[f])); }

  /// Ambient point of a base node.
  Vec point(size_t f) const {
    Index i = base.unflat(f);
    Vec b = base.node(i);
    Vec p(base.dim + 1);
    for (int a = 0; a < base.dim; ++a) p[a] = b[a];
    p[base.dim] = gamma[f];
    return p;
  }

  /// Shape operator g^{-1} h eigenvalues (principal curvatures).
  std::array<double, 2> principal_curvatures(size_t f) const {
    return real_eigenvalues_2(matmul(metric_inv[f], hform[f]));
  }

  /// max |principal curvature| at a node.
  double curvature_spectral(size_t f) const {
    auto pc = principal_curvatures(f);
    double r = std::abs(pc[0]);
    if (base.dim == 2) r = std::max(r, std::abs(pc[1]));
    return r;
  }

  /// Frobenius-squared norm of h: sum of squared principal curvatures.
  double hnorm2(size_t f) const {
    auto pc = principal_curvatures(f);
    double r = pc[0] * pc[0];
    if (base.dim == 2) r += pc[1] * pc[1];
    return r;
  }

  /// h as an ambient (d x d) symmetric bilinear form on the tangent space.
  Mat ambient_h(size_t f) const {
    int n = base.dim;
    int d = n + 1;
    // tangent basis e_i = (delta_i, dgamma_i)
    Mat gih = matmul(metric_inv[f], matmul(hform[f], metric_inv[f]));
    Mat A(d);
    for (int p = 0; p < d; ++p)
      for (int q = 0; q < d; ++q) {
        double s = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            double eip = (p < n) ? (p == i ? 1.0 : 0.0) : dgamma[f][i];
            double ejq = (q < n) ? (q == j ? 1.0 : 0.0) : dgamma[f][j];
            s += eip * gih(i, j) * ejq;
          }
        A(p, q) = s;
      }
    return A;
  }
};

namespace detail {

/// Fill derivative caches of a height graph (heights already known).
/// Central differences in the interior, second-order one-sided at base edges.
inline void fill_graph_caches(LevelSurface& s, const ScalarField* u) {
  const Grid& b = s.base;
  int n = b.dim;
  size_t nn = b.num_nodes();
  NodalDiff diff(b, s.gamma);
  s.dgamma.assign(nn, Vec(n));
  s.d2gamma.assign(nn, Mat(n));
  s.metric.assign(nn, Mat(n));
  s.metric_inv.assign(nn, Mat(n));
  s.nu.assign(nn, Vec(n + 1));
  s.hform.assign(nn, Mat(n));
  s.Hmean.assign(nn, 0.0);
  if (s.sigma.size() != nn) s.sigma.assign(nn, 0.0);

  for (size_t f = 0; f < nn; ++f) {
    Index i = b.unflat(f);
    Vec dg(n);
    for (int a = 0; a < n; ++a) dg[a] = diff.d1(i, a);
    s.dgamma[f] = dg;
    Mat d2(n);
    for (int a = 0; a < n; ++a) d2(a, a) = diff.d2(i, a);
    s.d2gamma[f] = d2;
  }
  if (n == 2) {
    // mixed second derivative from the first-derivative arrays, symmetrized
    std::vector<double> g0(nn), g1(nn);
    for (size_t f = 0; f < nn; ++f) {
      g0[f] = s.dgamma[f][0];
      g1[f] = s.dgamma[f][1];
    }
    NodalDiff d0(b, g0), d1(b, g1);
    for (size_t f = 0; f < nn; ++f) {
      Index i = b.unflat(f);
      double m = 0.5 * (d0.d1(i, 1) + d1.d1(i, 0));
      s.d2gamma[f](0, 1) = m;
      s.d2gamma[f](1, 0) = m;
    }
  }
  for (size_t f = 0; f < nn; ++f) {
    const Vec& dg = s.dgamma[f];
    double w = std::sqrt(1.0 + dot(dg, dg));
    Mat g = Mat::identity(n) + outer(dg, dg);
    s.metric[f] = g;
    s.metric_inv[f] = inverse(g);
    Vec normal(n + 1);
    for (int a = 0; a < n; ++a) normal[a] = -dg[a] / w;
    normal[n] = 1.0 / w;
    s.nu[f] = normal;
    s.hform[f] = s.d2gamma[f] * (1.0 / w);
    s.Hmean[f] = matmul(s.metric_inv[f], s.hform[f]).trace();
    if (u) {
      Vec p = s.point(f);
      double gnorm = norm(u->gradient_at_cubic_unchecked(p));
      s.sigma[f] = gnorm > 1e-14 ? 1.0 / gnorm : 0.0;
    }
  }
}

} // namespace detail

/// Extract the level {u = tau} as a height graph: per base column, bracket the
/// crossing and run 40 bisection steps on the interpolated field. Requires a
/// single monotone crossing per column and heights at least 2h away from the
/// vertical box edges.
inline LevelSurface extract_level(const ScalarField& u, double tau) {
  const Grid& g = u.grid();
  if (std::abs(tau) >= 1.0 && u.eps())
    throw BadConfig("extract_level: |tau| must be < 1 for solution fields");
  int vert = g.dim - 1;
  int m = g.shape[size_t(vert)];
  LevelSurface s;
  s.tau = tau;
  s.base = g.base();
  size_t nb = s.base.num_nodes();
  s.gamma.assign(nb, 0.0);
  s.sigma.assign(nb, 0.0);

  double ylo = g.origin[vert];
  Box box = g.box();
  for (size_t f = 0; f < nb; ++f) {
    Index bi = s.base.unflat(f);
    Index i{0, 0, 0};
    for (int a = 0; a < vert; ++a) i[size_t(a)] = bi[size_t(a)];
    int bracket = -1;
    for (int k = 0; k + 1 < m; ++k) {
      i[size_t(vert)] = k;
      double a0 = u.value(i) - tau;
      i[size_t(vert)] = k + 1;
      double a1 = u.value(i) - tau;
      // half-open: u <= tau below, u > tau above (a node hit counts once);
      // a downward crossing violates the monotone-column precondition
      bool up = a0 <= 0.0 && a1 > 0.0;
      bool down = a0 >= 0.0 && a1 < 0.0;
      if (up || (down && bracket >= 0)) {
        if (bracket >= 0)
          throw MultipleCrossings("extract_level: multiple crossings in column " +
                                  std::to_string(f));
        bracket = k;
      } else if (down) {
        throw MultipleCrossings("extract_level: decreasing crossing in column " +
                                std::to_string(f));
      }
    }
    if (bracket < 0)
      throw NoCrossing("extract_level: no crossing of tau=" + fmt17(tau) + " in column " +
                       std::to_string(f));
    Vec b = s.base.node(bi);
    Vec p(g.dim);
    for (int a = 0; a < vert; ++a) p[a] = b[a];
    double lo = ylo + double(bracket) * g.h;
    double hi = lo + g.h;
    for (int it = 0; it < 40; ++it) {
      double mid = 0.5 * (lo + hi);
      p[vert] = mid;
      if (u.sample(p) - tau <= 0.0)
        lo = mid;
      else
        hi = mid;
    }
    double height = 0.5 * (lo + hi);
    // Refine on the 4-point column cubic when its stencil is monotone: the
    // piecewise-linear root has an O(h^2) error whose cell phase wraps, which
    // second-differencing would amplify to O(1) curvature noise.
    {
      int start = std::clamp(bracket - 1, 0, m - 4);
      double v[4];
      bool mono = true;
      for (int c = 0; c < 4; ++c) {
        i[size_t(vert)] = start + c;
        v[c] = u.value(i);
        if (c > 0 && v[c] <= v[c - 1]) mono = false;
      }
      if (mono) {
        auto cubic = [&](double xi) {
          double w0 = -(xi - 1.0) * (xi - 2.0) * (xi - 3.0) / 6.0;
          double w1 = xi * (xi - 2.0) * (xi - 3.0) / 2.0;
          double w2 = -xi * (xi - 1.0) * (xi - 3.0) / 2.0;
          double w3 = xi * (xi - 1.0) * (xi - 2.0) / 6.0;
          return w0 * v[0] + w1 * v[1] + w2 * v[2] + w3 * v[3] - tau;
        };
        double xlo = double(bracket - start);
        double xhi = xlo + 1.0;
        if (cubic(xlo) <= 0.0 && cubic(xhi) > 0.0) {
          for (int it = 0; it < 40; ++it) {
            double mid = 0.5 * (xlo + xhi);
            if (cubic(mid) <= 0.0)
              xlo = mid;
            else
              xhi = mid;
          }
          height = ylo + (double(start) + 0.5 * (xlo + xhi)) * g.h;
        }
      }
    }
    s.gamma[f] = height;
    if (height - box.lo[vert] < 2.0 * g.h || box.hi[vert] - height < 2.0 * g.h)
      throw TooNearBoundary("extract_level: height within 2h of the vertical box edge at column " +
                            std::to_string(f));
  }
  detail::fill_graph_caches(s, &u);
  return s;
}

/// Second fundamental form and mean curvature straight from the ambient field:
/// h = -P Hess u P / |grad u| with P = I - nu (x) nu. Cross-checks the
/// graph-based geometry.
struct ShapeAtPoint {
  Mat h;     // ambient d x d, tangent-restricted
  double H;  // trace
  Vec nu;
  double sigma;
};

inline ShapeAtPoint shape_from_field(const ScalarField& u, const Vec& p) {
  Vec grad = u.gradient_at_cubic(p);
  double gn = norm(grad);
  if (gn < 1e-8) throw DegenerateGradient("shape_from_field: |grad u| < 1e-8");
  Vec normal = grad * (1.0 / gn);
  Mat P = Mat::identity(p.n) - outer(normal, normal);
  Mat hess = u.hessian_at_cubic(p);
  Mat h = matmul(P, matmul(hess, P)) * (-1.0 / gn);
  ShapeAtPoint r;
  r.h = h;
  r.H = h.trace();
  r.nu = normal;
  r.sigma = 1.0 / gn;
  return r;
}

/// eta = sup over levels and base nodes (|x| <= max_radius) of the spectral
/// norm of h (largest |principal curvature|).
inline double eta_bound(const ScalarField& u, const std::vector<double>& tau_samples,
                        double max_radius = 1e300) {
  double eta = 0.0;
  for (double tau : tau_samples) {
    LevelSurface s = extract_level(u, tau);
    for (size_t f = 0; f < s.num_nodes(); ++f) {
      Vec b = s.base.node(s.base.unflat(f));
      if (norm(b) > max_radius + 1e-12) continue;
      eta = std::max(eta, s.curvature_spectral(f));
    }
  }
  return eta;
}

/// Conservative Laplace-Beltrami discretization of
/// (1/sqrt(g)) d_i(sqrt(g) g^{ij} d_j f) with midpoint-averaged coefficients.
/// Valid at interior base nodes; edge entries are left as zero.
inline std::vector<double> laplace_beltrami(const LevelSurface& s, const std::vector<double>& f) {
  const Grid& b = s.base;
  int n = b.dim;
  double h = b.h;
  size_t nn = b.num_nodes();
  if (f.size() != nn) throw BadConfig("laplace_beltrami: value count mismatch");
  std::vector<double> out(nn, 0.0);

  auto sqrtg = [&](size_t idx) { return std::sqrt(1.0 + dot(s.dgamma[idx], s.dgamma[idx])); };
  auto coef = [&](size_t idx, int i, int j) { return sqrtg(idx) * s.metric_inv[idx](i, j); };

  if (n == 1) {
    int m = b.shape[0];
    for (int k = 1; k + 1 < m; ++k) {
      size_t c = size_t(k);
      double cp = 0.5 * (coef(c, 0, 0) + coef(c + 1, 0, 0));
      double cm = 0.5 * (coef(c, 0, 0) + coef(c - 1, 0, 0));
      out[c] = (cp * (f[c + 1] - f[c]) - cm * (f[c] - f[c - 1])) / (h * h * sqrtg(c));
    }
    return out;
  }

  int m0 = b.shape[0], m1 = b.shape[1];
  auto id = [&](int i, int j) { return size_t(i) * size_t(m1) + size_t(j); };
  auto dmid = [&](const std::vector<double>& v, int i, int j, int axis, int dir) {
    // derivative along `axis` averaged at the face between (i,j) and its
    // neighbour in direction `dir` along the other axis
    if (axis == 0) {
      double a = (v[id(i + 1, j)] - v[id(i - 1, j)]) / (2 * h);
      double bq = (dir > 0) ? (v[id(i + 1, j + 1)] - v[id(i - 1, j + 1)]) / (2 * h)
                            : (v[id(i + 1, j - 1)] - v[id(i - 1, j - 1)]) / (2 * h);
      return 0.5 * (a + bq);
    }
    double a = (v[id(i, j + 1)] - v[id(i, j - 1)]) / (2 * h);
    double bq = (dir > 0) ? (v[id(i + 1, j + 1)] - v[id(i + 1, j - 1)]) / (2 * h)
                          : (v[id(i - 1, j + 1)] - v[id(i - 1, j - 1)]) / (2 * h);
    return 0.5 * (a + bq);
  };

  for (int i = 2; i + 2 < m0; ++i)
    for (int j = 2; j + 2 < m1; ++j) {
      size_t c = id(i, j);
      // fluxes through the four faces
      double F0p = 0.5 * (coef(c, 0, 0) + coef(id(i + 1, j), 0, 0)) * (f[id(i + 1, j)] - f[c]) / h +
                   0.5 * (coef(c, 0, 1) + coef(id(i + 1, j), 0, 1)) * dmid(f, i, j, 1, +1);
      double F0m = 0.5 * (coef(c, 0, 0) + coef(id(i - 1, j), 0, 0)) * (f[c] - f[id(i - 1, j)]) / h +
                   0.5 * (coef(c, 0, 1) + coef(id(i - 1, j), 0, 1)) * dmid(f, i, j, 1, -1);
      double F1p = 0.5 * (coef(c, 1, 1) + coef(id(i, j + 1), 1, 1)) * (f[id(i, j + 1)] - f[c]) / h +
                   0.5 * (coef(c, 1, 0) + coef(id(i, j + 1), 1, 0)) * dmid(f, i, j, 0, +1);
      double F1m = 0.5 * (coef(c, 1, 1) + coef(id(i, j - 1), 1, 1)) * (f[c] - f[id(i, j - 1)]) / h +
                   0.5 * (coef(c, 1, 0) + coef(id(i, j - 1), 1, 0)) * dmid(f, i, j, 0, -1);
      out[c] = ((F0p - F0m) + (F1p - F1m)) / (h * sqrtg(c));
    }
  // first interior ring: fall back to the 5-point form without mixed terms
  for (int i = 1; i + 1 < m0; ++i)
    for (int j = 1; j + 1 < m1; ++j) {
      if (i >= 2 && i + 2 < m0 && j >= 2 && j + 2 < m1) continue;
      size_t c = id(i, j);
      double F0p = 0.5 * (coef(c, 0, 0) + coef(id(i + 1, j), 0, 0)) * (f[id(i + 1, j)] - f[c]) / h;
      double F0m = 0.5 * (coef(c, 0, 0) + coef(id(i - 1, j), 0, 0)) * (f[c] - f[id(i - 1, j)]) / h;
      double F1p = 0.5 * (coef(c, 1, 1) + coef(id(i, j + 1), 1, 1)) * (f[id(i, j + 1)] - f[c]) / h;
      double F1m = 0.5 * (coef(c, 1, 1) + coef(id(i, j - 1), 1, 1)) * (f[c] - f[id(i, j - 1)]) / h;
      out[c] = ((F0p - F0m) + (F1p - F1m)) / (h * sqrtg(c));
    }
  return out;
}

// ============================================================================
// Hoelder norms
// ============================================================================

struct HolderNorm {
  double alpha = 0.0;
  double sup_part = 0.0;
  double seminorm_part = 0.0;
  std::string region;

  double total() const { return sup_part + seminorm_part; }
};

/// C^alpha norm of scalar node values by exhaustive pair scan (this is the
/// brute-force oracle; O(N^2) on the region).
inline HolderNorm holder_norm(const Grid& base, const std::vector<double>& values, double alpha,
                              double max_radius = 0.5) {
  if (alpha <= 0.0 || alpha > 1.0) throw BadConfig("holder_norm: alpha must be in (0,1]");
  std::vector<size_t> region;
  std::vector<Vec> pos;
  for (size_t f = 0; f < base.num_nodes(); ++f) {
    Vec b = base.node(base.unflat(f));
    if (norm(b) <= max_radius + 1e-12) {
      region.push_back(f);
      pos.push_back(b);
    }
  }
  if (region.empty()) throw EmptyRegion("holder_norm: empty region");
  HolderNorm r;
  r.alpha = alpha;
  r.region = "|x| <= " + fmt17(max_radius);
  for (size_t a = 0; a < region.size(); ++a) {
    r.sup_part = std::max(r.sup_part, std::abs(values[region[a]]));
    for (size_t b = a + 1; b < region.size(); ++b) {
      double d = norm(pos[a] - pos[b]);
      double diff = std::abs(values[region[a]] - values[region[b]]);
      r.seminorm_part = std::max(r.seminorm_part, diff / std::pow(d, alpha));
    }
  }
  return r;
}

/// Matrix-valued variant: pointwise magnitudes and differences in spectral norm.
inline HolderNorm holder_norm(const Grid& base, const std::vector<Mat>& values, double alpha,
                              double max_radius = 0.5) {
  if (alpha <= 0.0 || alpha > 1.0) throw BadConfig("holder_norm: alpha must be in (0,1]");
  std::vector<size_t> region;
  std::vector<Vec> pos;
  for (size_t f = 0; f < base.num_nodes(); ++f) {
    Vec b = base.node(base.unflat(f));
    if (norm(b) <= max_radius + 1e-12) {
      region.push_back(f);
      pos.push_back(b);
    }
  }
  if (region.empty()) throw EmptyRegion("holder_norm: empty region");
  HolderNorm r;
  r.alpha = alpha;
  r.region = "|x| <= " + fmt17(max_radius);
  for (size_t a = 0; a < region.size(); ++a) {
    r.sup_part = std::max(r.sup_part, spectral_norm_sym(values[region[a]]));
    for (size_t b = a + 1; b < region.size(); ++b) {
      double d = norm(pos[a] - pos[b]);
      double diff = spectral_norm_sym(values[region[a]] - values[region[b]]);
      r.seminorm_part = std::max(r.seminorm_part, diff / std::pow(d, alpha));
    }
  }
  return r;
}

// ============================================================================
// Derived sigma field and CSV dump
// ============================================================================

/// Ambient surface-velocity field sigma = 1/|grad u| sampled at the nodes
/// (one-sided gradients on the boundary ring). Nodes where |grad u| < floor
/// get the sentinel 0; consumers must sample at least 4h inside the layer.
inline ScalarField sigma_field(const ScalarField& u, double floor_grad = 1e-8) {
  const Grid& g = u.grid();
  size_t n = g.num_nodes();
  std::vector<double> v(n, 0.0);
  for (size_t f = 0; f < n; ++f) {
    Index i = g.unflat(f);
    double s2 = 0;
    for (int a = 0; a < g.dim; ++a) {
      double gc = u.nodal_gradient(i, a);
      s2 += gc * gc;
    }
    double gn = std::sqrt(s2);
    v[f] = gn > floor_grad ? 1.0 / gn : 0.0;
  }
  return ScalarField(g, std::move(v), "sigma(" + u.label() + ")", u.eps());
}

/// Level-surface CSV: x1[,x2],gamma,sigma,H,h11[,h12,h22], one row per base node.
inline void dump_level_csv(const LevelSurface& s, std::ostream& os) {
  int n = s.base.dim;
  if (n == 1)
    os << "x1,gamma,sigma,H,h11\n";
  else
    os << "x1,x2,gamma,sigma,H,h11,h12,h22\n";
  for (size_t f = 0; f < s.num_nodes(); ++f) {
    Vec b = s.base.node(s.base.unflat(f));
    os << fmt17(b[0]);
    if (n == 2) os << "," << fmt17(b[1]);
    os << "," << fmt17(s.gamma[f]) << "," << fmt17(s.sigma[f]) << "," << fmt17(s.Hmean[f]);
    os << "," << fmt17(s.hform[f](0, 0));
    if (n == 2) os << "," << fmt17(s.hform[f](0, 1)) << "," << fmt17(s.hform[f](1, 1));
    os << "\n";
  }
}

} // namespace fbac
