#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fbac/expr.hpp"
#include "fbac/field.hpp"
#include "fbac/levelset.hpp"

namespace fbac {

// ============================================================================
// Configuration
// ============================================================================

enum class SolveMode { Variational, TrialFB };
enum class SolveStatus { Converged, MaxIterations };

/// Free-boundary solve configuration. Base is [-1,1]^n, vertical extent
/// [-L, L]; the seed graph gamma0 is an expression over the base coordinates.
struct SolverConfig {
  double eps = 0.1;
  int base_dim = 1;
  double L = 0.5;
  double h = 0.0;                 // 0: choose eps/8
  std::string gamma0_src = "0";
  expr::Expr gamma0;
  std::array<expr::Expr, 2> dgamma0{nullptr, nullptr};
  SolveMode mode = SolveMode::TrialFB;
  std::vector<double> deltas{0.5, 0.25, 0.1, 0.05};
  double lambda = 0.5;
  double lin_tol = 1e-10;
  double tol_fb = 1e-6;
  int max_iter = 5000;

  void finalize() {
    if (h == 0.0) h = eps / 8.0;
    gamma0 = expr::parse(gamma0_src);
    for (int a = 0; a < base_dim; ++a) dgamma0[size_t(a)] = expr::derivative(gamma0, a);
    validate();
  }

  Grid base_grid() const {
    Box b;
    b.lo = Vec(base_dim);
    b.hi = Vec(base_dim);
    for (int a = 0; a < base_dim; ++a) {
      b.lo[a] = -1.0;
      b.hi[a] = 1.0;
    }
    return build_grid(b, h);
  }

  Grid ambient_grid() const {
    Box b;
    b.lo = Vec(base_dim + 1);
    b.hi = Vec(base_dim + 1);
    for (int a = 0; a < base_dim; ++a) {
      b.lo[a] = -1.0;
      b.hi[a] = 1.0;
    }
    b.lo[base_dim] = -L;
    b.hi[base_dim] = L;
    return build_grid(b, h);
  }

  double gamma0_at(const Vec& xb) const { return expr::eval(gamma0, xb); }

  Vec dgamma0_at(const Vec& xb) const {
    Vec d(base_dim);
    for (int a = 0; a < base_dim; ++a) d[a] = expr::eval(dgamma0[size_t(a)], xb);
    return d;
  }

  void validate() const {
    if (!(eps > 0.0 && eps <= 0.2)) throw BadConfig("config: need 0 < eps <= 0.2");
    if (base_dim != 1 && base_dim != 2) throw BadConfig("config: n must be 1 or 2");
    if (!(h > 0.0) || h > eps / 4.0 + 1e-15)
      throw BadConfig("config: need h <= eps/4 (at least 8 nodes across the layer)");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw BadConfig("config: need lambda in (0, 1]");
    if (deltas.empty()) throw BadConfig("config: delta_list must not be empty");
    for (size_t i = 0; i < deltas.size(); ++i) {
      if (!(deltas[i] > 0.0 && deltas[i] < 1.0))
        throw BadConfig("config: delta_list entries must lie in (0, 1)");
      if (i > 0 && deltas[i] >= deltas[i - 1])
        throw BadConfig("config: delta_list must be strictly decreasing");
    }
    if (!(lin_tol > 0.0) || !(tol_fb > 0.0)) throw BadConfig("config: tolerances must be positive");
    if (max_iter < 1) throw BadConfig("config: max_iter must be >= 1");
    // layer fits: sup|gamma0| + 2 eps < L, sampled on the base grid
    Grid bg = base_grid();
    double sup = 0.0;
    for (size_t f = 0; f < bg.num_nodes(); ++f)
      sup = std::max(sup, std::abs(gamma0_at(bg.node(bg.unflat(f)))));
    if (!(sup + 2.0 * eps < L))
      throw BadConfig("config: layer does not fit: sup|gamma0| + 2 eps >= L");
    (void)ambient_grid(); // commensurability
  }
};

inline SolverConfig parse_config(std::istream& is, const std::string& name = "<config>") {
  SolverConfig cfg;
  bool saw_gamma0 = false, saw_eps = false;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = line.substr(0, line.find('#'));
    auto notspace = [](unsigned char c) { return !std::isspace(c); };
    t.erase(t.begin(), std::find_if(t.begin(), t.end(), notspace));
    t.erase(std::find_if(t.rbegin(), t.rend(), notspace).base(), t.end());
    if (t.empty()) continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw BadConfig(name + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = t.substr(0, eq);
    std::string val = t.substr(eq + 1);
    key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
    val.erase(val.begin(), std::find_if(val.begin(), val.end(), notspace));
    auto num = [&](const std::string& v) {
      try {
        return std::stod(v);
      } catch (...) {
        throw BadConfig(name + ":" + std::to_string(lineno) + ": bad number for key " + key);
      }
    };
    if (key == "eps") {
      cfg.eps = num(val);
      saw_eps = true;
    } else if (key == "n")
      cfg.base_dim = int(num(val));
    else if (key == "L")
      cfg.L = num(val);
    else if (key == "h")
      cfg.h = num(val);
    else if (key == "gamma0") {
      cfg.gamma0_src = val;
      saw_gamma0 = true;
    } else if (key == "mode") {
      if (val == "variational")
        cfg.mode = SolveMode::Variational;
      else if (val == "trial_fb")
        cfg.mode = SolveMode::TrialFB;
      else
        throw BadConfig(name + ":" + std::to_string(lineno) + ": mode must be variational or trial_fb");
    } else if (key == "delta_list") {
      cfg.deltas.clear();
      std::istringstream vs(val);
      std::string tok;
      while (std::getline(vs, tok, ',')) cfg.deltas.push_back(num(tok));
    } else if (key == "lambda")
      cfg.lambda = num(val);
    else if (key == "lin_tol")
      cfg.lin_tol = num(val);
    else if (key == "tol_fb")
      cfg.tol_fb = num(val);
    else if (key == "max_iter")
      cfg.max_iter = int(num(val));
    else
      throw BadConfig(name + ":" + std::to_string(lineno) + ": unknown key " + key);
  }
  if (!saw_gamma0) throw BadConfig(name + ": missing key gamma0");
  if (!saw_eps) throw BadConfig(name + ": missing key eps");
  cfg.finalize();
  return cfg;
}

inline SolverConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw BadConfig("cannot open config: " + path);
  return parse_config(is, path);
}

// ============================================================================
// Boundary data and energy
// ============================================================================

/// Tilted 1D profile matched to the seed graph; Dirichlet data for the
/// lateral and cap boundaries.
inline double profile_boundary_data(const SolverConfig& cfg, const Vec& p) {
  Vec xb(cfg.base_dim);
  for (int a = 0; a < cfg.base_dim; ++a) xb[a] = p[a];
  Vec dg = cfg.dgamma0_at(xb);
  double w0 = std::sqrt(1.0 + dot(dg, dg));
  double arg = (p[cfg.base_dim] - cfg.gamma0_at(xb)) / (cfg.eps * w0);
  return std::clamp(arg, -1.0, 1.0);
}

/// Smoothed indicator potential: 1 on |t| <= 1-delta, smoothstep down to 0 at
/// |t| = 1.
inline double s_delta(double t, double delta) {
  double a = std::abs(t);
  if (a <= 1.0 - delta) return 1.0;
  if (a >= 1.0) return 0.0;
  double q = (1.0 - a) / delta;
  return q * q * (3.0 - 2.0 * q);
}

inline double s_delta_prime(double t, double delta) {
  double a = std::abs(t);
  if (a <= 1.0 - delta || a >= 1.0) return 0.0;
  double q = (1.0 - a) / delta;
  double dq = 6.0 * (q - q * q);
  return (t > 0 ? -1.0 : 1.0) * dq / delta;
}

/// Antiderivative of s_delta (odd in t).
inline double s_delta_integral(double t, double delta) {
  double a = std::abs(t);
  double v;
  if (a <= 1.0 - delta) {
    v = a;
  } else if (a < 1.0) {
    double q = (1.0 - a) / delta;
    v = (1.0 - delta) + delta * (0.5 - q * q * q + 0.5 * q * q * q * q);
  } else {
    v = 1.0 - 0.5 * delta;
  }
  return t < 0 ? -v : v;
}

inline double s_delta_second(double t, double delta) {
  double a = std::abs(t);
  if (a <= 1.0 - delta || a >= 1.0) return 0.0;
  double q = (1.0 - a) / delta;
  return (6.0 - 12.0 * q) / (delta * delta);
}

/// Mean of s_delta over the u-interval [a, b] (exact for linear-in-cell u);
/// also its partial derivatives with respect to the endpoints. Small
/// intervals switch to a Taylor form: the antiderivative difference cancels
/// catastrophically and 1e-16/du^2 noise would otherwise pollute the
/// gradient on the near-clamp plateaus.
inline double s_delta_cell_mean(double a, double b, double delta, double* da = nullptr,
                                double* db = nullptr) {
  double du = b - a;
  if (std::abs(du) < 1e-4) {
    double mid = 0.5 * (a + b);
    double sp = s_delta_prime(mid, delta);
    double spp = s_delta_second(mid, delta);
    if (da) *da = 0.5 * sp - spp * du / 12.0;
    if (db) *db = 0.5 * sp + spp * du / 12.0;
    return s_delta(mid, delta) + spp * du * du / 24.0;
  }
  double m = (s_delta_integral(b, delta) - s_delta_integral(a, delta)) / du;
  if (da) *da = (m - s_delta(a, delta)) / du;
  if (db) *db = (s_delta(b, delta) - m) / du;
  return m;
}

namespace detail {

inline double trapezoid_weight(const Grid& g, const Index& i) {
  double w = 1.0;
  for (int a = 0; a < g.dim; ++a)
    if (i[size_t(a)] == 0 || i[size_t(a)] == g.shape[size_t(a)] - 1) w *= 0.5;
  return w;
}

/// Quadrature of eps |grad u|^2 / 2 + pot_weight * s_delta(u): trapezoid
/// weights, nodal central differences (one-sided at the boundary).
inline double energy_quadrature(const ScalarField& u, double eps, double delta,
                                double pot_weight) {
  const Grid& g = u.grid();
  size_t n = g.num_nodes();
  std::vector<double> contrib(n);
  double cell = std::pow(g.h, g.dim);
  for (size_t f = 0; f < n; ++f) {
    Index i = g.unflat(f);
    double g2 = 0;
    for (int a = 0; a < g.dim; ++a) {
      double gc = u.nodal_gradient(i, a);
      g2 += gc * gc;
    }
    double w = trapezoid_weight(g, i);
    contrib[f] = w * cell * (0.5 * eps * g2 + pot_weight * s_delta(u.values()[f], delta));
  }
  return pairwise_sum(contrib);
}

} // namespace detail

/// Energy J_eps with the smoothed indicator potential (quadrature value of
/// integral eps |grad u|^2 / 2 + s_delta(u)/eps).
inline double energy(const ScalarField& u, double eps, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw BadDelta("energy: delta must lie in (0,1)");
  return detail::energy_quadrature(u, eps, delta, 1.0 / eps);
}

// ============================================================================
// Solutions
// ============================================================================

struct ConvergenceLog {
  int iterations = 0;
  std::vector<double> residuals;
  std::vector<double> energies;
  std::vector<std::pair<double, int>> stages; // (delta, iterations) for variational
};

/// A solved free-boundary instance.
struct Solution {
  ScalarField u;
  std::vector<double> gamma_minus, gamma_plus; // heights per base node
  ConvergenceLog log;
  SolveStatus status = SolveStatus::Converged;
  SolverConfig config;

  Grid base_grid() const { return u.grid().base(); }
};

// ============================================================================
// Laplace solve between graphs (slab map + red-black SOR)
// ============================================================================

namespace detail {

/// Variable-coefficient Laplace problem on the slab {gamma- < y < gamma+}
/// mapped to s in [-1,1]: s = 2(y - gamma-)/(gamma+ - gamma-) - 1. Unknowns
/// live on (base nodes) x (ms s-nodes); red-black SOR, matrix-free.
class SlabProblem {
public:
  SlabProblem(const SolverConfig& cfg, const Grid& base, std::vector<double> gm,
              std::vector<double> gp, int ms)
      : cfg_(cfg), base_(base), gm_(std::move(gm)), gp_(std::move(gp)), ms_(ms) {
    nb_ = base_.num_nodes();
    hs_ = 2.0 / double(ms_ - 1);
    hx_ = base_.h;
    build_coefficients();
    v_.assign(nb_ * size_t(ms_), 0.0);
    init_values();
  }

  /// Warm start from a previous solution on the same layout.
  void set_initial(const std::vector<double>& v) {
    if (v.size() == v_.size()) v_ = v;
    init_values(); // re-impose boundary data
  }

  const std::vector<double>& values() const { return v_; }
  int ms() const { return ms_; }
  double hs() const { return hs_; }
  double width(size_t bf) const { return gp_[bf] - gm_[bf]; }

  /// Red-black SOR until sup |residual/diag| < tol.
  /// Returns the residual history (sampled every 10 sweeps).
  std::vector<double> solve(double tol, double omega_override = 0.0) {
    double rho = 0.5 * (std::cos(M_PI / double(std::max(3, base_.shape[0] - 1))) +
                        std::cos(M_PI / double(ms_ - 1)));
    if (base_.dim == 2)
      rho = (std::cos(M_PI / double(base_.shape[0] - 1)) +
             std::cos(M_PI / double(base_.shape[1] - 1)) + std::cos(M_PI / double(ms_ - 1))) /
            3.0;
    double omega = 2.0 / (1.0 + std::sqrt(std::max(0.0, 1.0 - rho * rho)));
    if (omega_override > 0.0) omega = omega_override;
    std::vector<double> history;
    double res = residual_norm();
    history.push_back(res);
    const int max_sweeps = 500000;
    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
      sor_sweep(omega, 0);
      sor_sweep(omega, 1);
      if (sweep % 10 == 0) {
        res = residual_norm();
        history.push_back(res);
        if (res < tol) return history;
        if (history.size() > 11) {
          double prev = history[history.size() - 11];
          if (res > 0.99 * prev)
            throw LinearSolveStall("laplace_between_graphs: residual reduction < 1% per 100 sweeps");
        }
      }
    }
    throw LinearSolveStall("laplace_between_graphs: sweep limit reached");
  }

  /// |grad u| on the upper (side=+1) or lower (side=-1) graph, per base node,
  /// from one-sided slab derivatives.
  std::vector<double> boundary_speed(int side) const {
    std::vector<double> q(nb_);
    int j = side > 0 ? ms_ - 1 : 0;
    for (size_t bf = 0; bf < nb_; ++bf) {
      double vs;
      if (side > 0)
        vs = (3.0 * at(bf, j) - 4.0 * at(bf, j - 1) + at(bf, j - 2)) / (2.0 * hs_);
      else
        vs = (-3.0 * at(bf, j) + 4.0 * at(bf, j + 1) - at(bf, j + 2)) / (2.0 * hs_);
      double d = width(bf);
      double uy = vs * 2.0 / d;
      double q2 = uy * uy;
      for (int a = 0; a < base_.dim; ++a) {
        double vx = dx_row(bf, j, a);
        double aa = coef_a(bf, double(j) * hs_ - 1.0, a);
        double ux = vx + aa * vs;
        q2 += ux * ux;
      }
      q[bf] = std::sqrt(q2);
    }
    return q;
  }

  /// Resample onto the ambient grid: cubic Lagrange in s per column; +-1
  /// outside the slab. Cubic keeps the resampled field's discrete Laplacian
  /// second-order small inside the layer.
  ScalarField resample(const Grid& ambient) const {
    int vert = ambient.dim - 1;
    std::vector<double> out(ambient.num_nodes());
    int mv = ambient.shape[size_t(vert)];
    for (size_t bf = 0; bf < nb_; ++bf) {
      Index bi = base_.unflat(bf);
      double glo = gm_[bf], ghi = gp_[bf];
      double d = ghi - glo;
      Index idx{0, 0, 0};
      for (int a = 0; a < vert; ++a) idx[size_t(a)] = bi[size_t(a)];
      for (int k = 0; k < mv; ++k) {
        idx[size_t(vert)] = k;
        double y = ambient.origin[vert] + double(k) * ambient.h;
        double val;
        if (y <= glo)
          val = -1.0;
        else if (y >= ghi)
          val = 1.0;
        else {
          double t = (2.0 * (y - glo) / d - 1.0 + 1.0) / hs_; // (s+1)/hs
          int start = std::clamp(int(std::floor(t)) - 1, 0, ms_ - 4);
          double xi = t - double(start);
          double w[4];
          w[0] = -(xi - 1.0) * (xi - 2.0) * (xi - 3.0) / 6.0;
          w[1] = xi * (xi - 2.0) * (xi - 3.0) / 2.0;
          w[2] = -xi * (xi - 1.0) * (xi - 3.0) / 2.0;
          w[3] = xi * (xi - 1.0) * (xi - 2.0) / 6.0;
          val = 0.0;
          for (int c = 0; c < 4; ++c) val += w[c] * at(bf, start + c);
          val = std::clamp(val, -1.0, 1.0);
        }
        out[ambient.flat(idx)] = val;
      }
    }
    return ScalarField(ambient, std::move(out), "", cfg_.eps);
  }

private:
  double& at(size_t bf, int j) { return v_[bf * size_t(ms_) + size_t(j)]; }
  double at(size_t bf, int j) const { return v_[bf * size_t(ms_) + size_t(j)]; }

  size_t nbr(size_t bf, int axis, int off) const {
    Index bi = base_.unflat(bf);
    bi[size_t(axis)] += off;
    return base_.flat(bi);
  }

  bool base_edge(size_t bf) const {
    Index bi = base_.unflat(bf);
    for (int a = 0; a < base_.dim; ++a)
      if (bi[size_t(a)] == 0 || bi[size_t(a)] == base_.shape[size_t(a)] - 1) return true;
    return false;
  }

  /// d/dx_a of the slab values along a fixed s-row (central; one-sided at edges).
  double dx_row(size_t bf, int j, int axis) const {
    Index bi = base_.unflat(bf);
    int m = base_.shape[size_t(axis)];
    int k = bi[size_t(axis)];
    if (k == 0)
      return (-3.0 * at(bf, j) + 4.0 * at(nbr(bf, axis, 1), j) - at(nbr(bf, axis, 2), j)) /
             (2.0 * hx_);
    if (k == m - 1)
      return (3.0 * at(bf, j) - 4.0 * at(nbr(bf, axis, -1), j) + at(nbr(bf, axis, -2), j)) /
             (2.0 * hx_);
    return (at(nbr(bf, axis, 1), j) - at(nbr(bf, axis, -1), j)) / (2.0 * hx_);
  }

  /// a_i(x, s) = -(2 gamma-'_i + (s+1) d'_i)/d.
  double coef_a(size_t bf, double s, int axis) const {
    return -(2.0 * dgm_[size_t(axis)][bf] + (s + 1.0) * dd_[size_t(axis)][bf]) / width(bf);
  }

  void build_coefficients() {
    int n = base_.dim;
    NodalDiff dgm(base_, gm_), dgp(base_, gp_);
    for (int a = 0; a < n; ++a) {
      dgm_[size_t(a)].assign(nb_, 0.0);
      dd_[size_t(a)].assign(nb_, 0.0);
    }
    for (size_t f = 0; f < nb_; ++f) {
      Index i = base_.unflat(f);
      for (int a = 0; a < n; ++a) {
        double m = dgm.d1(i, a);
        double p = dgp.d1(i, a);
        dgm_[size_t(a)][f] = m;
        dd_[size_t(a)][f] = p - m;
      }
    }
    // b_a = d(a_a)/dx_a + a_a d(a_a)/ds, from the a-arrays numerically
    for (int a = 0; a < n; ++a) b_[size_t(a)].assign(nb_ * size_t(ms_), 0.0);
    for (int a = 0; a < n; ++a) {
      std::vector<double> arow(nb_);
      for (int j = 0; j < ms_; ++j) {
        double s = double(j) * hs_ - 1.0;
        for (size_t f = 0; f < nb_; ++f) arow[f] = coef_a(f, s, a);
        NodalDiff da(base_, arow);
        for (size_t f = 0; f < nb_; ++f) {
          Index i = base_.unflat(f);
          double dax = da.d1(i, a);
          // d a / d s = -d'_a / d (independent of s)
          double das = -dd_[size_t(a)][f] / width(f);
          b_[size_t(a)][f * size_t(ms_) + size_t(j)] = dax + arow[f] * das;
        }
      }
    }
  }

  void init_values() {
    // Dirichlet rows: u = -1 on gamma-, +1 on gamma+; lateral data from the
    // seed-profile formula at the mapped ambient point.
    for (size_t bf = 0; bf < nb_; ++bf) {
      at(bf, 0) = -1.0;
      at(bf, ms_ - 1) = 1.0;
      if (base_edge(bf)) {
        Index bi = base_.unflat(bf);
        Vec xb = base_.node(bi);
        for (int j = 0; j < ms_; ++j) {
          double s = double(j) * hs_ - 1.0;
          double y = gm_[bf] + (s + 1.0) * width(bf) / 2.0;
          Vec p(base_.dim + 1);
          for (int a = 0; a < base_.dim; ++a) p[a] = xb[a];
          p[base_.dim] = y;
          at(bf, j) = profile_boundary_data(cfg_, p);
        }
      }
    }
  }

  double operator_residual(size_t bf, int j) const {
    double diag;
    return operator_apply(bf, j, diag);
  }

  /// Residual of the transformed equation at an interior unknown; also
  /// reports the diagonal for the SOR update.
  double operator_apply(size_t bf, int j, double& diag) const {
    double d = width(bf);
    double s = double(j) * hs_ - 1.0;
    double css = 4.0 / (d * d);
    double acc = 0.0;
    double hx2 = hx_ * hx_, hs2 = hs_ * hs_;
    for (int a = 0; a < base_.dim; ++a) {
      double aa = coef_a(bf, s, a);
      css += aa * aa;
      size_t fp = nbr(bf, a, 1), fm = nbr(bf, a, -1);
      acc += (at(fp, j) - 2.0 * at(bf, j) + at(fm, j)) / hx2;
      acc += 2.0 * aa *
             (at(fp, j + 1) - at(fp, j - 1) - at(fm, j + 1) + at(fm, j - 1)) / (4.0 * hx_ * hs_);
      acc += b_[size_t(a)][bf * size_t(ms_) + size_t(j)] * (at(bf, j + 1) - at(bf, j - 1)) /
             (2.0 * hs_);
    }
    acc += css * (at(bf, j + 1) - 2.0 * at(bf, j) + at(bf, j - 1)) / hs2;
    diag = -2.0 * double(base_.dim) / hx2 - 2.0 * css / hs2;
    return acc;
  }

  void sor_sweep(double omega, int color) {
    for (size_t bf = 0; bf < nb_; ++bf) {
      if (base_edge(bf)) continue;
      Index bi = base_.unflat(bf);
      int parity = 0;
      for (int a = 0; a < base_.dim; ++a) parity += bi[size_t(a)];
      for (int j = 1; j < ms_ - 1; ++j) {
        if ((parity + j) % 2 != color) continue;
        double diag;
        double r = operator_apply(bf, j, diag);
        at(bf, j) -= omega * r / diag;
      }
    }
  }

  double residual_norm() const {
    double worst = 0.0;
    for (size_t bf = 0; bf < nb_; ++bf) {
      if (base_edge(bf)) continue;
      for (int j = 1; j < ms_ - 1; ++j) {
        double diag;
        double r = operator_apply(bf, j, diag);
        worst = std::max(worst, std::abs(r / diag));
      }
    }
    return worst;
  }

  const SolverConfig& cfg_;
  Grid base_;
  std::vector<double> gm_, gp_;
  int ms_;
  size_t nb_ = 0;
  double hs_ = 0, hx_ = 0;
  std::vector<double> v_;
  std::array<std::vector<double>, 2> dgm_, dd_; // per-axis derivative arrays
  std::array<std::vector<double>, 2> b_;        // v_s coefficient per axis, (base x ms)
};

inline int slab_s_nodes(const SolverConfig& cfg) {
  return std::max(5, 2 * int(std::lround(cfg.eps / cfg.h)) + 1);
}

/// The explicit update gamma +- lambda eps^2 (q - 1/eps) is unstable to
/// grid-scale boundary modes: the flux response scales like |k|
/// (Dirichlet-to-Neumann), so the Nyquist amplification factor is
/// |1 - lambda eps pi / h| > 1 whenever lambda > 2h/(pi eps). Smoothing the
/// defect with m binomial passes caps the response at
/// max_theta theta cos^{2m}(theta/2) / h; pick the smallest m that keeps the
/// whole k-range inside the stability margin.
inline int defect_smoothing_passes(double lambda, double eps, double h) {
  auto response = [](int m) {
    double worst = 0.0;
    for (int i = 1; i < 512; ++i) {
      double theta = M_PI * double(i) / 512.0;
      worst = std::max(worst, theta * std::pow(std::cos(theta / 2.0), 2.0 * m));
    }
    return worst;
  };
  for (int m = 0; m <= 64; ++m)
    if (lambda * (eps / h) * response(m) < 1.5) return m;
  return 64;
}

/// One (1,2,1)/4 pass per base axis, reflecting ends.
inline void smooth_defect(const Grid& base, std::vector<double>& v, int passes) {
  if (passes <= 0) return;
  std::vector<double> tmp(v.size());
  for (int p = 0; p < passes; ++p) {
    for (int axis = 0; axis < base.dim; ++axis) {
      for (size_t f = 0; f < v.size(); ++f) {
        Index i = base.unflat(f);
        int k = i[size_t(axis)];
        int m = base.shape[size_t(axis)];
        Index il = i, ir = i;
        il[size_t(axis)] = std::max(0, k - 1);
        ir[size_t(axis)] = std::min(m - 1, k + 1);
        tmp[f] = 0.25 * v[base.flat(il)] + 0.5 * v[f] + 0.25 * v[base.flat(ir)];
      }
      v.swap(tmp);
    }
  }
}

} // namespace detail

/// Solve Laplace u = 0 between the graphs with u = -+1 on them and
/// seed-profile lateral data; returns the solution resampled onto the ambient
/// grid (+-1 outside the slab).
inline ScalarField laplace_between_graphs(const SolverConfig& cfg,
                                          const std::vector<double>& gamma_minus,
                                          const std::vector<double>& gamma_plus, double tol) {
  Grid base = cfg.base_grid();
  if (gamma_minus.size() != base.num_nodes() || gamma_plus.size() != base.num_nodes())
    throw BadConfig("laplace_between_graphs: graph arrays do not match the base grid");
  for (size_t f = 0; f < base.num_nodes(); ++f)
    if (gamma_plus[f] - gamma_minus[f] < 4.0 * cfg.h)
      throw GraphCollision("laplace_between_graphs: gamma+ - gamma- < 4h at node " +
                           std::to_string(f));
  detail::SlabProblem slab(cfg, base, gamma_minus, gamma_plus, detail::slab_s_nodes(cfg));
  slab.solve(tol);
  return slab.resample(cfg.ambient_grid());
}

// ============================================================================
// Trial free-boundary iteration
// ============================================================================

/// Fixed-point iteration: Laplace solve between trial graphs, then push each
/// graph outward where the flux is too steep until sup|eps q - 1| < tol_fb.
inline Solution solve_trial_free_boundary(const SolverConfig& cfg) {
  if (cfg.mode != SolveMode::TrialFB) throw BadConfig("solve_trial_free_boundary: mode mismatch");
  Grid base = cfg.base_grid();
  size_t nb = base.num_nodes();
  std::vector<double> gm(nb), gp(nb);
  for (size_t f = 0; f < nb; ++f) {
    Vec xb = base.node(base.unflat(f));
    double g0 = cfg.gamma0_at(xb);
    Vec dg = cfg.dgamma0_at(xb);
    double w0 = std::sqrt(1.0 + dot(dg, dg));
    gm[f] = g0 - cfg.eps * w0;
    gp[f] = g0 + cfg.eps * w0;
  }

  ConvergenceLog log;
  SolveStatus status = SolveStatus::MaxIterations;
  int ms = detail::slab_s_nodes(cfg);
  int smooth_passes = detail::defect_smoothing_passes(cfg.lambda, cfg.eps, cfg.h);
  std::vector<double> warm;
  int grew = 0;
  std::unique_ptr<detail::SlabProblem> slab;

  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    for (size_t f = 0; f < nb; ++f) {
      if (gp[f] - gm[f] < 4.0 * cfg.h)
        throw GraphCollision("solve_trial_free_boundary: graphs within 4h at node " +
                             std::to_string(f));
      if (gm[f] < -cfg.L + 2.0 * cfg.h || gp[f] > cfg.L - 2.0 * cfg.h)
        throw Divergence("solve_trial_free_boundary: free boundary left the vertical extent");
    }
    slab = std::make_unique<detail::SlabProblem>(cfg, base, gm, gp, ms);
    if (!warm.empty()) slab->set_initial(warm);
    slab->solve(cfg.lin_tol);
    warm = slab->values();

    std::vector<double> qp = slab->boundary_speed(+1);
    std::vector<double> qm = slab->boundary_speed(-1);
    double res = 0.0;
    for (size_t f = 0; f < nb; ++f) {
      res = std::max(res, std::abs(cfg.eps * qp[f] - 1.0));
      res = std::max(res, std::abs(cfg.eps * qm[f] - 1.0));
    }
    log.residuals.push_back(res);
    log.iterations = iter;
    if (res < cfg.tol_fb) {
      status = SolveStatus::Converged;
      break;
    }
    if (log.residuals.size() >= 2 && res > log.residuals[log.residuals.size() - 2]) {
      if (++grew >= 20) throw Divergence("solve_trial_free_boundary: residual grew 20 times in a row");
    } else {
      grew = 0;
    }
    if (iter == cfg.max_iter) break; // keep u consistent with the last solved graphs
    // Base-edge columns stay at the seed offsets: the lateral Dirichlet data
    // fixes where u = +-1 on the wall, so those endpoints are not free.
    std::vector<double> dp(nb), dm(nb);
    for (size_t f = 0; f < nb; ++f) {
      dp[f] = qp[f] - 1.0 / cfg.eps;
      dm[f] = qm[f] - 1.0 / cfg.eps;
    }
    std::vector<double> dpf = dp, dmf = dm;
    detail::smooth_defect(base, dpf, smooth_passes);
    detail::smooth_defect(base, dmf, smooth_passes);
    // Filtered defect at full relaxation plus a stability-limited unfiltered
    // fraction, so grid-scale misfits near the pinned walls still contract.
    double beta = std::min(1.0, 0.8 * cfg.h / (cfg.lambda * cfg.eps * M_PI));
    double scale = cfg.lambda * cfg.eps * cfg.eps;
    for (size_t f = 0; f < nb; ++f) {
      Index bi = base.unflat(f);
      bool edge = false;
      for (int a = 0; a < base.dim; ++a)
        if (bi[size_t(a)] == 0 || bi[size_t(a)] == base.shape[size_t(a)] - 1) edge = true;
      if (edge) continue;
      gp[f] += scale * (dpf[f] + beta * (dp[f] - dpf[f]));
      gm[f] -= scale * (dmf[f] + beta * (dm[f] - dmf[f]));
    }
  }

  Solution sol;
  sol.u = slab->resample(cfg.ambient_grid());
  sol.gamma_minus = std::move(gm);
  sol.gamma_plus = std::move(gp);
  sol.log = std::move(log);
  sol.status = status;
  sol.config = cfg;
  return sol;
}

// ============================================================================
// Variational minimization
// ============================================================================

namespace detail {

/// The 1D stationary profile of the smoothed functional: u'(z) =
/// sqrt(s_delta(u))/eps, tabulated as z(u) = integral of eps/sqrt(s_delta).
/// Seeds the first continuation stage; the sharp clamp profile sits far
/// outside the heavily smoothed basin and converts its clamp frontier one
/// node at a time otherwise.
class SmoothedProfile {
public:
  SmoothedProfile(double eps, double delta) {
    const int m = 4000;
    const double u_max = 1.0 - 1e-9;
    z_.resize(size_t(m) + 1);
    u_.resize(size_t(m) + 1);
    double z = 0.0;
    for (int k = 0; k <= m; ++k) {
      double uk = u_max * double(k) / double(m);
      u_[size_t(k)] = uk;
      if (k > 0) {
        double um = u_max * (double(k) - 0.5) / double(m);
        z += (u_max / double(m)) * eps / std::sqrt(std::max(1e-12, s_delta(um, delta)));
      }
      z_[size_t(k)] = z;
    }
  }

  double eval(double z) const {
    double a = std::abs(z);
    if (a >= z_.back()) return z < 0 ? -1.0 : 1.0;
    size_t lo = 0, hi = z_.size() - 1;
    while (hi - lo > 1) {
      size_t mid = (lo + hi) / 2;
      if (z_[mid] <= a)
        lo = mid;
      else
        hi = mid;
    }
    double t = (a - z_[lo]) / std::max(1e-300, z_[hi] - z_[lo]);
    double u = u_[lo] + t * (u_[hi] - u_[lo]);
    return z < 0 ? -u : u;
  }

private:
  std::vector<double> z_, u_;
};

/// Discrete minimization objective: quadrature of
/// eps |grad u|^2/2 + s_delta(u)/(2 eps). The potential weight 1/(2 eps)
/// balances the quadratic term so the Euler-Lagrange free-boundary condition
/// is eps |grad u| = 1.
class VariationalObjective {
public:
  VariationalObjective(const Grid& g, double eps, double delta)
      : g_(g), eps_(eps), delta_(delta) {
    n_ = g.num_nodes();
    cell_ = std::pow(g.h, g.dim);
    w_.resize(n_);
    fixed_.resize(n_);
    for (int a = 0; a < g.dim; ++a) {
      stride_[size_t(a)] = 1;
      for (int b = a + 1; b < g.dim; ++b) stride_[size_t(a)] *= size_t(g.shape[size_t(b)]);
      edge_w_[size_t(a)].assign(n_, 0.0);
    }
    for (size_t f = 0; f < n_; ++f) {
      Index i = g.unflat(f);
      w_[f] = trapezoid_weight(g, i);
      bool edge = false;
      for (int a = 0; a < g.dim; ++a)
        if (i[size_t(a)] == 0 || i[size_t(a)] == g.shape[size_t(a)] - 1) edge = true;
      fixed_[f] = edge;
      for (int a = 0; a < g.dim; ++a) {
        if (i[size_t(a)] + 1 >= g.shape[size_t(a)]) continue;
        double w = 1.0;
        for (int b = 0; b < g.dim; ++b) {
          if (b == a) continue;
          if (i[size_t(b)] == 0 || i[size_t(b)] == g.shape[size_t(b)] - 1) w *= 0.5;
        }
        edge_w_[size_t(a)][f] = w;
      }
    }
  }

  double delta() const { return delta_; }
  const std::vector<unsigned char>& fixed() const { return fixed_; }
  const std::vector<double>& weights() const { return w_; }
  double cell() const { return cell_; }

  /// Cell-edge (forward-difference) Dirichlet energy plus a potential term
  /// integrated exactly against the piecewise-linear reconstruction of u
  /// along vertical cells. The edge gradient keeps the Euler-Lagrange
  /// operator the standard second-difference Laplacian (a central-difference
  /// objective would decouple the odd and even sublattices); the cell-exact
  /// potential avoids the O(h) layer-width bias of nodal sampling across the
  /// clamp.
  double value(const std::vector<double>& u) const {
    scratch_.assign(n_, 0.0);
    double coef = 0.5 * eps_ * std::pow(g_.h, g_.dim - 2);
    int vert = g_.dim - 1;
    double pcoef = cell_ / (2.0 * eps_);
    for (int a = 0; a < g_.dim; ++a) {
      size_t st = stride_[size_t(a)];
      const std::vector<double>& ew = edge_w_[size_t(a)];
      if (a == vert) {
        for (size_t f = 0; f < n_; ++f) {
          double w = ew[f];
          if (w == 0.0) continue;
          double du = u[f + st] - u[f];
          scratch_[f] += w * (coef * du * du + pcoef * s_delta_cell_mean(u[f], u[f + st], delta_));
        }
      } else {
        for (size_t f = 0; f < n_; ++f) {
          double w = ew[f];
          if (w == 0.0) continue;
          double du = u[f + st] - u[f];
          scratch_[f] += w * coef * du * du;
        }
      }
    }
    return pairwise_sum(scratch_);
  }

  /// Gradient of the discrete objective; zero at Dirichlet-fixed nodes.
  void gradient(const std::vector<double>& u, std::vector<double>& grad) const {
    grad.assign(n_, 0.0);
    double coef = eps_ * std::pow(g_.h, g_.dim - 2);
    int vert = g_.dim - 1;
    double pcoef = cell_ / (2.0 * eps_);
    for (int a = 0; a < g_.dim; ++a) {
      size_t st = stride_[size_t(a)];
      const std::vector<double>& ew = edge_w_[size_t(a)];
      if (a == vert) {
        for (size_t f = 0; f < n_; ++f) {
          double w = ew[f];
          if (w == 0.0) continue;
          double c = coef * w * (u[f + st] - u[f]);
          grad[f + st] += c;
          grad[f] -= c;
          double da, db;
          s_delta_cell_mean(u[f], u[f + st], delta_, &da, &db);
          grad[f] += pcoef * w * da;
          grad[f + st] += pcoef * w * db;
        }
      } else {
        for (size_t f = 0; f < n_; ++f) {
          double w = ew[f];
          if (w == 0.0) continue;
          double c = coef * w * (u[f + st] - u[f]);
          grad[f + st] += c;
          grad[f] -= c;
        }
      }
    }
    for (size_t f = 0; f < n_; ++f)
      if (fixed_[f]) grad[f] = 0.0;
  }

  /// Normalized (per unit volume) projected-gradient sup-norm: the discrete
  /// Euler-Lagrange residual with the box constraint u in [-1,1].
  double projected_gradient_sup(const std::vector<double>& u,
                                const std::vector<double>& grad) const {
    double sup = 0.0;
    for (size_t f = 0; f < n_; ++f) {
      if (fixed_[f]) continue;
      double el = grad[f] / (w_[f] * cell_);
      double pg = u[f] - std::clamp(u[f] - el, -1.0, 1.0);
      sup = std::max(sup, std::abs(pg));
    }
    return sup;
  }

  /// Apply the descent metric M = eps L_edge + m I (L_edge: the quadratic
  /// part's graph Laplacian; m caps the potential curvature). Zero on fixed
  /// nodes.
  void apply_metric(const std::vector<double>& v, std::vector<double>& out) const {
    out.assign(n_, 0.0);
    double coef = eps_ * std::pow(g_.h, g_.dim - 2);
    // keep the shift at the Laplacian's low-mode scale: a potential-curvature
    // shift would over-damp exactly the layer modes the metric is for
    double m = cell_ * (0.25 * eps_ + 1e-6);
    for (int a = 0; a < g_.dim; ++a) {
      size_t st = stride_[size_t(a)];
      const std::vector<double>& ew = edge_w_[size_t(a)];
      for (size_t f = 0; f < n_; ++f) {
        double w = ew[f];
        if (w == 0.0) continue;
        double c = coef * w * (v[f + st] - v[f]);
        out[f + st] += c;
        out[f] -= c;
      }
    }
    for (size_t f = 0; f < n_; ++f) {
      out[f] += m * v[f]; // the edge scatter is the PSD quadratic Hessian
      if (fixed_[f]) out[f] = 0.0;
    }
  }

  /// Approximate M^{-1} grad by a fixed number of conjugate-gradient sweeps
  /// (deterministic). Loose solves suffice: the point is to flatten the
  /// Laplacian's spectrum so the layer-bending modes move.
  void precondition(const std::vector<double>& grad, std::vector<double>& dir, int iters) const {
    dir.assign(n_, 0.0);
    std::vector<double> r = grad, p, mp(n_);
    for (size_t f = 0; f < n_; ++f)
      if (fixed_[f]) r[f] = 0.0;
    p = r;
    double rr = 0.0;
    for (size_t f = 0; f < n_; ++f) rr += r[f] * r[f];
    if (rr == 0.0) return;
    for (int it = 0; it < iters; ++it) {
      apply_metric(p, mp);
      double pmp = 0.0;
      for (size_t f = 0; f < n_; ++f) pmp += p[f] * mp[f];
      if (pmp <= 0.0) break;
      double a = rr / pmp;
      double rr_new = 0.0;
      for (size_t f = 0; f < n_; ++f) {
        dir[f] += a * p[f];
        r[f] -= a * mp[f];
        rr_new += r[f] * r[f];
      }
      if (rr_new <= 1e-28 * rr) break;
      double beta = rr_new / rr;
      rr = rr_new;
      for (size_t f = 0; f < n_; ++f) p[f] = r[f] + beta * p[f];
    }
  }

private:
  Grid g_;
  double eps_, delta_;
  size_t n_ = 0;
  double cell_ = 0;
  std::vector<double> w_;
  std::vector<unsigned char> fixed_;
  std::array<size_t, 3> stride_{0, 0, 0};
  std::array<std::vector<double>, 3> edge_w_;
  mutable std::vector<double> scratch_;
};

} // namespace detail

/// Projected gradient descent (Barzilai-Borwein step, Armijo backtracking)
/// on the smoothed energy, with delta-continuation; free boundaries extracted
/// from the tau* = +-(1 - 2 delta_last) levels.
inline Solution minimize_variational(const SolverConfig& cfg) {
  if (cfg.mode != SolveMode::Variational) throw BadConfig("minimize_variational: mode mismatch");
  Grid g = cfg.ambient_grid();
  size_t n = g.num_nodes();

  // initial guess: the 1D smoothed profile of the first stage, tilted to the
  // seed graph; Dirichlet rows carry the sharp profile data
  std::vector<double> u(n);
  {
    detail::SmoothedProfile prof(cfg.eps, cfg.deltas.front());
    for (size_t f = 0; f < n; ++f) {
      Vec p = g.node(g.unflat(f));
      Vec xb(cfg.base_dim);
      for (int a = 0; a < cfg.base_dim; ++a) xb[a] = p[a];
      Vec dg0 = cfg.dgamma0_at(xb);
      double w0 = std::sqrt(1.0 + dot(dg0, dg0));
      u[f] = prof.eval((p[cfg.base_dim] - cfg.gamma0_at(xb)) / w0);
    }
    for (size_t f = 0; f < n; ++f) {
      Index i = g.unflat(f);
      bool edge = false;
      for (int a = 0; a < g.dim; ++a)
        if (i[size_t(a)] == 0 || i[size_t(a)] == g.shape[size_t(a)] - 1) edge = true;
      if (edge) u[f] = profile_boundary_data(cfg, g.node(i));
    }
  }

  ConvergenceLog log;
  SolveStatus status = SolveStatus::Converged;
  const double pg_tol = cfg.eps * cfg.tol_fb;

  for (double delta : cfg.deltas) {
    detail::VariationalObjective obj(g, cfg.eps, delta);
    std::vector<double> grad(n), grad_prev(n), u_prev(n), dir(n), u_try(n);
    double E = obj.value(u);
    obj.gradient(u, grad);
    double alpha0 = 1.0 /
                    (obj.cell() * (4.0 * g.dim * cfg.eps / (g.h * g.h) + 3.0 / (cfg.eps * delta * delta)));
    // Alternate two safeguarded descent directions: the raw gradient with a
    // Barzilai-Borwein step (handles the stiff clamp-contact part), and the
    // metric-preconditioned gradient (the raw Laplacian conditioning ~1/h^2
    // would stall the layer-bending modes for thousands of iterations).
    double alpha_bb = alpha0;
    double alpha_pre = 1.0;
    int stage_iters = 0;
    double pg_last = 1e300;
    for (int iter = 1; iter <= cfg.max_iter; ++iter) {
      stage_iters = iter;
      // preconditioned steps drive the far field; the plain BB polish owns
      // the endgame where the clamp contact dominates
      bool pre = (iter % 2) == 0 && pg_last > 3e-2;
      double step;
      if (pre) {
        obj.precondition(grad, dir, 50);
        step = std::clamp(alpha_pre, 1e-10, 4.0);
      } else {
        dir = grad;
        step = std::clamp(alpha_bb, 1e-8 * alpha0, 1e8 * alpha0);
      }
      double E_new = 0.0;
      bool accepted = false;
      for (int bt = 0; bt < 60; ++bt) {
        double decrease = 0.0;
        double disp = 0.0;
        for (size_t f = 0; f < n; ++f) {
          u_try[f] = std::clamp(u[f] - step * dir[f], -1.0, 1.0);
          decrease += grad[f] * (u[f] - u_try[f]);
          disp = std::max(disp, std::abs(u_try[f] - u[f]));
        }
        E_new = obj.value(u_try);
        if (decrease >= 0.0 && E_new <= E - 1e-4 * decrease + 1e-15 * std::abs(E)) {
          accepted = true;
          break;
        }
        // The predicted decrease can drop below the floating-point resolution
        // of E near the clamp contact; the energy comparison is then
        // meaningless and a small enough step is trusted as is.
        if (std::abs(decrease) <= 1e-12 * (1.0 + std::abs(E)) && disp <= 1e-6) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        // no decrease possible at tiny step: numerical floor for this stage
        if (delta == cfg.deltas.back() && obj.projected_gradient_sup(u, grad) > pg_tol)
          status = SolveStatus::MaxIterations;
        break;
      }
      u_prev = u;
      grad_prev = grad;
      u = u_try;
      E = E_new;
      obj.gradient(u, grad);

      double pg = obj.projected_gradient_sup(u, grad);
      pg_last = pg;
      log.residuals.push_back(pg);
      log.energies.push_back(E);
      ++log.iterations;

      if (pg < pg_tol) break;
      // only the final stage decides the status: earlier stages just seed
      // the next continuation step
      if (iter == cfg.max_iter && delta == cfg.deltas.back())
        status = SolveStatus::MaxIterations;

      if (pre) {
        alpha_pre = (step >= alpha_pre) ? std::min(4.0, step * 1.3) : step * 1.3;
      } else {
        double sy = 0.0, ss = 0.0;
        for (size_t f = 0; f < n; ++f) {
          double s = u[f] - u_prev[f];
          double y = grad[f] - grad_prev[f];
          sy += s * y;
          ss += s * s;
        }
        alpha_bb = (sy > 1e-300) ? ss / sy : 2.0 * step;
      }
    }
    log.stages.emplace_back(delta, stage_iters);
  }

  ScalarField uf(g, u, "", cfg.eps);

  // free boundaries: tau* levels extrapolated to +-1 along dgamma/dtau = sigma W
  double delta_last = cfg.deltas.back();
  double tau_star = 1.0 - 2.0 * delta_last;
  Solution sol;
  try {
    LevelSurface top = extract_level(uf, tau_star);
    LevelSurface bot = extract_level(uf, -tau_star);
    size_t nb = top.num_nodes();
    sol.gamma_plus.resize(nb);
    sol.gamma_minus.resize(nb);
    for (size_t f = 0; f < nb; ++f) {
      sol.gamma_plus[f] = top.gamma[f] + (1.0 - tau_star) * top.sigma[f] * top.W(f);
      sol.gamma_minus[f] = bot.gamma[f] - (1.0 - tau_star) * bot.sigma[f] * bot.W(f);
    }
  } catch (const MultipleCrossings& e) {
    throw NonMonotoneColumn(std::string("minimize_variational: ") + e.what());
  } catch (const NoCrossing& e) {
    throw NonMonotoneColumn(std::string("minimize_variational: ") + e.what());
  }
  sol.u = std::move(uf);
  sol.log = std::move(log);
  sol.status = status;
  sol.config = cfg;
  return sol;
}

/// Dispatch on the configured mode.
inline Solution solve(const SolverConfig& cfg) {
  return cfg.mode == SolveMode::Variational ? minimize_variational(cfg)
                                            : solve_trial_free_boundary(cfg);
}

// ============================================================================
// Residuals of the free-boundary system
// ============================================================================

struct FbResidual {
  double interior_harmonicity = 0.0; // sup |lap u| at nodes >= 2h inside the layer
  double boundary_flux = 0.0;        // sup |eps |grad u| - 1| sampled 2h inside the graphs
};

inline FbResidual fb_residual(const Solution& sol) {
  const ScalarField& u = sol.u;
  const Grid& g = u.grid();
  Grid base = g.base();
  int vert = g.dim - 1;
  FbResidual r;

  // interior harmonicity on nodes at distance >= 2h inside the layer
  for (size_t f = 0; f < g.num_nodes(); ++f) {
    Index i = g.unflat(f);
    Index bi{0, 0, 0};
    for (int a = 0; a < vert; ++a) bi[size_t(a)] = i[size_t(a)];
    size_t bf = base.flat(bi);
    double y = g.origin[vert] + double(i[size_t(vert)]) * g.h;
    if (y < sol.gamma_minus[bf] + 2.0 * g.h || y > sol.gamma_plus[bf] - 2.0 * g.h) continue;
    if (g.boundary_distance(g.node(i)) < g.h - 1e-12) continue;
    r.interior_harmonicity = std::max(r.interior_harmonicity, std::abs(u.nodal_laplacian(i)));
  }

  // flux defect, one-sided sampling at distance 2h along the inward normal
  detail::NodalDiff dgm(base, sol.gamma_minus), dgp(base, sol.gamma_plus);
  double eps = sol.config.eps;
  for (size_t bf = 0; bf < base.num_nodes(); ++bf) {
    Index bi = base.unflat(bf);
    Vec xb = base.node(bi);
    for (int side = -1; side <= 1; side += 2) {
      const std::vector<double>& gam = side > 0 ? sol.gamma_plus : sol.gamma_minus;
      Vec dgamma(base.dim);
      for (int a = 0; a < base.dim; ++a)
        dgamma[a] = side > 0 ? dgp.d1(bi, a) : dgm.d1(bi, a);
      double w = std::sqrt(1.0 + dot(dgamma, dgamma));
      Vec nu(g.dim);
      for (int a = 0; a < base.dim; ++a) nu[a] = -dgamma[a] / w;
      nu[vert] = 1.0 / w;
      Vec p(g.dim);
      for (int a = 0; a < base.dim; ++a) p[a] = xb[a];
      p[vert] = gam[bf];
      p = p - nu * (double(side) * 2.0 * g.h);
      if (!g.contains(p)) continue;
      double q = norm(u.gradient_at_unchecked(p));
      r.boundary_flux = std::max(r.boundary_flux, std::abs(eps * q - 1.0));
    }
  }
  return r;
}

// ============================================================================
// CSV output
// ============================================================================

inline void dump_gamma_csv(const Grid& base, const std::vector<double>& gamma, std::ostream& os) {
  os << (base.dim == 1 ? "x1,gamma\n" : "x1,x2,gamma\n");
  for (size_t f = 0; f < base.num_nodes(); ++f) {
    Vec b = base.node(base.unflat(f));
    os << fmt17(b[0]);
    if (base.dim == 2) os << "," << fmt17(b[1]);
    os << "," << fmt17(gamma[f]) << "\n";
  }
}

inline void dump_log_csv(const ConvergenceLog& log, std::ostream& os) {
  os << "iter,residual,energy\n";
  for (size_t i = 0; i < log.residuals.size(); ++i) {
    os << (i + 1) << "," << fmt17(log.residuals[i]) << ",";
    if (i < log.energies.size()) os << fmt17(log.energies[i]);
    os << "\n";
  }
}

} // namespace fbac
