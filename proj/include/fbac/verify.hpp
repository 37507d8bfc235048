#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbac/flow.hpp"
#include "fbac/levelset.hpp"
#include "fbac/solver.hpp"
#include "fbac/version.hpp"

namespace fbac {

// ============================================================================
// Residual statistics
// ============================================================================

struct ResidualStats {
  double max_abs = 0.0;
  double mean_abs = 0.0;
  long count = 0;

  void add(double r) {
    double a = std::abs(r);
    max_abs = std::max(max_abs, a);
    mean_abs += a;
    ++count;
  }
  void finish() {
    if (count > 0) mean_abs /= double(count);
  }
};

// ============================================================================
// Identity checks on fields
// ============================================================================

/// Residual of the ambient-Laplacian decomposition
/// lap phi = Lap_Gamma(phi o F) + d_nunu phi - H d_nu phi
/// on extracted level surfaces. `flipped` carries the +H d_nu phi arrangement
/// (the convention-pinning diagnostic).
struct DecompositionStats {
  ResidualStats residual;
  ResidualStats flipped;
};

inline DecompositionStats check_decomposition(const ScalarField& u, const ScalarField& phi,
                                              const std::vector<double>& taus,
                                              double max_radius = 1e300, int stride = 1) {
  DecompositionStats out;
  for (double tau : taus) {
    LevelSurface s = extract_level(u, tau);
    const Grid& b = s.base;
    std::vector<double> phi_restr(s.num_nodes());
    for (size_t f = 0; f < s.num_nodes(); ++f) phi_restr[f] = phi.sample_vertical_cubic(s.point(f));
    std::vector<double> lb = laplace_beltrami(s, phi_restr);
    for (size_t f = 0; f < s.num_nodes(); ++f) {
      Index bi = b.unflat(f);
      bool interior = true;
      for (int a = 0; a < b.dim; ++a)
        if (bi[size_t(a)] < 2 || bi[size_t(a)] > b.shape[size_t(a)] - 3) interior = false;
      if (!interior) continue;
      bool on_stride = true;
      for (int a = 0; a < b.dim; ++a)
        if (bi[size_t(a)] % stride != 0) on_stride = false;
      if (!on_stride) continue;
      Vec xb = b.node(bi);
      if (norm(xb) > max_radius + 1e-12) continue;
      Vec p = s.point(f);
      if (u.grid().boundary_distance(p) < 2.0 * u.grid().h) continue;
      double lap_phi = phi.laplacian_at(p);
      Mat hess = phi.hessian_at(p);
      Vec grad = phi.gradient_at(p);
      const Vec& nu = s.nu[f];
      double dnn = dot(nu, matvec(hess, nu));
      double dn = dot(grad, nu);
      double H = s.Hmean[f];
      out.residual.add(lap_phi - (lb[f] + dnn - H * dn));
      out.flipped.add(lap_phi - (lb[f] + dnn + H * dn));
    }
  }
  out.residual.finish();
  out.flipped.finish();
  return out;
}

/// Residuals of the elliptic equation for sigma = 1/|grad u| on a harmonic
/// field: printed form lap sigma = sigma (2H^2 - |h|^2) and the corrected
/// form with the tangential term |grad_Gamma sigma|^2 / sigma.
struct SigmaEllipticStats {
  ResidualStats printed;
  ResidualStats corrected;
};

inline SigmaEllipticStats check_sigma_elliptic(const ScalarField& u,
                                               const std::vector<double>& taus,
                                               double max_radius = 1e300, int stride = 1) {
  SigmaEllipticStats out;
  ScalarField sf = sigma_field(u);
  double gate = 100.0 * u.grid().h * u.grid().h;
  for (double tau : taus) {
    LevelSurface s = extract_level(u, tau);
    const Grid& b = s.base;
    for (size_t f = 0; f < s.num_nodes(); ++f) {
      Index bi = b.unflat(f);
      bool on_stride = true;
      for (int a = 0; a < b.dim; ++a)
        if (bi[size_t(a)] % stride != 0) on_stride = false;
      if (!on_stride) continue;
      Vec xb = b.node(bi);
      if (norm(xb) > max_radius + 1e-12) continue;
      Vec p = s.point(f);
      if (u.grid().boundary_distance(p) < 2.0 * u.grid().h) continue;
      if (std::abs(u.laplacian_at(p)) >= gate)
        throw NotHarmonic("check_sigma_elliptic: |lap u| >= 100 h^2 at a sample");
      ShapeAtPoint sh = shape_from_field(u, p);
      double sigma = sh.sigma;
      double lap_sigma = sf.laplacian_at(p);
      double h2 = 0.0;
      for (int i = 0; i < sh.h.n; ++i)
        for (int j = 0; j < sh.h.n; ++j) h2 += sh.h(i, j) * sh.h(i, j);
      double printed = lap_sigma - sigma * (2.0 * sh.H * sh.H - h2);
      Vec grad_sigma = sf.gradient_at(p);
      Vec tang = grad_sigma - sh.nu * dot(grad_sigma, sh.nu);
      double corrected = printed - dot(tang, tang) / sigma;
      out.printed.add(printed);
      out.corrected.add(corrected);
    }
  }
  out.printed.finish();
  out.corrected.finish();
  return out;
}

/// Pointwise version of the elliptic residuals at an ambient probe point
/// (needs no level extraction).
struct SigmaEllipticPoint {
  double printed = 0.0;
  double corrected = 0.0;
};

inline SigmaEllipticPoint sigma_elliptic_at(const ScalarField& u, const Vec& p) {
  double gate = 100.0 * u.grid().h * u.grid().h;
  if (std::abs(u.laplacian_at(p)) >= gate)
    throw NotHarmonic("sigma_elliptic_at: |lap u| >= 100 h^2 at the probe");
  ScalarField sf = sigma_field(u);
  ShapeAtPoint sh = shape_from_field(u, p);
  double h2 = 0.0;
  for (int i = 0; i < sh.h.n; ++i)
    for (int j = 0; j < sh.h.n; ++j) h2 += sh.h(i, j) * sh.h(i, j);
  SigmaEllipticPoint out;
  out.printed = sf.laplacian_at(p) - sh.sigma * (2.0 * sh.H * sh.H - h2);
  Vec grad_sigma = sf.gradient_at(p);
  Vec tang = grad_sigma - sh.nu * dot(grad_sigma, sh.nu);
  out.corrected = out.printed - dot(tang, tang) / sh.sigma;
  return out;
}

// ============================================================================
// The tau ladder for solved instances
// ============================================================================

/// 21 uniform levels (-1 ... 1, step 0.1): extract directly where the level
/// keeps a 3h vertical margin to both free boundaries (and, in variational
/// mode, |tau| <= 1 - 2 delta_last); extrapolate the rest linearly in tau
/// from the outermost safe level, flagging them.
struct LevelLadder {
  std::vector<LevelSurface> surfaces; // sorted by tau ascending
  double tau_safe_pos = 0.0;
  double tau_safe_neg = 0.0;
};

namespace detail {

inline LevelSurface extrapolate_surface(const LevelSurface& anchor, double tau) {
  LevelSurface s;
  s.tau = tau;
  s.base = anchor.base;
  size_t nn = anchor.num_nodes();
  s.gamma.resize(nn);
  s.sigma.resize(nn);
  double dt = tau - anchor.tau;
  for (size_t f = 0; f < nn; ++f) {
    s.gamma[f] = anchor.gamma[f] + dt * anchor.sigma[f] * anchor.W(f);
    double inv = (anchor.sigma[f] > 0 ? 1.0 / anchor.sigma[f] : 0.0) + anchor.Hmean[f] * dt;
    s.sigma[f] = inv > 0 ? 1.0 / inv : 0.0;
  }
  fill_graph_caches(s, nullptr);
  s.extrapolated = true;
  return s;
}

} // namespace detail

inline std::vector<double> default_tau_ladder() {
  std::vector<double> taus;
  for (int k = -10; k <= 10; ++k) taus.push_back(double(k) / 10.0);
  return taus;
}

inline LevelLadder build_level_ladder(const Solution& sol,
                                      const std::vector<double>& taus = default_tau_ladder()) {
  const ScalarField& u = sol.u;
  double h = u.grid().h;
  double tau_cap = 1.0;
  if (sol.config.mode == SolveMode::Variational)
    tau_cap = 1.0 - 2.0 * sol.config.deltas.back() + 1e-12;

  auto margin_ok = [&](const LevelSurface& s) {
    for (size_t f = 0; f < s.num_nodes(); ++f) {
      if (sol.gamma_plus[f] - s.gamma[f] < 3.0 * h) return false;
      if (s.gamma[f] - sol.gamma_minus[f] < 3.0 * h) return false;
    }
    return true;
  };

  LevelLadder ladder;
  std::map<double, LevelSurface> safe;
  for (double tau : taus) {
    if (std::abs(tau) > tau_cap) continue;
    try {
      LevelSurface s = extract_level(u, tau);
      if (margin_ok(s)) safe.emplace(tau, std::move(s));
    } catch (const Error&) {
      // unsafe level: extrapolated below
    }
  }
  if (safe.empty()) throw Error("build_level_ladder: no safely extractable level");
  double lo = safe.begin()->first;
  double hi = safe.rbegin()->first;
  ladder.tau_safe_neg = lo;
  ladder.tau_safe_pos = hi;
  for (double tau : taus) {
    auto it = safe.find(tau);
    if (it != safe.end()) {
      ladder.surfaces.push_back(it->second);
    } else if (tau > hi) {
      ladder.surfaces.push_back(detail::extrapolate_surface(safe.at(hi), tau));
    } else if (tau < lo) {
      ladder.surfaces.push_back(detail::extrapolate_surface(safe.at(lo), tau));
    } else {
      // interior gap (should not happen for monotone solutions): extrapolate
      // from the nearest safe level below
      auto near = safe.lower_bound(tau);
      if (near != safe.begin()) --near;
      ladder.surfaces.push_back(detail::extrapolate_surface(near->second, tau));
    }
  }
  return ladder;
}

// ============================================================================
// Bounds, barrier, theorem ratios
// ============================================================================

struct BoundsReport {
  double eta = 0.0;
  bool ratios_applicable = false;
  double C_naive = 0.0;
  double C_interior = 0.0;
  double sup_sigma_minus_eps = 0.0;          // over all levels and base nodes
  double sup_sigma_minus_eps_interior = 0.0; // |x| <= 1/2
  std::vector<double> taus;
  std::vector<double> per_level_sup; // sup |sigma - eps| per tau
};

inline BoundsReport check_bounds(const Solution& sol, const LevelLadder& ladder) {
  BoundsReport r;
  double eps = sol.config.eps;
  for (const LevelSurface& s : ladder.surfaces)
    for (size_t f = 0; f < s.num_nodes(); ++f)
      r.eta = std::max(r.eta, s.curvature_spectral(f));

  for (const LevelSurface& s : ladder.surfaces) {
    double lvl = 0.0;
    for (size_t f = 0; f < s.num_nodes(); ++f) {
      if (s.sigma[f] <= 0.0) continue;
      double dev = std::abs(s.sigma[f] - eps);
      lvl = std::max(lvl, dev);
      Vec xb = s.base.node(s.base.unflat(f));
      if (norm(xb) <= 0.5 + 1e-12)
        r.sup_sigma_minus_eps_interior = std::max(r.sup_sigma_minus_eps_interior, dev);
    }
    r.taus.push_back(s.tau);
    r.per_level_sup.push_back(lvl);
    r.sup_sigma_minus_eps = std::max(r.sup_sigma_minus_eps, lvl);
  }

  r.ratios_applicable = r.eta >= 1e-10;
  if (r.ratios_applicable) {
    for (double lvl : r.per_level_sup)
      r.C_naive = std::max(r.C_naive, lvl / (eps * eps * r.eta));
    r.C_interior = r.sup_sigma_minus_eps_interior / (eps * eps * eps * r.eta * r.eta);
  }
  return r;
}

/// Lemma 3.2 barrier Phi = C_tau eps^2 (1 - u^2) + C_x |x|^2 with
/// C_tau = 6 n eps eta^2, C_x = 4 n-free eps eta^2, checked on the layer nodes.
struct BarrierReport {
  std::string status = "not_applicable"; // ok | violated | not_applicable
  bool is_supersolution = false;
  double eta = 0.0;
  double delta_phi_margin_worst = 0.0;   // min of (-2 n eps eta^2 - lap Phi)
  double delta_phi_margin_analytic = 0.0; // 2 n eps eta^2 (value at sigma = eps)
  double delta_phi_margin_mean_at_eps = 0.0;
  double laplace_slack_worst = 0.0;      // min of (lap sigma + 2 n eps eta^2 + 50 h^2)
  double lateral_margin_worst = 0.0;     // min of (C_x - (sigma - eps)) on lateral layer nodes
  double fb_phi_min = 0.0;               // min of Phi on the free boundary
};

inline BarrierReport check_barrier(const Solution& sol, double eta) {
  BarrierReport r;
  r.eta = eta;
  if (eta < 1e-10) return r; // profile-like instance: barrier degenerates to 0

  const ScalarField& u = sol.u;
  const Grid& g = u.grid();
  Grid base = g.base();
  int n = base.dim;
  int vert = g.dim - 1;
  double eps = sol.config.eps;
  double h = g.h;
  double C_tau = 6.0 * double(n) * eps * eta * eta;
  double C_x = 4.0 * eps * eta * eta;
  double rhs = -2.0 * double(n) * eps * eta * eta;
  ScalarField sf = sigma_field(u);

  double worst_phi = 1e300, worst_lap = 1e300, worst_lat = 1e300, fb_min = 1e300;
  double mean_at_eps = 0.0;
  long count_at_eps = 0;

  for (size_t f = 0; f < g.num_nodes(); ++f) {
    Index i = g.unflat(f);
    Index bi{0, 0, 0};
    for (int a = 0; a < vert; ++a) bi[size_t(a)] = i[size_t(a)];
    size_t bf = base.flat(bi);
    double y = g.origin[vert] + double(i[size_t(vert)]) * g.h;
    bool in_layer2 = y >= sol.gamma_minus[bf] + 2.0 * h && y <= sol.gamma_plus[bf] - 2.0 * h;
    bool in_layer4 = y >= sol.gamma_minus[bf] + 4.0 * h && y <= sol.gamma_plus[bf] - 4.0 * h;
    if (!in_layer2) continue;
    double sigma = sf.values()[f];
    if (sigma <= 0.0) continue;

    bool lateral = false;
    for (int a = 0; a < n; ++a)
      if (bi[size_t(a)] == 0 || bi[size_t(a)] == base.shape[size_t(a)] - 1) lateral = true;

    // (i) lap Phi = 2 n C_x - 2 C_tau eps^2 / sigma^2 < -2 n eps eta^2
    double lap_phi = 2.0 * double(n) * C_x - 2.0 * C_tau * eps * eps / (sigma * sigma);
    double margin = rhs - lap_phi;
    worst_phi = std::min(worst_phi, margin);
    if (std::abs(sigma / eps - 1.0) < 0.05) {
      mean_at_eps += margin;
      ++count_at_eps;
    }
    // (ii) lap(sigma - eps) >= -2 n eps eta^2 within 50 h^2 slack
    if (in_layer4 && g.boundary_distance(g.node(i)) >= h - 1e-12) {
      double lap_sigma = sf.nodal_laplacian(i);
      worst_lap = std::min(worst_lap, lap_sigma - rhs + 50.0 * h * h);
    }
    // (iii) lateral boundary: C_x >= sigma - eps
    if (lateral) worst_lat = std::min(worst_lat, C_x - (sigma - eps));
  }

  // free-boundary values of Phi: u^2 = 1 there, so Phi = C_x |x|^2
  for (size_t bf = 0; bf < base.num_nodes(); ++bf) {
    Vec xb = base.node(base.unflat(bf));
    fb_min = std::min(fb_min, C_x * dot(xb, xb));
  }

  r.delta_phi_margin_worst = worst_phi;
  r.delta_phi_margin_analytic = 2.0 * double(n) * eps * eta * eta;
  r.delta_phi_margin_mean_at_eps = count_at_eps > 0 ? mean_at_eps / double(count_at_eps) : 0.0;
  r.laplace_slack_worst = worst_lap;
  r.lateral_margin_worst = worst_lat;
  r.fb_phi_min = fb_min;
  r.is_supersolution =
      worst_phi > 0.0 && worst_lap >= 0.0 && worst_lat >= 0.0 && fb_min >= 0.0;
  r.status = r.is_supersolution ? "ok" : "violated";
  return r;
}

// ============================================================================
// GeometryReport
// ============================================================================

struct HolderRow {
  double alpha = 0.0;
  double h_sup = 0.0, h_seminorm = 0.0;
  double H_sup = 0.0, H_seminorm = 0.0;
};

struct LevelRow {
  double tau = 0.0;
  bool extrapolated = false;
  double sup_sigma_minus_eps = 0.0;
  std::vector<HolderRow> holder;
};

struct GeometryReport {
  std::string label;
  double eps = 0.0;
  double h = 0.0;
  double dtau = 0.0;
  std::string gamma0;
  std::string mode;
  double eta = 0.0;
  bool eta_hypothesis_ok = true; // eta < 1/2
  std::vector<double> alphas;
  std::vector<LevelRow> levels;
  bool ratios_applicable = false;
  double C_naive = 0.0;
  double C_interior = 0.0;
  std::map<double, double> C_thm_h;
  std::map<double, double> C_thm_H;
  ResidualStats lemma21, ode_sigma_A, ode_sigma_B, ode_H_res, elliptic_printed,
      elliptic_corrected;
  bool elliptic_applicable = true;
  BarrierReport barrier;
  double fb_H_disagreement = 0.0; // graph H vs -d_nu sigma / sigma on the free boundary
  BoundsReport bounds;
};

namespace detail {

/// -d_nu sigma / sigma at the free boundary via a quadratic fit through
/// samples 3h, 4h, 5h inside along -side*nu, evaluated at the boundary.
inline double fb_H_from_sigma(const ScalarField& sf, const Vec& p_fb, const Vec& nu, int side,
                              double h) {
  double t0 = 3.0 * h, t1 = 4.0 * h, t2 = 5.0 * h;
  auto sample = [&](double t) { return sf.sample(p_fb - nu * (double(side) * t)); };
  double f0 = sample(t0), f1 = sample(t1), f2 = sample(t2);
  // quadratic through (t0,f0),(t1,f1),(t2,f2), derivative at t = 0
  double d1 = (f2 - f0) / (2.0 * h);
  double d2 = (f2 - 2.0 * f1 + f0) / (h * h);
  double df_dt_at0 = d1 - t1 * d2;
  // f(t) = sigma(p - side t nu): df/dt = -side d_nu sigma
  double dnu_sigma = -double(side) * df_dt_at0;
  double sigma0 = f1 - t1 * d1 + 0.5 * t1 * t1 * d2; // extrapolate sigma to t = 0
  return -dnu_sigma / sigma0;
}

} // namespace detail

/// Assemble the full verification record for a solved instance.
inline GeometryReport theorem_report(const Solution& sol, const std::vector<double>& alphas,
                                     double dtau = 1.0 / 32.0) {
  GeometryReport rep;
  const ScalarField& u = sol.u;
  rep.label = u.label();
  rep.eps = sol.config.eps;
  rep.h = u.grid().h;
  rep.dtau = dtau;
  rep.gamma0 = sol.config.gamma0_src;
  rep.mode = sol.config.mode == SolveMode::Variational ? "variational" : "trial_fb";
  rep.alphas = alphas;

  LevelLadder ladder = build_level_ladder(sol);
  rep.bounds = check_bounds(sol, ladder);
  rep.eta = rep.bounds.eta;
  rep.eta_hypothesis_ok = rep.eta < 0.5;
  rep.ratios_applicable = rep.bounds.ratios_applicable;
  rep.C_naive = rep.bounds.C_naive;
  rep.C_interior = rep.bounds.C_interior;

  double eps = rep.eps;
  for (size_t li = 0; li < ladder.surfaces.size(); ++li) {
    const LevelSurface& s = ladder.surfaces[li];
    LevelRow row;
    row.tau = s.tau;
    row.extrapolated = s.extrapolated;
    row.sup_sigma_minus_eps = rep.bounds.per_level_sup[li];
    std::vector<Mat> amb(s.num_nodes());
    std::vector<double> hm(s.num_nodes());
    for (size_t f = 0; f < s.num_nodes(); ++f) {
      amb[f] = s.ambient_h(f);
      hm[f] = s.Hmean[f];
    }
    for (double alpha : alphas) {
      HolderRow hr;
      hr.alpha = alpha;
      HolderNorm nh = holder_norm(s.base, amb, alpha, 0.5);
      HolderNorm nH = holder_norm(s.base, hm, alpha, 0.5);
      hr.h_sup = nh.sup_part;
      hr.h_seminorm = nh.seminorm_part;
      hr.H_sup = nH.sup_part;
      hr.H_seminorm = nH.seminorm_part;
      row.holder.push_back(hr);
      if (rep.ratios_applicable) {
        double ch = (nh.sup_part + nh.seminorm_part) / rep.eta;
        double cH = (nH.sup_part + nH.seminorm_part) /
                    (std::pow(eps, 1.0 - alpha) * rep.eta * rep.eta);
        auto ith = rep.C_thm_h.find(alpha);
        if (ith == rep.C_thm_h.end() || ith->second < ch) rep.C_thm_h[alpha] = ch;
        auto itH = rep.C_thm_H.find(alpha);
        if (itH == rep.C_thm_H.end() || itH->second < cH) rep.C_thm_H[alpha] = cH;
      }
    }
    rep.levels.push_back(std::move(row));
  }

  // free-boundary H: graph value vs -d_nu sigma / sigma
  {
    ScalarField sf = sigma_field(u);
    double sup = 0.0;
    for (int side = -1; side <= 1; side += 2) {
      const LevelSurface& s = side > 0 ? ladder.surfaces.back() : ladder.surfaces.front();
      for (size_t f = 0; f < s.num_nodes(); ++f) {
        Vec xb = s.base.node(s.base.unflat(f));
        if (norm(xb) > 0.5 + 1e-12) continue;
        Vec p = s.point(f);
        if (!u.grid().contains(p)) continue;
        double Hs = detail::fb_H_from_sigma(sf, p, s.nu[f], side, u.grid().h);
        sup = std::max(sup, std::abs(Hs - s.Hmean[f]));
      }
    }
    rep.fb_H_disagreement = sup;
  }

  // residual suites on the solution field, safe levels only
  {
    std::vector<double> safe_taus;
    for (const LevelSurface& s : ladder.surfaces)
      if (!s.extrapolated && std::abs(s.tau) <= 0.61) safe_taus.push_back(s.tau);
    int stride = std::max(1, int(u.grid().shape[0] / 16));
    DecompositionStats dec = check_decomposition(u, u, safe_taus, 0.5, stride);
    rep.lemma21 = dec.residual;
    try {
      SigmaEllipticStats el = check_sigma_elliptic(u, safe_taus, 0.5, stride);
      rep.elliptic_printed = el.printed;
      rep.elliptic_corrected = el.corrected;
    } catch (const NotHarmonic&) {
      rep.elliptic_applicable = false;
    }

    // flow trajectories from the tau = 0 level
    double span_pos = std::min(ladder.tau_safe_pos, std::floor(ladder.tau_safe_pos / dtau) * dtau);
    double span_neg = std::max(ladder.tau_safe_neg, std::ceil(ladder.tau_safe_neg / dtau) * dtau);
    LevelSurface mid = extract_level(u, 0.0);
    Grid base = mid.base;
    int bstride = std::max(1, base.shape[0] / 8);
    for (int k = 0; k < base.shape[0]; k += bstride) {
      Index bi{k, 0, 0};
      if (base.dim == 2) bi[1] = base.shape[1] / 2;
      size_t bf = base.flat(bi);
      Vec xb = base.node(bi);
      if (norm(xb) > 0.5 + 1e-12) continue;
      Vec start = mid.point(bf);
      for (int dir = 0; dir < 2; ++dir) {
        double target = dir == 0 ? span_pos : span_neg;
        if (std::abs(target) < 2.5 * dtau) continue;
        try {
          FlowTrajectory traj = integrate_flow(u, start, 0.0, target, dtau);
          SigmaResiduals sr = ode_residual_sigma(traj);
          for (double v : sr.variant_a) rep.ode_sigma_A.add(v);
          for (double v : sr.variant_b) rep.ode_sigma_B.add(v);
          HResiduals hr = ode_residual_H(u, traj);
          for (double v : hr.residual) rep.ode_H_res.add(v);
        } catch (const Error&) {
          // trajectory left the usable region: skip this start
        }
      }
    }
    rep.ode_sigma_A.finish();
    rep.ode_sigma_B.finish();
    rep.ode_H_res.finish();
  }

  rep.barrier = check_barrier(sol, rep.eta);
  return rep;
}

// ============================================================================
// JSON serialization
// ============================================================================

using ordered_json = nlohmann::ordered_json;

inline ordered_json stats_json(const ResidualStats& s) {
  return ordered_json{{"max", s.max_abs}, {"mean", s.mean_abs}, {"count", s.count}};
}

inline ordered_json report_json(const GeometryReport& r) {
  ordered_json j;
  j["instance"] = ordered_json{{"label", r.label}, {"eps", r.eps},      {"h", r.h},
                               {"gamma0", r.gamma0}, {"mode", r.mode}};
  j["version"] = kVersion;
  j["eta"] = r.eta;
  j["eta_hypothesis_ok"] = r.eta_hypothesis_ok;
  j["levels"] = ordered_json::array();
  for (const LevelRow& row : r.levels) {
    ordered_json lj;
    lj["tau"] = row.tau;
    lj["extrapolated"] = row.extrapolated;
    lj["sup_sigma_minus_eps"] = row.sup_sigma_minus_eps;
    lj["holder"] = ordered_json::array();
    for (const HolderRow& h : row.holder)
      lj["holder"].push_back(ordered_json{{"alpha", h.alpha},
                                          {"h_sup", h.h_sup},
                                          {"h_seminorm", h.h_seminorm},
                                          {"H_sup", h.H_sup},
                                          {"H_seminorm", h.H_seminorm}});
    j["levels"].push_back(lj);
  }
  ordered_json ratios;
  ratios["applicable"] = r.ratios_applicable;
  ratios["C_naive"] = r.C_naive;
  ratios["C_interior"] = r.C_interior;
  ordered_json cth, ctH;
  for (auto& [a, v] : r.C_thm_h) cth[fmt17(a)] = v;
  for (auto& [a, v] : r.C_thm_H) ctH[fmt17(a)] = v;
  ratios["C_thm_h"] = cth;
  ratios["C_thm_H"] = ctH;
  j["ratios"] = ratios;
  ordered_json res;
  res["lemma21"] = stats_json(r.lemma21);
  res["ode_sigma_A"] = stats_json(r.ode_sigma_A);
  res["ode_sigma_B"] = stats_json(r.ode_sigma_B);
  res["ode_H"] = stats_json(r.ode_H_res);
  res["elliptic_printed"] = stats_json(r.elliptic_printed);
  res["elliptic_corrected"] = stats_json(r.elliptic_corrected);
  res["elliptic_applicable"] = r.elliptic_applicable;
  j["residuals"] = res;
  ordered_json bar;
  bar["status"] = r.barrier.status;
  bar["is_supersolution"] = r.barrier.is_supersolution;
  bar["margins"] = ordered_json{{"delta_phi_worst", r.barrier.delta_phi_margin_worst},
                                {"delta_phi_analytic", r.barrier.delta_phi_margin_analytic},
                                {"delta_phi_mean_at_eps", r.barrier.delta_phi_margin_mean_at_eps},
                                {"laplace_slack_worst", r.barrier.laplace_slack_worst},
                                {"lateral_worst", r.barrier.lateral_margin_worst},
                                {"fb_phi_min", r.barrier.fb_phi_min}};
  j["barrier"] = bar;
  j["fb_mean_curvature"] = ordered_json{{"sup_disagreement", r.fb_H_disagreement}};
  j["grid"] = ordered_json{{"h", r.h}, {"dtau", r.dtau}};
  return j;
}

/// Recover a Solution-shaped object from a bare field dump: free boundaries
/// via the tau* = +-0.9 extraction + extrapolation rule.
inline Solution solution_from_field(ScalarField u) {
  if (!u.eps()) throw BadConfig("field has no eps: not a solved instance");
  Solution sol;
  SolverConfig cfg;
  cfg.eps = *u.eps();
  cfg.base_dim = u.grid().dim - 1;
  cfg.h = u.grid().h;
  cfg.L = std::max(std::abs(u.grid().box().lo[u.grid().dim - 1]),
                   std::abs(u.grid().box().hi[u.grid().dim - 1]));
  cfg.gamma0_src = "0";
  cfg.gamma0 = expr::parse(cfg.gamma0_src);
  for (int a = 0; a < cfg.base_dim; ++a) cfg.dgamma0[size_t(a)] = expr::derivative(cfg.gamma0, a);
  cfg.mode = SolveMode::TrialFB;
  sol.config = cfg;

  // anchor the extrapolation at least 3h clear of the gradient kink
  double tau_star = std::min(0.9, 1.0 - 3.0 * u.grid().h / *u.eps());
  LevelSurface top = extract_level(u, tau_star);
  LevelSurface bot = extract_level(u, -tau_star);
  size_t nb = top.num_nodes();
  sol.gamma_plus.resize(nb);
  sol.gamma_minus.resize(nb);
  for (size_t f = 0; f < nb; ++f) {
    sol.gamma_plus[f] = top.gamma[f] + (1.0 - tau_star) * top.sigma[f] * top.W(f);
    sol.gamma_minus[f] = bot.gamma[f] - (1.0 - tau_star) * bot.sigma[f] * bot.W(f);
  }
  sol.u = std::move(u);
  sol.status = SolveStatus::Converged;
  return sol;
}

} // namespace fbac
