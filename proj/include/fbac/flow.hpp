#pragma once

#include <cmath>
#include <ostream>
#include <vector>

#include "fbac/field.hpp"
#include "fbac/levelset.hpp"

namespace fbac {

/// Discrete integral curve of dF/dtau = grad u / |grad u|^2, with the
/// geometric quantities recorded along it. u(F(tau)) = tau up to the
/// consistency defect.
struct FlowTrajectory {
  double dtau = 0.0;
  std::vector<double> taus;
  std::vector<Vec> points;
  std::vector<double> sigma;
  std::vector<double> H;
  std::vector<double> lap_u;
  std::vector<double> defect; // |u(F) - tau|

  size_t size() const { return taus.size(); }
};

/// Classical RK4 on the level-set flow. x0 must sit on the starting level
/// (|u(x0) - tau0| <= 1e-8) and every stage point must keep a 2h interior
/// margin.
inline FlowTrajectory integrate_flow(const ScalarField& u, const Vec& x0, double tau0, double tau1,
                                     double dtau) {
  if (dtau <= 0.0) throw BadConfig("integrate_flow: dtau must be positive");
  double span = tau1 - tau0;
  long nsteps = std::lround(std::abs(span) / dtau);
  if (nsteps < 1 || std::abs(double(nsteps) * dtau - std::abs(span)) > 1e-9)
    throw BadConfig("integrate_flow: dtau must tile the tau span");

  const double margin = 2.0 * u.grid().h;
  auto velocity = [&](const Vec& p) {
    if (u.grid().boundary_distance(p) < margin - 1e-12)
      throw LeftDomain("integrate_flow: trajectory left the safe interior");
    Vec g = u.gradient_at_cubic(p);
    double g2 = dot(g, g);
    if (g2 < 1e-16) throw DegenerateGradient("integrate_flow: |grad u| < 1e-8");
    return g * (1.0 / g2);
  };

  if (std::abs(u.sample(x0) - tau0) > 1e-8)
    throw BadConfig("integrate_flow: u(x0) does not match the start of the tau span");

  FlowTrajectory traj;
  traj.dtau = dtau;
  double step = span > 0 ? dtau : -dtau;

  Vec p = x0;
  for (long k = 0; k <= nsteps; ++k) {
    double tau = tau0 + double(k) * step;
    ShapeAtPoint sh = shape_from_field(u, p);
    traj.taus.push_back(tau);
    traj.points.push_back(p);
    traj.sigma.push_back(sh.sigma);
    traj.H.push_back(sh.H);
    traj.lap_u.push_back(u.laplacian_at_cubic(p));
    traj.defect.push_back(std::abs(u.sample(p) - tau));
    if (k == nsteps) break;
    Vec k1 = velocity(p);
    Vec k2 = velocity(p + k1 * (step / 2.0));
    Vec k3 = velocity(p + k2 * (step / 2.0));
    Vec k4 = velocity(p + k3 * step);
    p = p + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (step / 6.0);
  }
  return traj;
}

/// Residuals of the surface-velocity ODE, both sign variants:
///   A (paper as printed):      dsigma/dtau + sigma^2 (H - sigma lap u)
///   B (artifact convention):   dsigma/dtau + sigma^2 (H + sigma lap u)
/// They coincide on harmonic fields; the distance oracle separates them.
struct SigmaResiduals {
  std::vector<double> tau;
  std::vector<double> variant_a;
  std::vector<double> variant_b;
};

inline SigmaResiduals ode_residual_sigma(const FlowTrajectory& traj) {
  if (traj.size() < 3) throw TooShort("ode_residual_sigma: need at least 3 samples");
  SigmaResiduals r;
  double step = traj.taus[1] - traj.taus[0];
  for (size_t k = 1; k + 1 < traj.size(); ++k) {
    double ds = (traj.sigma[k + 1] - traj.sigma[k - 1]) / (2.0 * step);
    double s = traj.sigma[k];
    double lhsA = ds + s * s * (traj.H[k] - s * traj.lap_u[k]);
    double lhsB = ds + s * s * (traj.H[k] + s * traj.lap_u[k]);
    r.tau.push_back(traj.taus[k]);
    r.variant_a.push_back(lhsA);
    r.variant_b.push_back(lhsB);
  }
  return r;
}

/// Residual of the mean-curvature evolution dH/dtau = Lap_Gamma sigma +
/// sigma |h|^2 (Euclidean ambient, Ric = 0). Lap_Gamma sigma is evaluated by
/// extracting the level surface through each interior sample and applying the
/// conservative Laplace-Beltrami operator to sigma restricted to it.
struct HResiduals {
  std::vector<double> tau;
  std::vector<double> residual;
};

inline HResiduals ode_residual_H(const ScalarField& u, const FlowTrajectory& traj) {
  if (traj.size() < 3) throw TooShort("ode_residual_H: need at least 3 samples");
  HResiduals r;
  double step = traj.taus[1] - traj.taus[0];
  for (size_t k = 1; k + 1 < traj.size(); ++k) {
    double dH = (traj.H[k + 1] - traj.H[k - 1]) / (2.0 * step);
    LevelSurface s = extract_level(u, traj.taus[k]);
    std::vector<double> lb = laplace_beltrami(s, s.sigma);
    std::vector<double> shn(s.num_nodes());
    for (size_t f = 0; f < s.num_nodes(); ++f) shn[f] = s.sigma[f] * s.hnorm2(f);
    // interpolate both at the sample's base position
    Vec bp(s.base.dim);
    for (int a = 0; a < s.base.dim; ++a) bp[a] = traj.points[k][a];
    ScalarField lbf(s.base, lb), shf(s.base, shn);
    double lap_gamma_sigma = lbf.sample(bp);
    double sigma_h2 = shf.sample(bp);
    r.tau.push_back(traj.taus[k]);
    r.residual.push_back(dH - lap_gamma_sigma - sigma_h2);
  }
  return r;
}

/// Trajectory CSV: tau,x1[,x2],sigma,H,lap_u,defect per sample.
inline void dump_trajectory_csv(const FlowTrajectory& traj, std::ostream& os) {
  int d = traj.points.empty() ? 2 : traj.points[0].n;
  os << (d == 2 ? "tau,x1,x2,sigma,H,lap_u,defect\n" : "tau,x1,x2,x3,sigma,H,lap_u,defect\n");
  for (size_t k = 0; k < traj.size(); ++k) {
    os << fmt17(traj.taus[k]);
    for (int a = 0; a < d; ++a) os << "," << fmt17(traj.points[k][a]);
    os << "," << fmt17(traj.sigma[k]) << "," << fmt17(traj.H[k]) << "," << fmt17(traj.lap_u[k])
       << "," << fmt17(traj.defect[k]) << "\n";
  }
}

} // namespace fbac
