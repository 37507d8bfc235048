#include <doctest.h>

#include <cmath>

#include "fbac/flow.hpp"

using namespace fbac;

namespace {

Grid grid2(double lo0, double hi0, double lo1, double hi1, double h) {
  Box b;
  b.lo = Vec(lo0, lo1);
  b.hi = Vec(hi0, hi1);
  return build_grid(b, h);
}

ScalarField distance_case(double h) {
  Grid g = grid2(-0.25, 0.25, -0.5, 0.5, h);
  OracleParams p;
  p.center = Vec(0.0, -0.85);
  return analytic_field("distance", p, g);
}

} // namespace

TEST_CASE("profile flow is a straight vertical line") {
  Grid g = grid2(-1.0, 1.0, -0.5, 0.5, 0.1 / 8);
  OracleParams p;
  p.eps = 0.1;
  ScalarField u = analytic_field("profile1d", p, g);
  FlowTrajectory t = integrate_flow(u, Vec(0.0, 0.0), 0.0, 0.5, 1.0 / 32);
  for (size_t k = 0; k < t.size(); ++k) {
    CHECK(std::abs(t.points[k][0]) < 1e-12);
    CHECK(t.points[k][1] == doctest::Approx(0.1 * t.taus[k]).epsilon(1e-10));
    CHECK(t.defect[k] < 1e-10);
    CHECK(t.sigma[k] == doctest::Approx(0.1).epsilon(1e-10));
  }
  SigmaResiduals r = ode_residual_sigma(t);
  for (size_t k = 0; k < r.tau.size(); ++k) {
    CHECK(std::abs(r.variant_a[k]) < 1e-8);
    CHECK(std::abs(r.variant_b[k]) < 1e-8);
  }
  HResiduals hr = ode_residual_H(u, t);
  for (double v : hr.residual) CHECK(std::abs(v) < 1e-8);
}

TEST_CASE("distance flow: unit-speed radial, sign-pinning residuals") {
  double h = 1.0 / 128, dtau = 1.0 / 64;
  ScalarField u = distance_case(h);
  FlowTrajectory t = integrate_flow(u, Vec(0.0, -0.35), 0.5, 0.875, dtau);
  // on the symmetry axis the discrete field is exact: radius tau to 1e-8
  for (size_t k = 0; k < t.size(); ++k)
    CHECK(std::abs((t.points[k][1] + 0.85) - t.taus[k]) < 1e-8);

  SigmaResiduals r = ode_residual_sigma(t);
  double worst_b = 0.0;
  for (double v : r.variant_b) worst_b = std::max(worst_b, std::abs(v));
  CHECK(worst_b <= 20 * (dtau * dtau + h));
  // variant A converges to 2/tau (drops the sign information of lap u)
  for (size_t k = 0; k < r.tau.size(); ++k)
    CHECK(std::abs(r.variant_a[k]) == doctest::Approx(2.0 / r.tau[k]).epsilon(0.02));

  HResiduals hr = ode_residual_H(u, t);
  for (double v : hr.residual) CHECK(std::abs(v) <= 20 * (dtau * dtau + h));
}

TEST_CASE("harmonic_exp flow: consistency defect and both ODE residuals") {
  double h = 1.0 / 128, dtau = 1.0 / 64;
  Grid g = grid2(-1.0, 1.0, -1.0, 1.0, h);
  ScalarField u = analytic_field("harmonic_exp", OracleParams{}, g);
  FlowTrajectory t = integrate_flow(u, Vec(0.0, 0.0), 1.0, 1.1875, dtau);
  for (double d : t.defect) CHECK(d <= 10 * (std::pow(dtau, 4) + h * h));

  SigmaResiduals r = ode_residual_sigma(t);
  for (size_t k = 0; k < r.tau.size(); ++k) {
    CHECK(std::abs(r.variant_a[k]) <= 20 * (dtau * dtau + h * h));
    CHECK(std::abs(r.variant_b[k]) <= 20 * (dtau * dtau + h * h));
  }
  HResiduals hr = ode_residual_H(u, t);
  for (double v : hr.residual) CHECK(std::abs(v) <= 20 * (dtau * dtau + h));
}

TEST_CASE("refinement reduces the harmonic_exp ODE residuals by >= 3x") {
  auto worst = [](double h, double dtau) {
    Grid g = grid2(-1.0, 1.0, -1.0, 1.0, h);
    ScalarField u = analytic_field("harmonic_exp", OracleParams{}, g);
    FlowTrajectory t = integrate_flow(u, Vec(0.0, 0.0), 1.0, 1.1875, dtau);
    SigmaResiduals r = ode_residual_sigma(t);
    HResiduals hr = ode_residual_H(u, t);
    double w = 0.0;
    for (double v : r.variant_b) w = std::max(w, std::abs(v));
    for (double v : hr.residual) w = std::max(w, std::abs(v));
    return w;
  };
  double coarse = worst(1.0 / 64, 1.0 / 32);
  double fine = worst(1.0 / 128, 1.0 / 64);
  CHECK(coarse / fine >= 3.0);
}

TEST_CASE("normal-flow property and error paths") {
  double h = 1.0 / 64;
  ScalarField u = distance_case(h);
  FlowTrajectory t = integrate_flow(u, Vec(0.0, -0.35), 0.5, 0.75, 1.0 / 32);
  for (size_t k = 0; k < t.size(); ++k) {
    Vec g = u.gradient_at(t.points[k]);
    Vec vel = g * (1.0 / dot(g, g));
    ShapeAtPoint sh = shape_from_field(u, t.points[k]);
    double cosang = dot(vel, sh.nu) / (norm(vel) * norm(sh.nu));
    CHECK(std::acos(std::min(1.0, cosang)) < 1e-6);
  }

  // wrong starting level
  CHECK_THROWS_AS(integrate_flow(u, Vec(0.0, -0.35), 0.6, 0.8, 1.0 / 32), BadConfig);
  // trajectory runs outside the safe margin
  CHECK_THROWS_AS(integrate_flow(u, Vec(0.0, -0.35), 0.5, 1.375, 1.0 / 32), LeftDomain);
  // too short for centered differences
  FlowTrajectory t2 = integrate_flow(u, Vec(0.0, -0.35), 0.5, 0.5 + 1.0 / 32, 1.0 / 32);
  CHECK_THROWS_AS(ode_residual_sigma(t2), TooShort);
  // degenerate gradient on a plateau
  Grid gp = grid2(-1.0, 1.0, -0.5, 0.5, 0.05);
  OracleParams pp;
  pp.eps = 0.1;
  ScalarField prof = analytic_field("profile1d", pp, gp);
  CHECK_THROWS_AS(integrate_flow(prof, Vec(0.0, 0.4), 1.0, 1.1875, 1.0 / 32), DegenerateGradient);
}
