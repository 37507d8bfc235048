#include <doctest.h>

#include <cmath>
#include <random>

#include "fbac/field.hpp"
#include "fbac/field_io.hpp"

using namespace fbac;

namespace {

Grid grid2(double lo0, double hi0, double lo1, double hi1, double h) {
  Box b;
  b.lo = Vec(lo0, lo1);
  b.hi = Vec(hi0, hi1);
  return build_grid(b, h);
}

ScalarField from_function(const Grid& g, double (*fn)(const Vec&)) {
  std::vector<double> v(g.num_nodes());
  for (size_t f = 0; f < g.num_nodes(); ++f) v[f] = fn(g.node(g.unflat(f)));
  return ScalarField(g, std::move(v));
}

} // namespace

TEST_CASE("build_grid shapes and failure modes") {
  // side/h + 1 nodes per axis (>= 4 per axis by the grid invariant)
  Grid g = grid2(-1.0, 1.0, -0.5, 0.5, 0.25);
  CHECK(g.shape[0] == 9);
  CHECK(g.shape[1] == 5);

  Box unit;
  unit.lo = Vec(0.0, 0.0);
  unit.hi = Vec(1.0, 1.0);
  CHECK_THROWS_AS(build_grid(unit, 0.3), NonCommensurate);

  Grid fine = grid2(-1.0, 1.0, -1.0, 1.0, 1.0 / 128);
  CHECK(fine.shape[0] == 257);
  CHECK(fine.shape[1] == 257);

  Box thin;
  thin.lo = Vec(0.0, 0.0);
  thin.hi = Vec(1.0, 0.5);
  CHECK_THROWS_AS(build_grid(thin, 0.25), TooCoarse); // only 3 nodes on axis 1
}

TEST_CASE("node coordinates reproduce origin + i*h") {
  Grid g = grid2(-1.0, 1.0, -0.5, 0.5, 1.0 / 128);
  CHECK(g.node(Index{256, 0, 0})[0] == 1.0);
  CHECK(g.node(Index{128, 64, 0})[0] == 0.0);
  CHECK(g.node(Index{0, 128, 0})[1] == 0.5);
}

TEST_CASE("sampling: node identity, affine reproduction, quadratic error") {
  Grid g = grid2(-1.0, 1.0, -0.5, 0.5, 0.1);
  ScalarField f = from_function(g, [](const Vec& p) { return 2.0 * p[0] - 3.0 * p[1] + 0.7; });

  // exact at nodes
  Index i{7, 4, 0};
  CHECK(f.sample(g.node(i)) == doctest::Approx(f.value(i)).epsilon(1e-15));

  // affine functions reproduced at random interior points
  std::mt19937 rng(12345);
  std::uniform_real_distribution<double> ux(-0.99, 0.99), uy(-0.49, 0.49);
  for (int k = 0; k < 200; ++k) {
    Vec p(ux(rng), uy(rng));
    double want = 2.0 * p[0] - 3.0 * p[1] + 0.7;
    CHECK(std::abs(f.sample(p) - want) < 1e-13);
  }

  // f = x^2 at a cell center: interpolation error is exactly h^2/4
  ScalarField q = from_function(g, [](const Vec& p) { return p[0] * p[0]; });
  Vec center(0.35, 0.0); // midpoint between nodes 0.3 and 0.4
  double err = q.sample(center) - center[0] * center[0];
  CHECK(err == doctest::Approx(0.1 * 0.1 / 4.0).epsilon(1e-10));

  CHECK_THROWS_AS(f.sample(Vec(1.5, 0.0)), OutOfDomain);
}

TEST_CASE("randomized affine invariant for gradient and hessian") {
  Grid g = grid2(-1.0, 1.0, -0.5, 0.5, 1.0 / 16);
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  for (int trial = 0; trial < 8; ++trial) {
    double a = coef(rng), b = coef(rng), c = coef(rng);
    std::vector<double> v(g.num_nodes());
    for (size_t f = 0; f < g.num_nodes(); ++f) {
      Vec p = g.node(g.unflat(f));
      v[f] = a * p[0] + b * p[1] + c;
    }
    ScalarField f(g, std::move(v));
    Vec p(0.3, -0.2);
    Vec grad = f.gradient_at(p);
    CHECK(std::abs(grad[0] - a) < 1e-12);
    CHECK(std::abs(grad[1] - b) < 1e-12);
    Mat h = f.hessian_at(p);
    for (int r = 0; r < 2; ++r)
      for (int s = 0; s < 2; ++s) CHECK(std::abs(h(r, s)) < 1e-12);
  }
}

TEST_CASE("stencil accuracy on harmonic_exp") {
  double h = 1.0 / 64;
  Grid g = grid2(-1.0, 1.0, -1.0, 1.0, h);
  ScalarField u = analytic_field("harmonic_exp", OracleParams{}, g);

  // u = exp(vertical) cos(base): grad at the origin is (0, 1)
  Vec grad = u.gradient_at(Vec(0.0, 0.0));
  CHECK(std::abs(grad[0] - 0.0) <= 5 * h * h);
  CHECK(std::abs(grad[1] - 1.0) <= 5 * h * h);

  // harmonic: |lap u| <= 5 h^2 at probe points
  for (double x : {-0.5, 0.0, 0.4})
    for (double y : {-0.5, 0.0, 0.5}) CHECK(std::abs(u.laplacian_at(Vec(x, y))) <= 5 * h * h);

  CHECK_THROWS_AS(u.gradient_at(Vec(0.0, 1.0 - h)), TooNearBoundary);
}

TEST_CASE("differential operators converge with order >= 1.7 on harmonic_exp") {
  auto worst = [](double h) {
    Grid g = grid2(-1.0, 1.0, -1.0, 1.0, h);
    ScalarField u = analytic_field("harmonic_exp", OracleParams{}, g);
    double w = 0.0;
    for (double x : {-0.4, -0.1, 0.2, 0.5})
      for (double y : {-0.45, 0.05, 0.35}) {
        Vec p(x, y);
        double ex = std::exp(p[1]);
        Vec grad = u.gradient_at(p);
        w = std::max(w, std::abs(grad[0] + ex * std::sin(p[0])));
        w = std::max(w, std::abs(grad[1] - ex * std::cos(p[0])));
        Mat hess = u.hessian_at(p);
        w = std::max(w, std::abs(hess(0, 0) + ex * std::cos(p[0])));
        w = std::max(w, std::abs(hess(0, 1) + ex * std::sin(p[0])));
        w = std::max(w, std::abs(hess(1, 1) - ex * std::cos(p[0])));
      }
    return w;
  };
  double e64 = worst(1.0 / 64), e128 = worst(1.0 / 128);
  double order = std::log2(e64 / e128);
  CHECK(order >= 1.7);
}

TEST_CASE("translation equivariance of the differentials") {
  double h = 1.0 / 32;
  Grid g1 = grid2(-1.0, 1.0, -0.5, 0.5, h);
  Box b2;
  Vec shift(0.21337, -0.0831);
  b2.lo = g1.box().lo + shift;
  b2.hi = g1.box().hi + shift;
  Grid g2 = build_grid(b2, h);

  auto fn = [](const Vec& p) { return std::sin(2.0 * p[0]) * std::exp(0.5 * p[1]); };
  std::vector<double> v1(g1.num_nodes()), v2(g2.num_nodes());
  for (size_t f = 0; f < g1.num_nodes(); ++f) {
    Vec p = g1.node(g1.unflat(f));
    v1[f] = fn(p);
    v2[f] = fn(g2.node(g2.unflat(f)) - shift);
  }
  ScalarField f1(g1, std::move(v1)), f2(g2, std::move(v2));
  Vec p(0.4, -0.1);
  Vec q = p + shift;
  Vec ga = f1.gradient_at(p), gb = f2.gradient_at(q);
  CHECK(std::abs(ga[0] - gb[0]) < 1e-12);
  CHECK(std::abs(ga[1] - gb[1]) < 1e-12);
  Mat ha = f1.hessian_at(p), hb = f2.hessian_at(q);
  CHECK(std::abs(ha(0, 0) - hb(0, 0)) < 1e-12);
  CHECK(std::abs(ha(0, 1) - hb(0, 1)) < 1e-12);
}

TEST_CASE("analytic oracle values") {
  Grid g = grid2(-1.0, 1.0, -0.5, 0.5, 0.05);
  OracleParams p;
  p.eps = 0.1;
  ScalarField prof = analytic_field("profile1d", p, g);
  CHECK(prof.sample(Vec(0.0, 0.05)) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(prof.eps() == 0.1);

  OracleParams pd;
  pd.center = Vec(0.0, 0.0);
  ScalarField dist = analytic_field("distance", pd, g);
  CHECK(dist.sample(Vec(0.3, 0.4)) == doctest::Approx(0.5).epsilon(1e-14));

  Grid gh = grid2(-1.0, 1.0, -1.0, 1.0, 0.0625);
  ScalarField hx = analytic_field("harmonic_exp", OracleParams{}, gh);
  // nodal values equal the formula exactly; the probe "(0, pi/4)" sits at
  // ambient (base pi/4, vertical 0)
  Index ni{20, 16, 0};
  Vec np = gh.node(ni);
  CHECK(hx.value(ni) == std::exp(np[1]) * std::cos(np[0]));
  CHECK(hx.sample(Vec(M_PI / 4.0, 0.0)) ==
        doctest::Approx(std::cos(M_PI / 4.0)).epsilon(2e-3));

  CHECK_THROWS_AS(analytic_field("nope", OracleParams{}, g), UnknownOracle);
  OracleParams bad;
  bad.eps = -1.0;
  CHECK_THROWS_AS(analytic_field("profile1d", bad, g), BadConfig);
}

TEST_CASE("tilted profile matches the plane profile") {
  Grid g = grid2(-1.0, 1.0, -0.5, 0.5, 1.0 / 64);
  OracleParams p;
  p.eps = 0.25;
  p.e = Vec(0.6, 0.8);
  ScalarField u = analytic_field("tilted", p, g);
  Vec probe(-0.2, 0.15); // x.e = 0
  CHECK(std::abs(u.sample(probe)) < 1e-12);
  Vec grad = u.gradient_at(probe);
  CHECK(grad[0] == doctest::Approx(0.6 / 0.25).epsilon(1e-10));
  CHECK(grad[1] == doctest::Approx(0.8 / 0.25).epsilon(1e-10));
}

TEST_CASE("FBAC1 dump round-trips bit-exactly") {
  Grid g = grid2(-1.0, 1.0, -0.5, 0.5, 0.125);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> uv(-1.0, 1.0);
  std::vector<double> v(g.num_nodes());
  for (double& x : v) x = uv(rng);
  ScalarField f(g, std::move(v), "random test field", 0.17);

  std::ostringstream os;
  dump_field(f, os);
  std::istringstream is(os.str());
  ScalarField f2 = load_field(is, "mem");
  std::ostringstream os2;
  dump_field(f2, os2);
  CHECK(os.str() == os2.str());
  CHECK(f2.label() == "random test field");
  CHECK(f2.eps() == 0.17);
}

TEST_CASE("FBAC1 parse errors name the line") {
  std::istringstream is("FBAC1\ndim 2\nshape 5 bad\n");
  try {
    load_field(is, "file.txt");
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("file.txt:3") != std::string::npos);
  }
}
