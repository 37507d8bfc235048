#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fbac/field_io.hpp"
#include "fbac/flow.hpp"
#include "fbac/solver.hpp"
#include "fbac/verify.hpp"

using namespace fbac;

TEST_CASE("level and trajectory CSV shapes") {
  Box b;
  b.lo = Vec(-1.0, -0.5);
  b.hi = Vec(1.0, 0.5);
  Grid g = build_grid(b, 1.0 / 32);
  OracleParams p;
  p.eps = 0.25;
  ScalarField u = analytic_field("profile1d", p, g);

  LevelSurface s = extract_level(u, 0.5);
  std::ostringstream os;
  dump_level_csv(s, os);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header == "x1,gamma,sigma,H,h11");
  size_t rows = 0;
  std::string line;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == s.num_nodes());

  FlowTrajectory t = integrate_flow(u, Vec(0.0, 0.0), 0.0, 0.25, 1.0 / 32);
  std::ostringstream ot;
  dump_trajectory_csv(t, ot);
  std::istringstream it(ot.str());
  std::getline(it, header);
  CHECK(header == "tau,x1,x2,sigma,H,lap_u,defect");
}

TEST_CASE("solver outputs are deterministic (repeated runs byte-identical)") {
  SolverConfig cfg;
  cfg.eps = 0.2;
  cfg.h = 0.05;
  cfg.gamma0_src = "0.02*cos(pi*x)";
  cfg.mode = SolveMode::TrialFB;
  cfg.max_iter = 500;
  cfg.finalize();

  auto run_once = [&]() {
    Solution sol = solve_trial_free_boundary(cfg);
    std::ostringstream os;
    dump_field(sol.u, os);
    dump_gamma_csv(sol.base_grid(), sol.gamma_plus, os);
    dump_gamma_csv(sol.base_grid(), sol.gamma_minus, os);
    dump_log_csv(sol.log, os);
    return os.str();
  };
  CHECK(run_once() == run_once());
}

TEST_CASE("gamma CSV and log CSV headers") {
  Grid base;
  base.dim = 1;
  base.shape = {5, 1, 1};
  base.origin = Vec(1);
  base.origin[0] = -1.0;
  base.h = 0.5;
  std::vector<double> gam{0.1, 0.2, 0.3, 0.2, 0.1};
  std::ostringstream os;
  dump_gamma_csv(base, gam, os);
  CHECK(os.str().rfind("x1,gamma\n", 0) == 0);

  ConvergenceLog log;
  log.residuals = {0.5, 0.25};
  log.energies = {3.0, 2.0};
  std::ostringstream ol;
  dump_log_csv(log, ol);
  CHECK(ol.str().rfind("iter,residual,energy\n", 0) == 0);
}

TEST_CASE("report JSON round-trips through the parser with exact keys") {
  GeometryReport rep;
  rep.label = "t";
  rep.eps = 0.1;
  rep.h = 0.0125;
  rep.dtau = 1.0 / 32;
  rep.gamma0 = "0";
  rep.mode = "trial_fb";
  rep.eta = 0.25;
  rep.ratios_applicable = true;
  rep.C_naive = 1.0;
  rep.C_interior = 2.0;
  rep.C_thm_h[0.5] = 3.0;
  rep.C_thm_H[0.5] = 4.0;
  ordered_json j = report_json(rep);
  auto parsed = nlohmann::json::parse(j.dump());
  CHECK(parsed["instance"]["eps"] == 0.1);
  CHECK(parsed["ratios"]["C_thm_h"]["0.5"] == 3.0);
  CHECK(parsed["grid"]["h"] == 0.0125);
  CHECK(parsed["version"] == std::string(kVersion));
}

TEST_CASE("field dump keeps 17 significant digits") {
  CHECK(fmt17(1.0 / 3.0) == "0.33333333333333331");
  double x = 0.1 + 0.2;
  double y = std::stod(fmt17(x));
  CHECK(x == y);
}
