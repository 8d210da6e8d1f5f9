#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "dragforge/errors.hpp"
#include "dragforge/flow_sim.hpp"

using namespace dragforge;

namespace {

BoundaryCurve ellipse(double cx, double cy, double a, double b, int n = 400) {
  BoundaryCurve c;
  for (int k = 0; k < n; ++k) {
    const double t = 2.0 * M_PI * k / n;
    c.points.push_back({cx + a * std::cos(t), cy + b * std::sin(t)});
  }
  c.points.push_back(c.points.front());
  return c;
}

// Cylinder of `cells` lattice cells diameter centered in an nx x ny channel,
// with the viscosity chosen so the diameter-based Reynolds number is `re`.
double cylinder_cd(int nx, int ny, int cells, double re) {
  FlowConfig cfg;
  const double h = 0.01;
  cfg.grid = GridSpec{nx, ny, h, -0.3 * nx * h, -0.5 * ny * h};
  cfg.drag_tolerance = 1e-5;
  cfg.max_steps = 200000;
  const double nu_lattice = cfg.inflow_speed * cells / re;
  cfg.viscosity = cfg.reference_speed * cfg.chord * nu_lattice / (cfg.inflow_speed * cfg.chord / h);
  REQUIRE(cfg.lattice_viscosity() == doctest::Approx(nu_lattice).epsilon(1e-12));
  const OccupancyMask mask = rasterize(ellipse(0.0, 0.0, cells * h / 2, cells * h / 2), cfg.grid);
  const FlowResult r = simulate(mask, cfg);
  REQUIRE(r.converged);
  return drag_coefficient(r.drag_force, cells, cfg);
}

FlowConfig short_run(int steps) {
  FlowConfig cfg;
  cfg.max_steps = steps;
  cfg.drag_tolerance = 1e-300;
  return cfg;
}

}  // namespace

TEST_CASE("drag coefficient arithmetic") {
  FlowConfig cfg;
  cfg.density = 2.0;
  cfg.inflow_speed = 1.0;
  CHECK(drag_coefficient(1.0, 1.0, cfg) == 1.0);
  CHECK(drag_coefficient(0.0, 1.0, cfg) == 0.0);
  CHECK_THROWS_AS(drag_coefficient(1.0, 0.0, cfg), ArgumentError);
  CHECK_THROWS_AS(drag_coefficient(1.0, -1.0, cfg), ArgumentError);
}

TEST_CASE("flow config mapping and validation") {
  FlowConfig cfg;
  CHECK(cfg.reynolds() == doctest::Approx(200.0));
  CHECK(cfg.tau() >= kTauMin);
  CHECK(cfg.tau() <= kTauMax);
  cfg.inflow_speed = 0.2;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = FlowConfig{};
  cfg.viscosity = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = FlowConfig{};
  cfg.drag_tolerance = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
}

TEST_CASE("empty domain has zero drag") {
  FlowConfig cfg;
  const FlowResult r = simulate(OccupancyMask(cfg.grid), cfg);
  CHECK(std::abs(r.drag_force) < 1e-10);
  CHECK(std::abs(r.lift_force) < 1e-10);
  // An exactly unchanged force settles as soon as the warm-up is over.
  CHECK(r.converged);
  CHECK(r.steps_run >= cfg.warmup_steps());
  CHECK(r.steps_run <= cfg.warmup_steps() + (cfg.settle_checks + 1) * cfg.check_interval);
}

TEST_CASE("symmetric shape has no lift and a converged positive drag") {
  const FlowConfig cfg;
  const ShapeParams p{{0.09, 0.14, 0.11, 0.06}, 0.18};
  const OccupancyMask mask = rasterize(build_boundary(p, 200), cfg.grid);
  const FlowResult r = simulate(mask, cfg);
  CHECK(r.converged);
  CHECK(r.steps_run >= cfg.warmup_steps());
  CHECK(r.steps_run <= cfg.max_steps);
  CHECK(r.drag_force > 0.0);
  CHECK(std::abs(r.lift_force) <= 1e-8 * std::abs(r.drag_force) + 1e-10);
  for (double v : r.velocity_x) CHECK(std::isfinite(v));
  for (double v : r.pressure_proxy) CHECK(std::isfinite(v));
}

TEST_CASE("mirroring the mask negates lift and keeps drag") {
  const FlowConfig cfg = short_run(4000);
  const OccupancyMask upper = rasterize(ellipse(0.4, 0.07, 0.2, 0.06), cfg.grid);
  OccupancyMask lower(cfg.grid);
  for (int j = 0; j < cfg.grid.ny; ++j)
    for (int i = 0; i < cfg.grid.nx; ++i) lower.set(i, cfg.grid.ny - 1 - j, upper.at(i, j));
  const FlowResult a = simulate(upper, cfg);
  const FlowResult b = simulate(lower, cfg);
  CHECK(std::abs(a.lift_force) > 1e-6);
  CHECK(std::abs(a.drag_force - b.drag_force) <= 1e-10 * std::abs(a.drag_force));
  CHECK(std::abs(a.lift_force + b.lift_force) <= 1e-10 * std::abs(a.lift_force));
}

TEST_CASE("fatter ellipse has larger drag") {
  const FlowConfig cfg;
  const FlowResult thin = simulate(rasterize(ellipse(0.5, 0.0, 0.5 - 1e-3, 0.05), cfg.grid), cfg);
  const FlowResult fat = simulate(rasterize(ellipse(0.5, 0.0, 0.5 - 1e-3, 0.10), cfg.grid), cfg);
  CHECK(thin.converged);
  CHECK(fat.converged);
  CHECK(fat.drag_force > thin.drag_force);
}

TEST_CASE("simulation is bit-exact deterministic") {
  const FlowConfig cfg = short_run(2000);
  const OccupancyMask mask = rasterize(build_boundary({{0.1, 0.12, 0.08, 0.05}, 0.18}, 200), cfg.grid);
  const FlowResult a = simulate(mask, cfg);
  const FlowResult b = simulate(mask, cfg);
  CHECK(a.drag_force == b.drag_force);
  CHECK(a.lift_force == b.lift_force);
  CHECK(a.velocity_x == b.velocity_x);
  CHECK(a.velocity_y == b.velocity_y);
  CHECK(a.density == b.density);
}

TEST_CASE("simulate precondition errors") {
  const FlowConfig cfg;
  OccupancyMask at_inlet(cfg.grid);
  at_inlet.set(1, 40, true);
  CHECK_THROWS_AS(simulate(at_inlet, cfg), GeometryError);
  OccupancyMask at_outlet(cfg.grid);
  at_outlet.set(cfg.grid.nx - 1, 40, true);
  CHECK_THROWS_AS(simulate(at_outlet, cfg), GeometryError);
  CHECK_THROWS_AS(simulate(OccupancyMask(GridSpec{16, 16, 0.1, 0, 0}), cfg), ArgumentError);
}

TEST_CASE("observer sees snapshots at the requested cadence") {
  const FlowConfig cfg = short_run(1000);
  int calls = 0;
  int last = 0;
  const OccupancyMask mask = rasterize(build_boundary({{0.1, 0.1, 0.1, 0.1}, 0.18}, 200), cfg.grid);
  simulate(mask, cfg, [&](int step, const FlowResult& f) {
    ++calls;
    last = step;
    CHECK(f.velocity_x.size() == cfg.grid.cell_count());
  }, 250);
  CHECK(calls == 4);
  CHECK(last == 1000);
}

TEST_CASE("evaluate_shape: positive, reproducible, fatter is draggier") {
  const FlowConfig cfg;
  const ShapeParams mid{{0.1, 0.12, 0.1, 0.07}, 0.18};
  const DragSample a = evaluate_shape(mid, cfg);
  const DragSample b = evaluate_shape(mid, cfg);
  CHECK(a.converged);
  CHECK(a.drag > 0.0);
  CHECK(a == b);
  CHECK(std::memcmp(&a.drag, &b.drag, sizeof(double)) == 0);

  const DragSample thin = evaluate_shape({{0.045, 0.045, 0.045, 0.045}, 0.18}, cfg);
  const DragSample fat = evaluate_shape({{0.18, 0.18, 0.18, 0.18}, 0.18}, cfg);
  CHECK(thin.converged);
  CHECK(fat.converged);
  CHECK(fat.drag > thin.drag);
}

TEST_CASE("evaluate_shape flags failures instead of throwing") {
  FlowConfig cfg;
  const DragSample too_big = evaluate_shape({{0.5, 0.5, 0.5, 0.5}, 0.5}, cfg);
  CHECK_FALSE(too_big.converged);
  CHECK(std::isnan(too_big.drag));
  cfg.max_steps = 400;
  const DragSample unfinished = evaluate_shape({{0.1, 0.1, 0.1, 0.1}, 0.18}, cfg);
  CHECK_FALSE(unfinished.converged);
}

TEST_CASE("drag coefficient changes monotonically over a low-Re viscosity sweep") {
  const ShapeParams p{{0.1, 0.12, 0.1, 0.07}, 0.18};
  std::vector<double> cd;
  for (double nu : {0.4, 0.6, 0.8}) {
    FlowConfig cfg;
    cfg.viscosity = nu;
    const DragSample s = evaluate_shape(p, cfg);
    REQUIRE(s.converged);
    cd.push_back(s.drag);
  }
  const bool increasing = cd[0] < cd[1] && cd[1] < cd[2];
  const bool decreasing = cd[0] > cd[1] && cd[1] > cd[2];
  CHECK((increasing || decreasing));
}

TEST_CASE("field CSV layout") {
  const FlowConfig cfg = short_run(10);
  const FlowResult r = simulate(OccupancyMask(cfg.grid), cfg);
  std::ostringstream os;
  write_field_csv(os, cfg.grid, r);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "x,y,u,v,rho");
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == cfg.grid.cell_count());
}

// 20% blockage between free-slip walls lifts C_D above the unconfined range
// (measured about 2.3), so the literal range check is expected to fail.
TEST_CASE("cylinder at Re 40, diameter 0.2 of the domain height" * doctest::may_fail()) {
  const double coarse = cylinder_cd(160, 80, 16, 40.0);
  CHECK(coarse >= 1.2);
  CHECK(coarse <= 2.0);
}

TEST_CASE("cylinder at Re 40: refinement self-consistency within 15%") {
  const double coarse = cylinder_cd(160, 80, 16, 40.0);
  const double fine = cylinder_cd(320, 160, 32, 40.0);
  CHECK(std::abs(coarse - fine) <= 0.15 * fine);
}

TEST_CASE("cylinder at Re 40 with 5% blockage lands in the unconfined range") {
  const double cd = cylinder_cd(300, 200, 10, 40.0);
  CHECK(cd >= 1.2);
  CHECK(cd <= 2.0);
}
