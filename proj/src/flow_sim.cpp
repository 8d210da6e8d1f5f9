#include "dragforge/flow_sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>

#include "dragforge/errors.hpp"

namespace dragforge {

namespace {

constexpr int Q = 9;
constexpr std::array<int, Q> kEx = {0, 1, 0, -1, 0, 1, -1, -1, 1};
constexpr std::array<int, Q> kEy = {0, 0, 1, 0, -1, 1, 1, -1, -1};
constexpr std::array<int, Q> kOpp = {0, 3, 4, 1, 2, 7, 8, 5, 6};
constexpr std::array<int, Q> kMirrorY = {0, 1, 4, 3, 2, 8, 7, 6, 5};
constexpr std::array<double, Q> kW = {4.0 / 9.0,  1.0 / 9.0,  1.0 / 9.0,  1.0 / 9.0, 1.0 / 9.0,
                                      1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0};

double equilibrium(int q, double rho, double ux, double uy) {
  const double eu = kEx[q] * ux + kEy[q] * uy;
  const double usq = ux * ux + uy * uy;
  return kW[q] * rho * (1.0 + 3.0 * eu + 4.5 * eu * eu - 1.5 * usq);
}

// Moments are summed in an order that is invariant under y-mirroring
// (2<->4, 5<->8, 6<->7), so mirrored masks give bit-mirrored fields.
struct Moments {
  double rho, ux, uy;
};

inline Moments moments(const double* f) {
  const double rho = f[0] + f[1] + f[3] + (f[2] + f[4]) + ((f[5] + f[8]) + (f[6] + f[7]));
  const double mx = (f[1] + (f[5] + f[8])) - (f[3] + (f[6] + f[7]));
  const double my = (f[2] + (f[5] + f[6])) - (f[4] + (f[7] + f[8]));
  return {rho, mx / rho, my / rho};
}

// Precomputed streaming topology. For each updated cell and direction, `source`
// holds the flat index (q * N + cell) of the post-collision population that
// arrives there; bounce-back and free-slip reflection are folded in.
struct Topology {
  std::vector<std::int32_t> cells;
  std::vector<std::int32_t> source;
  // Momentum-exchange links: population index heading into the body and the
  // direction it travels.
  std::vector<std::int32_t> link_population;
  std::vector<std::int8_t> link_dir;
  std::vector<std::int32_t> outlet_from;
  std::vector<std::int32_t> outlet_to;
};

Topology build_topology(const OccupancyMask& mask) {
  const GridSpec& g = mask.grid;
  const int nx = g.nx;
  const int ny = g.ny;
  const auto n = static_cast<std::int32_t>(g.cell_count());
  Topology t;
  auto flat = [nx](int i, int j) { return static_cast<std::int32_t>(j * nx + i); };

  for (int j = 0; j < ny; ++j) {
    for (int i = 1; i < nx - 1; ++i) {
      if (mask.at(i, j)) continue;
      const std::int32_t c = flat(i, j);
      t.cells.push_back(c);
      for (int q = 0; q < Q; ++q) {
        int si = i - kEx[q];
        int sj = j - kEy[q];
        int sq = q;
        if (sj < 0 || sj >= ny) {
          // Specular reflection at the free-slip wall.
          sj = j;
          sq = kMirrorY[q];
          si = std::clamp(si, 0, nx - 1);
        }
        if (mask.at(si, sj)) {
          const int out = kOpp[q];
          t.source.push_back(out * n + c);
          t.link_population.push_back(out * n + c);
          t.link_dir.push_back(static_cast<std::int8_t>(out));
        } else {
          t.source.push_back(sq * n + flat(si, sj));
        }
      }
    }
    t.outlet_from.push_back(flat(nx - 2, j));
    t.outlet_to.push_back(flat(nx - 1, j));
  }
  return t;
}

struct Force {
  double fx, fy;
};

Force momentum_exchange(const Topology& t, const std::vector<double>& post) {
  double fx = 0.0;
  double fy = 0.0;
  for (std::size_t k = 0; k < t.link_population.size(); ++k) {
    const double f = post[static_cast<std::size_t>(t.link_population[k])];
    const int q = t.link_dir[k];
    fx += 2.0 * f * kEx[q];
    fy += 2.0 * f * kEy[q];
  }
  return {fx, fy};
}

void fill_fields(const OccupancyMask& mask, const std::vector<double>& post, FlowResult& out) {
  const std::size_t n = mask.grid.cell_count();
  out.velocity_x.assign(n, 0.0);
  out.velocity_y.assign(n, 0.0);
  out.density.assign(n, 0.0);
  out.pressure_proxy.assign(n, 0.0);
  std::array<double, Q> f{};
  for (std::size_t c = 0; c < n; ++c) {
    if (mask.solid[c]) continue;
    for (int q = 0; q < Q; ++q) f[q] = post[q * n + c];
    const Moments m = moments(f.data());
    out.velocity_x[c] = m.ux;
    out.velocity_y[c] = m.uy;
    out.density[c] = m.rho;
    out.pressure_proxy[c] = m.rho / 3.0;
  }
}

}  // namespace

void FlowConfig::validate() const {
  if (!(viscosity > 0.0)) throw ArgumentError("flow.viscosity: must be > 0");
  if (!(inflow_speed > 0.0) || !(inflow_speed < 0.15)) throw ArgumentError("flow.inflow_speed: must lie in (0, 0.15)");
  if (!(density > 0.0)) throw ArgumentError("flow.density: must be > 0");
  if (!(reference_speed > 0.0)) throw ArgumentError("flow.reference_speed: must be > 0");
  if (!(chord > 0.0)) throw ArgumentError("flow.chord: must be > 0");
  if (max_steps < 1) throw ArgumentError("flow.max_steps: must be >= 1");
  if (!(drag_tolerance > 0.0)) throw ArgumentError("flow.drag_tolerance: must be > 0");
  if (check_interval < 1) throw ArgumentError("flow.check_interval: must be >= 1");
  if (settle_checks < 1) throw ArgumentError("flow.settle_checks: must be >= 1");
  grid.validate();
}

double FlowConfig::lattice_viscosity() const {
  const double chord_cells = chord / grid.spacing;
  return inflow_speed * chord_cells / reynolds();
}

int FlowConfig::warmup_steps() const { return static_cast<int>(std::ceil(grid.nx / inflow_speed)); }

double FlowConfig::tau() const { return std::clamp(3.0 * lattice_viscosity() + 0.5, kTauMin, kTauMax); }

FlowResult simulate(const OccupancyMask& mask, const FlowConfig& cfg, const FieldObserver& observer,
                    int observe_every) {
  cfg.validate();
  if (!(mask.grid == cfg.grid)) throw ArgumentError("mask grid does not match flow.grid");
  const GridSpec& g = mask.grid;
  for (int j = 0; j < g.ny; ++j) {
    for (int i : {0, 1, g.nx - 2, g.nx - 1}) {
      if (mask.at(i, j)) throw GeometryError("solid cells touch the inlet/outlet columns");
    }
  }

  const std::size_t n = g.cell_count();
  const Topology topo = build_topology(mask);
  const double omega = 1.0 / cfg.tau();
  const double rho0 = cfg.density;
  const double u0 = cfg.inflow_speed;

  std::vector<double> post(Q * n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    if (mask.solid[c]) continue;
    for (int q = 0; q < Q; ++q) post[q * n + c] = equilibrium(q, rho0, u0, 0.0);
  }
  std::vector<double> next = post;

  FlowResult result;
  const std::size_t active = topo.cells.size();
  const std::int32_t* src = topo.source.data();
  const std::int32_t* cells = topo.cells.data();

  double previous_drag = std::numeric_limits<double>::quiet_NaN();
  const int warmup = cfg.warmup_steps();
  int settled = 0;
  int step = 0;
  while (step < cfg.max_steps) {
    const double* in = post.data();
    double* out = next.data();
    for (std::size_t k = 0; k < active; ++k) {
      const std::int32_t* s = src + Q * k;
      double f[Q];
      for (int q = 0; q < Q; ++q) f[q] = in[s[q]];
      const Moments m = moments(f);
      const std::size_t c = static_cast<std::size_t>(cells[k]);
      for (int q = 0; q < Q; ++q) {
        out[q * n + c] = f[q] + omega * (equilibrium(q, m.rho, m.ux, m.uy) - f[q]);
      }
    }
    for (std::size_t r = 0; r < topo.outlet_from.size(); ++r) {
      for (int q = 0; q < Q; ++q) {
        out[q * n + static_cast<std::size_t>(topo.outlet_to[r])] = out[q * n + static_cast<std::size_t>(topo.outlet_from[r])];
      }
    }
    post.swap(next);
    ++step;

    if (observer && observe_every > 0 && step % observe_every == 0) {
      FlowResult snapshot;
      const Force f = momentum_exchange(topo, post);
      snapshot.drag_force = f.fx;
      snapshot.lift_force = f.fy;
      snapshot.steps_run = step;
      fill_fields(mask, post, snapshot);
      observer(step, snapshot);
    }

    if (step % cfg.check_interval == 0 || step == cfg.max_steps) {
      const Force f = momentum_exchange(topo, post);
      if (!std::isfinite(f.fx) || !std::isfinite(f.fy)) {
        throw DivergenceError("non-finite force at step " + std::to_string(step), step);
      }
      result.drag_force = f.fx;
      result.lift_force = f.fy;
      if (step % cfg.check_interval == 0 && std::isfinite(previous_drag)) {
        const double change = std::abs(f.fx - previous_drag);
        const bool small = change == 0.0 || change < cfg.drag_tolerance * std::abs(f.fx);
        settled = small ? settled + 1 : 0;
        if (settled >= cfg.settle_checks && step >= warmup) {
          result.converged = true;
          break;
        }
      }
      previous_drag = f.fx;
    }
  }

  result.steps_run = step;
  fill_fields(mask, post, result);
  for (std::size_t c = 0; c < n; ++c) {
    if (!std::isfinite(result.density[c]) || !std::isfinite(result.velocity_x[c]) ||
        !std::isfinite(result.velocity_y[c])) {
      throw DivergenceError("non-finite populations after " + std::to_string(step) + " steps", step);
    }
  }
  return result;
}

double drag_coefficient(double drag_force, double reference_area, const FlowConfig& cfg) {
  if (!(reference_area > 0.0)) throw ArgumentError("reference area must be > 0");
  if (!(cfg.density > 0.0)) throw ArgumentError("density must be > 0");
  if (!(cfg.inflow_speed > 0.0)) throw ArgumentError("inflow speed must be > 0");
  return drag_force / (reference_area * cfg.density * cfg.inflow_speed * cfg.inflow_speed / 2.0);
}

bool DragSample::operator==(const DragSample& o) const {
  const bool same_drag = (drag == o.drag) || (std::isnan(drag) && std::isnan(o.drag));
  return params == o.params && same_drag && converged == o.converged;
}

DragSample evaluate_shape(const ShapeParams& params, const FlowConfig& cfg) {
  DragSample sample{params, std::numeric_limits<double>::quiet_NaN(), false};
  try {
    const OccupancyMask mask = rasterize(build_boundary(params, 200), cfg.grid);
    const FlowResult flow = simulate(mask, cfg);
    // Lattice units throughout: frontal height in cells, unit depth.
    const double area = frontal_height(params) / cfg.grid.spacing;
    sample.drag = drag_coefficient(flow.drag_force, area, cfg);
    sample.converged = flow.converged && std::isfinite(sample.drag);
  } catch (const Error&) {
    sample.converged = false;
  }
  return sample;
}

void write_field_csv(std::ostream& os, const GridSpec& grid, const FlowResult& fields) {
  char buf[160];
  os << "x,y,u,v,rho\n";
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const std::size_t c = static_cast<std::size_t>(j) * grid.nx + i;
      std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g,%.9g\n", grid.center_x(i), grid.center_y(j),
                    fields.velocity_x[c], fields.velocity_y[c], fields.density[c]);
      os << buf;
    }
  }
}

}  // namespace dragforge
