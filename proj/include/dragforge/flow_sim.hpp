#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "dragforge/geometry.hpp"

namespace dragforge {

/// Inputs of one steady-state drag computation.
///
/// `viscosity` is the user-facing kinematic viscosity in nondimensional units
/// where the chord is 1 and the body moves at `reference_speed`. It sets the
/// chord Reynolds number Re = reference_speed / viscosity; the lattice
/// viscosity is then chosen so the lattice flow has the same Re, and the BGK
/// relaxation time is clamped to [kTauMin, kTauMax].
struct FlowConfig {
  double viscosity = 0.2;
  /// Inflow speed in lattice units (cells per step); keep below 0.15.
  double inflow_speed = 0.08;
  double density = 1.0;
  double reference_speed = 40.0;
  double chord = 1.0;
  GridSpec grid = GridSpec::desk();
  int max_steps = 40000;
  double drag_tolerance = 1e-4;
  int check_interval = 200;
  /// Consecutive checks that must satisfy the tolerance.
  int settle_checks = 3;

  void validate() const;
  /// One flow-through time (nx / inflow_speed steps); convergence is not
  /// declared earlier, so start-up transients cannot pass for a steady state.
  int warmup_steps() const;
  double reynolds() const { return reference_speed * chord / viscosity; }
  double lattice_viscosity() const;
  /// BGK relaxation time after clamping.
  double tau() const;
};

inline constexpr double kTauMin = 0.55;
inline constexpr double kTauMax = 1.5;

struct FlowResult {
  double drag_force = 0.0;
  double lift_force = 0.0;
  int steps_run = 0;
  bool converged = false;
  /// Per-cell velocity (zero inside the body), indexed like OccupancyMask.
  std::vector<double> velocity_x;
  std::vector<double> velocity_y;
  /// c_s^2 * rho per cell.
  std::vector<double> pressure_proxy;
  std::vector<double> density;
};

/// Snapshot callback for field dumps: (step, fields so far).
using FieldObserver = std::function<void(int step, const FlowResult& fields)>;

/// D2Q9 BGK lattice Boltzmann with halfway bounce-back on solid cells,
/// equilibrium inlet, zero-gradient outlet and free-slip top/bottom walls.
/// Force on the body comes from momentum exchange over solid links.
///
/// Throws GeometryError when the body touches the inlet/outlet columns and
/// DivergenceError when populations become non-finite.
FlowResult simulate(const OccupancyMask& mask, const FlowConfig& cfg, const FieldObserver& observer = {},
                    int observe_every = 0);

/// F_D / (A * rho * V^2 / 2). Throws ArgumentError when A, rho or V is not positive.
double drag_coefficient(double drag_force, double reference_area, const FlowConfig& cfg);

struct DragSample {
  ShapeParams params;
  double drag = 0.0;
  bool converged = false;

  /// Bitwise-style equality: NaN drags compare equal to each other.
  bool operator==(const DragSample& o) const;
};

/// build_boundary -> rasterize -> simulate -> drag_coefficient. Failures are
/// reported as a non-converged sample with NaN drag, never thrown.
DragSample evaluate_shape(const ShapeParams& params, const FlowConfig& cfg);

/// CSV `x,y,u,v,rho` per cell (cell centers).
void write_field_csv(std::ostream& os, const GridSpec& grid, const FlowResult& fields);

}  // namespace dragforge
