#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "dragforge/geometry.hpp"
#include "dragforge/surrogate.hpp"

namespace dragforge {

/// Cells the final shape has to enclose.
struct RequiredRegion {
  OccupancyMask mask;

  /// Non-empty and 4-connected, else ArgumentError.
  void validate() const;
};

struct Rect {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
};

/// Cells whose centers fall inside any rectangle.
RequiredRegion region_from_rectangles(const std::vector<Rect>& rects, const GridSpec& grid);

/// Cells 4-connected to `seed` through non-solid cells (the seed included).
/// Throws ArgumentError when the seed is outside the grid or solid.
OccupancyMask flood_fill(const OccupancyMask& mask, std::pair<int, int> seed);

/// 0 when the rasterized candidate covers every required cell and a flood
/// seeded inside the required region cannot leak past the candidate's
/// outline to the grid border; 1 otherwise.
int containment(const ShapeParams& candidate, const RequiredRegion& required, const GridSpec& grid);

struct SgldConfig {
  double step_size = 0.0;
  double noise_scale = 0.0;
  int iterations = 5000;
  std::uint64_t seed = 0;
  int max_resamples = 50;

  /// eta = 1e-3 w, sigma = 0.05 w.
  static SgldConfig for_width(double width);
  void validate() const;
};

struct SgldStep {
  ShapeParams next;
  /// Displacement actually taken over theta (after clamping).
  std::array<double, 4> step{};
  int redraws = 0;
  bool fell_back = false;
};

/// One noisy descent step over theta: d = -eta * grad + n with n ~ N(0, sigma^2 I).
/// Draws whose clamped displacement points more than 90 degrees away from
/// -grad are redrawn up to max_resamples times, then the pure gradient step
/// is used. Width is never perturbed.
SgldStep half_gaussian_step(const ShapeParams& r, const std::array<double, kFeatureCount>& grad, const SgldConfig& cfg,
                            std::mt19937_64& rng, const ThetaBox& box);

struct TrajectoryEntry {
  int iteration = 0;
  ShapeParams params;
  std::array<double, 4> step{};
  std::array<double, 4> grad{};
  double predicted = 0.0;
  int containment = 0;
  bool fell_back = false;
};

struct ConstrainedResult {
  ShapeParams params;
  double predicted = 0.0;
  ShapeParams start;
  std::vector<TrajectoryEntry> trajectory;
  /// Best feasible prediction after each iteration.
  std::vector<double> best_history;
};

/// SGLD descent of the model prediction restricted to shapes that enclose
/// `required`. Starts from the best feasible of 64 seeded probes (one of them
/// the box-maximum corner). Throws InfeasibleConstraintError when even the
/// box-maximum shape does not enclose the region.
ConstrainedResult constrained_minimize(const MlpModel& m, const RequiredRegion& required, double width,
                                       const SgldConfig& cfg, const GridSpec& grid);

}  // namespace dragforge
