#include "dragforge/constraints.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "dragforge/errors.hpp"

namespace dragforge {

namespace {

constexpr int kProbes = 64;
constexpr int kCurveSamples = 200;

double dot4(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
}

std::array<double, 4> theta_part(const std::array<double, kFeatureCount>& g) { return {g[0], g[1], g[2], g[3]}; }

// Clamps r + d into the box and reports the displacement actually taken.
std::pair<ShapeParams, std::array<double, 4>> clamped_move(const ShapeParams& r, const std::array<double, 4>& d,
                                                           const ThetaBox& box) {
  ShapeParams next = r;
  std::array<double, 4> taken{};
  for (int i = 0; i < 4; ++i) {
    next.theta[i] = box.clamp(r.theta[i] + d[i]);
    taken[i] = next.theta[i] - r.theta[i];
  }
  return {next, taken};
}

bool on_border(const GridSpec& g, int i, int j) { return i == 0 || j == 0 || i == g.nx - 1 || j == g.ny - 1; }

}  // namespace

void RequiredRegion::validate() const {
  if (mask.count() == 0) throw ArgumentError("required region: must contain at least one cell");
  if (!is_four_connected(mask)) throw ArgumentError("required region: must be 4-connected");
}

RequiredRegion region_from_rectangles(const std::vector<Rect>& rects, const GridSpec& grid) {
  grid.validate();
  RequiredRegion region{OccupancyMask(grid)};
  for (const Rect& r : rects) {
    if (!(r.w > 0.0) || !(r.h > 0.0)) throw ArgumentError("required region: rectangle w and h must be > 0");
    for (int j = 0; j < grid.ny; ++j) {
      const double cy = grid.center_y(j);
      if (cy < r.y || cy > r.y + r.h) continue;
      for (int i = 0; i < grid.nx; ++i) {
        const double cx = grid.center_x(i);
        if (cx >= r.x && cx <= r.x + r.w) region.mask.set(i, j, true);
      }
    }
  }
  return region;
}

OccupancyMask flood_fill(const OccupancyMask& mask, std::pair<int, int> seed) {
  const GridSpec& g = mask.grid;
  const auto [si, sj] = seed;
  if (si < 0 || sj < 0 || si >= g.nx || sj >= g.ny) throw ArgumentError("flood_fill: seed outside the grid");
  if (mask.at(si, sj)) throw ArgumentError("flood_fill: seed lies on a solid cell");

  OccupancyMask reached(g);
  std::vector<std::pair<int, int>> stack{seed};
  reached.set(si, sj, true);
  while (!stack.empty()) {
    const auto [i, j] = stack.back();
    stack.pop_back();
    const std::pair<int, int> nbrs[4] = {{i + 1, j}, {i - 1, j}, {i, j + 1}, {i, j - 1}};
    for (const auto& [ni, nj] : nbrs) {
      if (ni < 0 || nj < 0 || ni >= g.nx || nj >= g.ny) continue;
      if (mask.at(ni, nj) || reached.at(ni, nj)) continue;
      reached.set(ni, nj, true);
      stack.emplace_back(ni, nj);
    }
  }
  return reached;
}

int containment(const ShapeParams& candidate, const RequiredRegion& required, const GridSpec& grid) {
  if (!(required.mask.grid == grid)) throw ArgumentError("required region grid does not match the shape grid");

  OccupancyMask shape;
  try {
    shape = rasterize(build_boundary(candidate, kCurveSamples), grid);
  } catch (const Error&) {
    return 1;
  }

  for (std::size_t c = 0; c < required.mask.solid.size(); ++c) {
    if (required.mask.solid[c] && !shape.solid[c]) return 1;
  }

  // Outline: solid cells with a fluid 4-neighbour or on the grid edge.
  OccupancyMask outline(grid);
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      if (!shape.at(i, j)) continue;
      const bool edge = on_border(grid, i, j) || !shape.at(i + 1, j) || !shape.at(i - 1, j) ||
                        !shape.at(i, j + 1) || !shape.at(i, j - 1);
      if (edge) outline.set(i, j, true);
    }
  }

  OccupancyMask flooded(grid);
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      if (!required.mask.at(i, j) || outline.at(i, j) || flooded.at(i, j)) continue;
      const OccupancyMask fill = flood_fill(outline, {i, j});
      for (int fj = 0; fj < grid.ny; ++fj) {
        for (int fi = 0; fi < grid.nx; ++fi) {
          if (!fill.at(fi, fj)) continue;
          if (on_border(grid, fi, fj)) return 1;
          flooded.set(fi, fj, true);
        }
      }
    }
  }
  return 0;
}

SgldConfig SgldConfig::for_width(double width) {
  SgldConfig cfg;
  cfg.step_size = 1e-3 * width;
  cfg.noise_scale = 0.05 * width;
  return cfg;
}

void SgldConfig::validate() const {
  if (!(step_size > 0.0)) throw ArgumentError("constraint.sgld.step_size: must be > 0");
  if (!(noise_scale >= 0.0)) throw ArgumentError("constraint.sgld.noise_scale: must be >= 0");
  if (iterations < 1) throw ArgumentError("constraint.sgld.iterations: must be >= 1");
  if (max_resamples < 0) throw ArgumentError("constraint.sgld.max_resamples: must be >= 0");
}

SgldStep half_gaussian_step(const ShapeParams& r, const std::array<double, kFeatureCount>& grad, const SgldConfig& cfg,
                            std::mt19937_64& rng, const ThetaBox& box) {
  const std::array<double, 4> g = theta_part(grad);
  const std::array<double, 4> descent = {-g[0], -g[1], -g[2], -g[3]};
  std::normal_distribution<double> noise(0.0, 1.0);

  SgldStep out;
  for (int attempt = 0; attempt <= cfg.max_resamples; ++attempt) {
    std::array<double, 4> d{};
    for (int i = 0; i < 4; ++i) d[i] = cfg.step_size * descent[i] + cfg.noise_scale * noise(rng);
    auto [next, taken] = clamped_move(r, d, box);
    if (dot4(taken, descent) >= 0.0) {
      out.next = next;
      out.step = taken;
      out.redraws = attempt;
      return out;
    }
  }
  const std::array<double, 4> d = {cfg.step_size * descent[0], cfg.step_size * descent[1],
                                   cfg.step_size * descent[2], cfg.step_size * descent[3]};
  auto [next, taken] = clamped_move(r, d, box);
  out.next = next;
  out.step = taken;
  out.redraws = cfg.max_resamples;
  out.fell_back = true;
  return out;
}

ConstrainedResult constrained_minimize(const MlpModel& m, const RequiredRegion& required, double width,
                                       const SgldConfig& cfg, const GridSpec& grid) {
  cfg.validate();
  required.validate();
  if (!(required.mask.grid == grid)) throw ArgumentError("required region grid does not match the shape grid");
  const ThetaBox box = ThetaBox::for_width(width);

  const ShapeParams corner{{box.upper, box.upper, box.upper, box.upper}, width};
  if (containment(corner, required, grid) != 0) {
    throw InfeasibleConstraintError("no shape in the sampling box encloses the required region");
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uniform(box.lower, box.upper);
  ConstrainedResult result;
  result.start = corner;
  double start_pred = mlp_forward(m, corner);
  for (int k = 1; k < kProbes; ++k) {
    ShapeParams probe{{uniform(rng), uniform(rng), uniform(rng), uniform(rng)}, width};
    if (containment(probe, required, grid) != 0) continue;
    const double pred = mlp_forward(m, probe);
    if (pred < start_pred) {
      start_pred = pred;
      result.start = probe;
    }
  }

  ShapeParams current = result.start;
  result.params = current;
  result.predicted = start_pred;
  result.trajectory.reserve(static_cast<std::size_t>(cfg.iterations));
  result.best_history.reserve(static_cast<std::size_t>(cfg.iterations));

  for (int it = 1; it <= cfg.iterations; ++it) {
    const auto grad = mlp_input_gradient(m, current);
    TrajectoryEntry entry;
    entry.iteration = it;
    entry.grad = theta_part(grad);

    bool accepted = false;
    for (int attempt = 0; attempt < std::max(1, cfg.max_resamples); ++attempt) {
      const SgldStep st = half_gaussian_step(current, grad, cfg, rng, box);
      if (containment(st.next, required, grid) == 0) {
        entry.params = st.next;
        entry.step = st.step;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Halved pure-gradient steps until feasible; staying put is always feasible.
      entry.fell_back = true;
      entry.params = current;
      entry.step = {0.0, 0.0, 0.0, 0.0};
      for (double eta = cfg.step_size / 2.0;; eta /= 2.0) {
        const std::array<double, 4> d = {-eta * grad[0], -eta * grad[1], -eta * grad[2], -eta * grad[3]};
        auto [next, taken] = clamped_move(current, d, box);
        if (std::sqrt(dot4(taken, taken)) < 1e-12) break;
        if (containment(next, required, grid) == 0) {
          entry.params = next;
          entry.step = taken;
          break;
        }
      }
    }

    current = entry.params;
    entry.predicted = mlp_forward(m, current);
    entry.containment = 0;
    if (entry.predicted < result.predicted) {
      result.predicted = entry.predicted;
      result.params = current;
    }
    result.trajectory.push_back(entry);
    result.best_history.push_back(result.predicted);
  }
  return result;
}

}  // namespace dragforge
