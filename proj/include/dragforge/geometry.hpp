#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace dragforge {

/// Lower edge of the sampling box as a fraction of the case width.
inline constexpr double kThetaLowerFactor = 0.25;

/// Chord stations (fraction of chord) of the four control heights.
inline constexpr std::array<double, 4> kControlStations = {0.2, 0.4, 0.6, 0.8};

/// Four upper-surface control heights plus the per-case width scale.
struct ShapeParams {
  std::array<double, 4> theta{};
  double width = 0.0;

  bool operator==(const ShapeParams&) const = default;

  /// The surrogate's 5-dimensional input point (theta1..theta4, width).
  std::array<double, 5> as_features() const {
    return {theta[0], theta[1], theta[2], theta[3], width};
  }
};

/// Axis-aligned box [lower, upper]^4 over theta.
struct ThetaBox {
  double lower = 0.0;
  double upper = 0.0;

  static ThetaBox for_width(double width, double lower_factor = kThetaLowerFactor) {
    return {lower_factor * width, width};
  }
  double clamp(double v) const { return v < lower ? lower : (v > upper ? upper : v); }
  bool contains(const ShapeParams& p) const;
};

/// Throws ArgumentError naming the offending field ("theta[2]", "width") when
/// `p` lies outside the sampling box for its width.
void validate_params(const ShapeParams& p, double lower_factor = kThetaLowerFactor);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

/// Closed counterclockwise polyline; front() == back().
struct BoundaryCurve {
  std::vector<Point2> points;
};

struct GridSpec {
  int nx = 0;
  int ny = 0;
  double spacing = 0.0;
  double x0 = 0.0;
  double y0 = 0.0;

  bool operator==(const GridSpec&) const = default;

  std::size_t cell_count() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  /// Cell centers, mirrored exactly about the grid midlines.
  double center_x(int i) const;
  double center_y(int j) const;
  double x_max() const { return x0 + nx * spacing; }
  double y_max() const { return y0 + ny * spacing; }
  /// Cell whose extent contains (x, y), or {-1, -1} when outside.
  std::pair<int, int> cell_of(double x, double y) const;
  void validate() const;

  /// The 160x80 desk grid: chord [0, 1] at 100 cells, centered on the x-axis.
  static GridSpec desk();
};

/// Boolean raster of a shape; cell (i, j) is stored at j * nx + i.
struct OccupancyMask {
  GridSpec grid;
  std::vector<std::uint8_t> solid;

  OccupancyMask() = default;
  explicit OccupancyMask(const GridSpec& g) : grid(g), solid(g.cell_count(), 0) {}

  bool at(int i, int j) const { return solid[index(i, j)] != 0; }
  void set(int i, int j, bool v) { solid[index(i, j)] = v ? 1 : 0; }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(grid.nx) + static_cast<std::size_t>(i);
  }
  std::size_t count() const;
  bool operator==(const OccupancyMask&) const = default;
};

/// Natural cubic spline through (0,0), (0.2,t1), ..., (0.8,t4), (1,0).
class ProfileSpline {
 public:
  explicit ProfileSpline(const std::array<double, 4>& theta);

  /// Spline ordinate clamped below at zero; x outside [0, 1] gives 0.
  double operator()(double x) const;
  /// Exact maximum of the clamped ordinate over [0, 1].
  double max_height() const;

 private:
  double raw(int segment, double x) const;

  std::array<double, 6> xs_{};
  std::array<double, 6> ys_{};
  std::array<double, 6> second_{};
};

BoundaryCurve build_boundary(const ShapeParams& params, int samples_per_side = 100);

OccupancyMask rasterize(const BoundaryCurve& curve, const GridSpec& grid);

double enclosed_area(const OccupancyMask& mask);

/// Total thickness presented to the flow: twice the maximum profile height.
double frontal_height(const ShapeParams& params);

bool is_four_connected(const OccupancyMask& mask);

void write_curve_csv(std::ostream& os, const BoundaryCurve& curve);

/// PBM-style text raster: `P1`, a grid comment, `nx ny`, then rows from top (j = ny-1) down.
void write_mask_pgm(std::ostream& os, const OccupancyMask& mask);

/// Reads the format written by write_mask_pgm. The grid comment, when present,
/// must agree with `expected`; when absent, `expected` supplies spacing and origin.
OccupancyMask read_mask_pgm(std::istream& is, const GridSpec& expected);

}  // namespace dragforge
