#include "dragforge/geometry.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <istream>
#include <ostream>
#include <queue>
#include <sstream>

#include "dragforge/errors.hpp"

namespace dragforge {

bool ThetaBox::contains(const ShapeParams& p) const {
  return std::all_of(p.theta.begin(), p.theta.end(), [&](double t) { return t >= lower && t <= upper; });
}

void validate_params(const ShapeParams& p, double lower_factor) {
  if (!(p.width > 0.0) || !std::isfinite(p.width)) {
    throw ArgumentError("width: must be a finite value > 0");
  }
  const ThetaBox box = ThetaBox::for_width(p.width, lower_factor);
  for (std::size_t i = 0; i < p.theta.size(); ++i) {
    const double t = p.theta[i];
    if (!std::isfinite(t) || t < box.lower || t > box.upper) {
      std::ostringstream msg;
      msg << "theta[" << i << "]: " << t << " outside sampling box [" << box.lower << ", " << box.upper << "]";
      throw ArgumentError(msg.str());
    }
  }
}

// Cell centers are computed relative to the grid midline so that a grid
// centered on an axis yields exactly mirrored center coordinates.
static double symmetric_center(double origin, int n, int k, double spacing) {
  const double mid = origin + n * spacing / 2.0;
  return mid + (2.0 * k + 1.0 - n) * (spacing / 2.0);
}

double GridSpec::center_x(int i) const { return symmetric_center(x0, nx, i, spacing); }
double GridSpec::center_y(int j) const { return symmetric_center(y0, ny, j, spacing); }

std::pair<int, int> GridSpec::cell_of(double x, double y) const {
  const double fi = std::floor((x - x0) / spacing);
  const double fj = std::floor((y - y0) / spacing);
  if (fi < 0 || fj < 0 || fi >= nx || fj >= ny) return {-1, -1};
  return {static_cast<int>(fi), static_cast<int>(fj)};
}

void GridSpec::validate() const {
  if (nx < 8 || ny < 8) throw ArgumentError("grid: nx and ny must be >= 8");
  if (!(spacing > 0.0) || !std::isfinite(spacing)) throw ArgumentError("grid.spacing: must be > 0");
  if (!std::isfinite(x0) || !std::isfinite(y0)) throw ArgumentError("grid.origin: must be finite");
}

GridSpec GridSpec::desk() { return GridSpec{160, 80, 0.01, -0.25, -0.4}; }

std::size_t OccupancyMask::count() const {
  return static_cast<std::size_t>(std::count(solid.begin(), solid.end(), std::uint8_t{1}));
}

ProfileSpline::ProfileSpline(const std::array<double, 4>& theta) {
  xs_ = {0.0, kControlStations[0], kControlStations[1], kControlStations[2], kControlStations[3], 1.0};
  ys_ = {0.0, theta[0], theta[1], theta[2], theta[3], 0.0};

  // Natural end conditions: second derivative zero at both ends. Interior
  // second derivatives solve a symmetric tridiagonal system (Thomas algorithm).
  constexpr int n = 6;
  std::array<double, n> diag{}, rhs{}, upper{};
  for (int i = 1; i < n - 1; ++i) {
    const double h0 = xs_[i] - xs_[i - 1];
    const double h1 = xs_[i + 1] - xs_[i];
    diag[i] = 2.0 * (h0 + h1);
    upper[i] = h1;
    rhs[i] = 6.0 * ((ys_[i + 1] - ys_[i]) / h1 - (ys_[i] - ys_[i - 1]) / h0);
  }
  for (int i = 2; i < n - 1; ++i) {
    const double lower = xs_[i] - xs_[i - 1];
    const double m = lower / diag[i - 1];
    diag[i] -= m * upper[i - 1];
    rhs[i] -= m * rhs[i - 1];
  }
  second_.fill(0.0);
  for (int i = n - 2; i >= 1; --i) {
    second_[i] = (rhs[i] - (i + 1 < n - 1 ? upper[i] * second_[i + 1] : 0.0)) / diag[i];
  }
}

double ProfileSpline::raw(int s, double x) const {
  const double h = xs_[s + 1] - xs_[s];
  const double a = xs_[s + 1] - x;
  const double b = x - xs_[s];
  return second_[s] * a * a * a / (6.0 * h) + second_[s + 1] * b * b * b / (6.0 * h) +
         (ys_[s] - second_[s] * h * h / 6.0) * a / h + (ys_[s + 1] - second_[s + 1] * h * h / 6.0) * b / h;
}

double ProfileSpline::operator()(double x) const {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  int s = 0;
  while (s < 4 && x > xs_[s + 1]) ++s;
  return std::max(0.0, raw(s, x));
}

double ProfileSpline::max_height() const {
  double best = 0.0;
  for (int s = 0; s < 5; ++s) {
    const double h = xs_[s + 1] - xs_[s];
    best = std::max({best, raw(s, xs_[s]), raw(s, xs_[s + 1])});
    // S'(t) = A t^2 + B t + C with t = x - x_s.
    const double slope = (ys_[s + 1] - ys_[s]) / h - (second_[s + 1] - second_[s]) * h / 6.0;
    const double qa = (second_[s + 1] - second_[s]) / (2.0 * h);
    const double qb = second_[s];
    const double qc = -second_[s] * h / 2.0 + slope;
    auto probe = [&](double t) {
      if (t > 0.0 && t < h) best = std::max(best, raw(s, xs_[s] + t));
    };
    if (std::abs(qa) < 1e-300) {
      if (qb != 0.0) probe(-qc / qb);
      continue;
    }
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc < 0.0) continue;
    const double root = std::sqrt(disc);
    probe((-qb + root) / (2.0 * qa));
    probe((-qb - root) / (2.0 * qa));
  }
  return best;
}

BoundaryCurve build_boundary(const ShapeParams& params, int samples_per_side) {
  if (samples_per_side < 16) throw ArgumentError("samples_per_side: must be >= 16");
  for (std::size_t i = 0; i < params.theta.size(); ++i) {
    if (!(params.theta[i] > 0.0)) {
      throw DegenerateShapeError("theta[" + std::to_string(i) + "] must be > 0 for a closed shape");
    }
  }
  const ProfileSpline spline(params.theta);
  const std::array<double, 6> knots = {0.0, kControlStations[0], kControlStations[1],
                                       kControlStations[2], kControlStations[3], 1.0};
  // Every knot is an exact sample so the curve interpolates the control points.
  const int per_segment = (samples_per_side + 4) / 5;
  std::vector<double> xs;
  xs.reserve(5 * per_segment + 1);
  for (int s = 0; s < 5; ++s) {
    for (int k = 0; k < per_segment; ++k) {
      xs.push_back(k == 0 ? knots[s] : knots[s] + (knots[s + 1] - knots[s]) * k / per_segment);
    }
  }
  xs.push_back(1.0);

  std::vector<double> ys(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    ys[k] = spline(xs[k]);
  }
  for (std::size_t s = 1; s < 5; ++s) {
    ys[s * per_segment] = params.theta[s - 1];
  }

  BoundaryCurve curve;
  curve.points.reserve(2 * xs.size());
  // Lower surface left to right, then upper surface right to left: counterclockwise.
  for (std::size_t k = 0; k < xs.size(); ++k) curve.points.push_back({xs[k], -ys[k]});
  for (std::size_t k = xs.size() - 1; k-- > 0;) curve.points.push_back({xs[k], ys[k]});
  curve.points.front() = {0.0, 0.0};
  curve.points.back() = {0.0, 0.0};
  return curve;
}

OccupancyMask rasterize(const BoundaryCurve& curve, const GridSpec& grid) {
  grid.validate();
  const auto& pts = curve.points;
  if (pts.size() < 4 || !(pts.front() == pts.back())) {
    throw ArgumentError("curve: must be closed with at least three distinct vertices");
  }
  for (const Point2& p : pts) {
    if (!(p.x > grid.x0 && p.x < grid.x_max() && p.y > grid.y0 && p.y < grid.y_max())) {
      throw OutOfBoundsError("curve extends to or beyond the grid extent");
    }
  }

  OccupancyMask mask(grid);
  std::vector<double> crossings;
  for (int j = 0; j < grid.ny; ++j) {
    const double cy = grid.center_y(j);
    crossings.clear();
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
      Point2 p = pts[k];
      Point2 q = pts[k + 1];
      if ((p.y > cy) == (q.y > cy)) continue;
      if (q.x < p.x) std::swap(p, q);
      crossings.push_back(p.x + (cy - p.y) * (q.x - p.x) / (q.y - p.y));
    }
    std::sort(crossings.begin(), crossings.end());
    // Ray toward +x from a center: inside iff the center lies in [c_2k, c_2k+1).
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      int i = std::max(0, static_cast<int>(std::floor((crossings[k] - grid.x0) / grid.spacing)) - 1);
      for (; i < grid.nx; ++i) {
        const double cx = grid.center_x(i);
        if (cx >= crossings[k + 1]) break;
        if (cx >= crossings[k]) mask.set(i, j, true);
      }
    }
  }
  return mask;
}

double enclosed_area(const OccupancyMask& mask) {
  return static_cast<double>(mask.count()) * mask.grid.spacing * mask.grid.spacing;
}

double frontal_height(const ShapeParams& params) { return 2.0 * ProfileSpline(params.theta).max_height(); }

bool is_four_connected(const OccupancyMask& mask) {
  const auto& g = mask.grid;
  const std::size_t total = mask.count();
  if (total == 0) return false;
  const auto first = static_cast<std::size_t>(
      std::find(mask.solid.begin(), mask.solid.end(), std::uint8_t{1}) - mask.solid.begin());
  std::vector<std::uint8_t> seen(mask.solid.size(), 0);
  std::queue<std::size_t> frontier;
  frontier.push(first);
  seen[first] = 1;
  std::size_t reached = 0;
  while (!frontier.empty()) {
    const std::size_t c = frontier.front();
    frontier.pop();
    ++reached;
    const int i = static_cast<int>(c % g.nx);
    const int j = static_cast<int>(c / g.nx);
    const std::array<std::pair<int, int>, 4> nbrs = {{{i + 1, j}, {i - 1, j}, {i, j + 1}, {i, j - 1}}};
    for (auto [ni, nj] : nbrs) {
      if (ni < 0 || nj < 0 || ni >= g.nx || nj >= g.ny) continue;
      const std::size_t n = mask.index(ni, nj);
      if (mask.solid[n] && !seen[n]) {
        seen[n] = 1;
        frontier.push(n);
      }
    }
  }
  return reached == total;
}

void write_curve_csv(std::ostream& os, const BoundaryCurve& curve) {
  char buf[64];
  os << "x,y\n";
  for (const Point2& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.x, p.y + 0.0);
    os << buf;
  }
}

void write_mask_pgm(std::ostream& os, const OccupancyMask& mask) {
  const auto& g = mask.grid;
  char buf[160];
  std::snprintf(buf, sizeof buf, "# spacing=%.17g origin=%.17g,%.17g\n", g.spacing, g.x0, g.y0);
  os << "P1\n" << buf << g.nx << ' ' << g.ny << '\n';
  for (int j = g.ny - 1; j >= 0; --j) {
    for (int i = 0; i < g.nx; ++i) {
      if (i) os << ' ';
      os << (mask.at(i, j) ? '1' : '0');
    }
    os << '\n';
  }
}

OccupancyMask read_mask_pgm(std::istream& is, const GridSpec& expected) {
  std::size_t line_no = 0;
  std::string line;
  auto next_content_line = [&](bool allow_comment_grid, GridSpec* g) -> bool {
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line[0] == '#') {
        double h = 0, x0 = 0, y0 = 0;
        if (allow_comment_grid && std::sscanf(line.c_str(), "# spacing=%lf origin=%lf,%lf", &h, &x0, &y0) == 3) {
          g->spacing = h;
          g->x0 = x0;
          g->y0 = y0;
        }
        continue;
      }
      return true;
    }
    return false;
  };

  GridSpec g = expected;
  if (!next_content_line(false, nullptr) || line != "P1") throw ParseError("expected P1 header", line_no);
  if (!next_content_line(true, &g)) throw ParseError("missing dimensions", line_no);
  {
    std::istringstream dims(line);
    if (!(dims >> g.nx >> g.ny)) throw ParseError("malformed dimensions", line_no);
  }
  if (!(g == expected)) throw ArgumentError("mask grid does not match the configured grid");

  OccupancyMask mask(g);
  for (int j = g.ny - 1; j >= 0; --j) {
    if (!next_content_line(false, nullptr)) throw ParseError("missing raster row", line_no);
    std::istringstream row(line);
    for (int i = 0; i < g.nx; ++i) {
      int v = -1;
      if (!(row >> v) || (v != 0 && v != 1)) throw ParseError("expected " + std::to_string(g.nx) + " 0/1 values", line_no);
      mask.set(i, j, v == 1);
    }
    int extra = 0;
    if (row >> extra) throw ParseError("too many values in raster row", line_no);
  }
  return mask;
}

}  // namespace dragforge
