#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "dragforge/errors.hpp"
#include "dragforge/geometry.hpp"

using namespace dragforge;

namespace {

ShapeParams random_params(std::mt19937_64& rng, double width) {
  std::uniform_real_distribution<double> u(0.25 * width, width);
  return {{u(rng), u(rng), u(rng), u(rng)}, width};
}

// Plain even-odd ray cast, written independently of the scanline rasterizer.
bool inside_even_odd(const BoundaryCurve& c, double x, double y) {
  bool in = false;
  for (std::size_t k = 0; k + 1 < c.points.size(); ++k) {
    const Point2 a = c.points[k];
    const Point2 b = c.points[k + 1];
    if ((a.y > y) != (b.y > y)) {
      const double xc = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (x < xc) in = !in;
    }
  }
  return in;
}

double signed_area(const BoundaryCurve& c) {
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < c.points.size(); ++k) {
    s += c.points[k].x * c.points[k + 1].y - c.points[k + 1].x * c.points[k].y;
  }
  return 0.5 * s;
}

}  // namespace

TEST_CASE("boundary passes through the control point (0.2, 0.09)") {
  const BoundaryCurve c = build_boundary({{0.09, 0.09, 0.09, 0.09}, 0.18});
  const bool hit = std::any_of(c.points.begin(), c.points.end(),
                               [](const Point2& p) { return p.x == 0.2 && std::abs(p.y - 0.09) <= 1e-12; });
  CHECK(hit);
}

TEST_CASE("interpolation holds to 1e-12 for random parameters") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const ShapeParams p = random_params(rng, 0.18);
    const BoundaryCurve c = build_boundary(p, 64);
    for (int k = 0; k < 4; ++k) {
      const double x = kControlStations[k];
      bool upper = false;
      bool lower = false;
      for (const Point2& q : c.points) {
        if (q.x != x) continue;
        upper = upper || std::abs(q.y - p.theta[k]) <= 1e-12;
        lower = lower || std::abs(q.y + p.theta[k]) <= 1e-12;
      }
      CHECK(upper);
      CHECK(lower);
    }
    const ProfileSpline s(p.theta);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(s(kControlStations[k]) - p.theta[k]) <= 1e-12);
  }
}

TEST_CASE("curve is closed, counterclockwise and mirror symmetric") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const BoundaryCurve c = build_boundary(random_params(rng, 0.2), 40);
    REQUIRE(c.points.size() > 3);
    CHECK(c.points.front() == c.points.back());
    CHECK(signed_area(c) > 0.0);
    std::set<std::pair<double, double>> pts;
    for (const Point2& q : c.points) pts.insert({q.x, q.y});
    for (const Point2& q : c.points) CHECK(pts.count({q.x, -q.y}) == 1);
  }
}

TEST_CASE("ordinates at the stations double when theta doubles") {
  const ShapeParams a{{0.05, 0.07, 0.06, 0.04}, 0.1};
  const ShapeParams b{{0.10, 0.14, 0.12, 0.08}, 0.2};
  const ProfileSpline sa(a.theta);
  const ProfileSpline sb(b.theta);
  for (double x : kControlStations) CHECK(sb(x) == doctest::Approx(2.0 * sa(x)).epsilon(1e-14));
  CHECK(frontal_height(b) == doctest::Approx(2.0 * frontal_height(a)).epsilon(1e-12));
}

TEST_CASE("build_boundary rejects degenerate input") {
  CHECK_THROWS_AS(build_boundary({{0.1, 0.0, 0.1, 0.1}, 0.18}), DegenerateShapeError);
  CHECK_THROWS_AS(build_boundary({{0.1, -0.1, 0.1, 0.1}, 0.18}), DegenerateShapeError);
  CHECK_THROWS_AS(build_boundary({{0.1, 0.1, 0.1, 0.1}, 0.18}, 15), ArgumentError);
}

TEST_CASE("validate_params names the offending field") {
  CHECK_NOTHROW(validate_params({{0.045, 0.18, 0.1, 0.1}, 0.18}));
  try {
    validate_params({{0.1, 0.1, 0.3, 0.1}, 0.18});
    FAIL("expected ArgumentError");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).rfind("theta[2]", 0) == 0);
  }
  CHECK_THROWS_AS(validate_params({{0.1, 0.1, 0.1, 0.1}, 0.0}), ArgumentError);
}

TEST_CASE("rasterized square matches the even-odd oracle") {
  const GridSpec g{30, 30, 0.1, -1.0, -1.0};
  const BoundaryCurve square{{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0, 0}}};
  const OccupancyMask m = rasterize(square, g);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      CHECK(m.at(i, j) == inside_even_odd(square, g.center_x(i), g.center_y(j)));
    }
  }
  CHECK(m.count() >= 100 - 40);
  CHECK(m.count() <= 100 + 44);
}

TEST_CASE("rasterized shapes agree with the even-odd oracle on the desk grid") {
  std::mt19937_64 rng(13);
  const GridSpec g = GridSpec::desk();
  for (int trial = 0; trial < 10; ++trial) {
    const ShapeParams p = random_params(rng, 0.18);
    const BoundaryCurve c = build_boundary(p, 200);
    const OccupancyMask m = rasterize(c, g);
    std::size_t mismatches = 0;
    for (int j = 0; j < g.ny; ++j) {
      for (int i = 0; i < g.nx; ++i) mismatches += m.at(i, j) != inside_even_odd(c, g.center_x(i), g.center_y(j));
    }
    CHECK(mismatches == 0);
    const auto [ci, cj] = g.cell_of(0.5, 0.0);
    CHECK(m.at(ci, cj));
    CHECK(is_four_connected(m));
  }
}

TEST_CASE("rasterize rejects curves reaching the grid border") {
  const GridSpec g{10, 10, 0.1, 0.0, 0.0};
  const BoundaryCurve touching{{{0, 0.2}, {0.5, 0.2}, {0.5, 0.6}, {0, 0.6}, {0, 0.2}}};
  CHECK_THROWS_AS(rasterize(touching, g), OutOfBoundsError);
  const BoundaryCurve big = build_boundary({{0.5, 0.5, 0.5, 0.5}, 0.5});
  CHECK_THROWS_AS(rasterize(big, GridSpec::desk()), OutOfBoundsError);
}

TEST_CASE("enclosed area examples") {
  OccupancyMask block(GridSpec{20, 20, 0.01, 0, 0});
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 10; ++i) block.set(i, j, true);
  CHECK(enclosed_area(block) == doctest::Approx(0.005).epsilon(1e-12));
  CHECK(enclosed_area(OccupancyMask(GridSpec{20, 20, 0.01, 0, 0})) == 0.0);
  OccupancyMask full(GridSpec{20, 20, 0.05, 0, 0});
  std::fill(full.solid.begin(), full.solid.end(), 1);
  CHECK(enclosed_area(full) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("frontal height matches dense sampling") {
  CHECK(frontal_height({{0.09, 0.09, 0.09, 0.09}, 0.18}) >= 0.18);
  std::mt19937_64 rng(14);
  std::vector<ShapeParams> cases = {{{0.045, 0.09, 0.09, 0.045}, 0.18}};
  for (int k = 0; k < 20; ++k) cases.push_back(random_params(rng, 0.18));
  for (const ShapeParams& p : cases) {
    const ProfileSpline s(p.theta);
    double best = 0.0;
    for (int k = 0; k <= 10000; ++k) best = std::max(best, s(k / 10000.0));
    const double h = frontal_height(p);
    CHECK(h >= 2.0 * best - 1e-15);
    CHECK(h == doctest::Approx(2.0 * best).epsilon(1e-6));
  }
}

TEST_CASE("solid cell count is monotone in theta") {
  std::mt19937_64 rng(15);
  const GridSpec g = GridSpec::desk();
  for (int trial = 0; trial < 40; ++trial) {
    ShapeParams a = random_params(rng, 0.18);
    ShapeParams b = random_params(rng, 0.18);
    for (int i = 0; i < 4; ++i) {
      if (a.theta[i] > b.theta[i]) std::swap(a.theta[i], b.theta[i]);
    }
    CHECK(rasterize(build_boundary(a, 200), g).count() <= rasterize(build_boundary(b, 200), g).count());
  }
}

TEST_CASE("area converges when the spacing is halved") {
  std::mt19937_64 rng(16);
  const GridSpec coarse = GridSpec::desk();
  const GridSpec fine{2 * coarse.nx, 2 * coarse.ny, coarse.spacing / 2, coarse.x0, coarse.y0};
  for (int trial = 0; trial < 20; ++trial) {
    const BoundaryCurve c = build_boundary(random_params(rng, 0.18), 200);
    const double a = enclosed_area(rasterize(c, coarse));
    const double b = enclosed_area(rasterize(c, fine));
    CHECK(std::abs(a - b) < 0.05 * b);
  }
}

TEST_CASE("four-connectivity detection") {
  OccupancyMask m(GridSpec{8, 8, 1.0, 0, 0});
  CHECK_FALSE(is_four_connected(m));
  m.set(1, 1, true);
  m.set(2, 1, true);
  CHECK(is_four_connected(m));
  m.set(3, 2, true);  // diagonal neighbour only
  CHECK_FALSE(is_four_connected(m));
}

TEST_CASE("mask PGM round trip and parse errors") {
  const GridSpec g = GridSpec::desk();
  const OccupancyMask m = rasterize(build_boundary({{0.1, 0.15, 0.12, 0.06}, 0.18}), g);
  std::stringstream ss;
  write_mask_pgm(ss, m);
  CHECK(read_mask_pgm(ss, g) == m);

  std::istringstream bad_header("P2\n8 8\n");
  CHECK_THROWS_AS(read_mask_pgm(bad_header, GridSpec{8, 8, 1, 0, 0}), ParseError);
  std::istringstream bad_row("P1\n8 8\n0 0 0 0 0 0 0 2\n");
  try {
    read_mask_pgm(bad_row, GridSpec{8, 8, 1, 0, 0});
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::stringstream other;
  write_mask_pgm(other, OccupancyMask(GridSpec{8, 8, 1, 0, 0}));
  CHECK_THROWS_AS(read_mask_pgm(other, g), ArgumentError);
}

TEST_CASE("curve CSV is closed with an x,y header") {
  const BoundaryCurve c = build_boundary({{0.1, 0.1, 0.1, 0.1}, 0.18}, 16);
  std::ostringstream os;
  write_curve_csv(os, c);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "x,y");
  std::vector<std::string> rows;
  while (std::getline(is, line)) rows.push_back(line);
  CHECK(rows.size() == c.points.size());
  CHECK(rows.front() == rows.back());
}
