#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "psd/augment.hpp"
#include "psd/errors.hpp"
#include "psd/raster.hpp"
#include "psd/rng.hpp"

using namespace psd;

namespace {

Scan make_scan(double angle_min, double increment, std::vector<double> ranges) {
  Scan scan;
  scan.angle_min = angle_min;
  scan.angle_increment = increment;
  scan.ranges = std::move(ranges);
  return scan;
}

int count_occupied(const RasterImage& img) {
  int n = 0;
  for (const double v : img.pixels) n += (v > 0.0);
  return n;
}

}  // namespace

TEST_CASE("polar_to_cartesian basic angles") {
  const Scan scan = make_scan(0.0, std::numbers::pi / 2, {1.0, 2.0});
  const auto points = polar_to_cartesian(scan);
  REQUIRE(points.size() == 2);
  CHECK(points[0].x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(points[0].y == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(points[1].x) < 1e-12);
  CHECK(points[1].y == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("polar_to_cartesian drops no-return beams") {
  const Scan scan = make_scan(0.0, 0.1, {1.0, kNoReturn, 2.0});
  CHECK(polar_to_cartesian(scan).size() == 2);
}

TEST_CASE("a full circle of constant ranges lands on a circle") {
  std::vector<double> ranges(360, 3.0);
  const Scan scan = make_scan(-std::numbers::pi, 2.0 * std::numbers::pi / 360, std::move(ranges));
  for (const Point2& p : polar_to_cartesian(scan))
    CHECK(std::hypot(p.x, p.y) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("rasterize maps the origin to the center cell") {
  const Point2 origin{0.0, 0.0};
  const RasterImage img = rasterize(std::span(&origin, 1), {250, 5.0});
  CHECK(count_occupied(img) == 1);
  CHECK(img.at(125, 125) == 1.0);
}

TEST_CASE("rasterize drops points outside the window and handles empty input") {
  const GridSpec spec{250, 5.0};
  CHECK(count_occupied(rasterize({}, spec)) == 0);
  const Point2 outside{5.0 + 1e-9, 0.0};
  CHECK(count_occupied(rasterize(std::span(&outside, 1), spec)) == 0);
  const Point2 boundary{5.0, 0.0};  // inclusive edge clamps into the last column
  const RasterImage img = rasterize(std::span(&boundary, 1), spec);
  CHECK(count_occupied(img) == 1);
  CHECK(img.at(125, 249) == 1.0);
}

TEST_CASE("adding a point never turns a pixel off") {
  Rng rng(11);
  const GridSpec spec{64, 4.0};
  std::vector<Point2> points;
  RasterImage prev = rasterize(points, spec);
  for (int i = 0; i < 200; ++i) {
    points.push_back({rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)});
    const RasterImage next = rasterize(points, spec);
    for (std::size_t p = 0; p < next.pixels.size(); ++p) CHECK(next.pixels[p] >= prev.pixels[p]);
    prev = next;
  }
}

TEST_CASE("rasterizing rotated points equals rotating the raster") {
  // Points jittered away from cell boundaries by more than half a cell.
  Rng rng(3);
  const GridSpec spec{40, 4.0};
  const double cell = 2.0 * spec.extent_meters / spec.side_pixels;
  std::vector<Point2> points;
  for (int i = 0; i < 120; ++i) {
    const int gx = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.side_pixels)));
    const int gy = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.side_pixels)));
    points.push_back({(-spec.extent_meters) + (gx + 0.5) * cell,
                      (-spec.extent_meters) + (gy + 0.5) * cell});
  }
  std::vector<Point2> rotated;
  for (const Point2& p : points) rotated.push_back({-p.y, p.x});

  const RasterImage direct = rasterize(rotated, spec);
  const RasterImage via_image =
      apply_dihedral(rasterize(points, spec), DihedralElement{1, false});
  CHECK(direct == via_image);
}

TEST_CASE("downscale reaches the network input size") {
  RasterImage img(250);
  img.at(0, 0) = 1.0;
  const RasterImage small = downscale(img, 32);
  CHECK(small.side == 32);
}

TEST_CASE("downscale maps each occupied source pixel to exactly one target pixel") {
  // Brute-force bin membership oracle over every source cell.
  const int s = 25, t = 7;
  for (int r = 0; r < s; ++r)
    for (int c = 0; c < s; ++c) {
      RasterImage img(s);
      img.at(r, c) = 1.0;
      const RasterImage small = downscale(img, t);
      CHECK(count_occupied(small) == 1);
      int hits = 0;
      for (int tr = 0; tr < t; ++tr)
        for (int tc = 0; tc < t; ++tc)
          if (small.at(tr, tc) > 0.0) {
            ++hits;
            CHECK(tr == r * t / s);
            CHECK(tc == c * t / s);
          }
      CHECK(hits == 1);
    }
}

TEST_CASE("downscale preserves emptiness and non-emptiness") {
  RasterImage empty(100);
  CHECK(count_occupied(downscale(empty, 32)) == 0);

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    RasterImage img(100);
    const int n = 1 + static_cast<int>(rng.below(40));
    for (int i = 0; i < n; ++i)
      img.at(static_cast<int>(rng.below(100)), static_cast<int>(rng.below(100))) = 1.0;
    CHECK(count_occupied(downscale(img, 32)) > 0);
  }
}

TEST_CASE("downscale rejects bad targets") {
  RasterImage img(50);
  CHECK_THROWS_AS(downscale(img, 1), DataError);
  CHECK_THROWS_AS(downscale(img, 51), DataError);
}

TEST_CASE("scale_box stays consistent with pixel bin mapping") {
  // One-pixel boxes land exactly on the pixel's bin.
  const int s = 250, t = 32;
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int r = static_cast<int>(rng.below(s));
    const int c = static_cast<int>(rng.below(s));
    const BoundingBox box{r, c, 1, 1};
    const BoundingBox scaled = scale_box(box, s, t);
    CHECK(scaled.row0 == r * t / s);
    CHECK(scaled.col0 == c * t / s);
    CHECK(scaled.height >= 1);
    CHECK(scaled.width >= 1);
  }

  // Upscale covers exactly the target pixels whose nearest source is in the box.
  const BoundingBox small{3, 5, 4, 2};
  const BoundingBox big = scale_box(small, 32, 250);
  for (int r = 0; r < 250; ++r) {
    const bool inside_rows = r >= big.row0 && r < big.row0 + big.height;
    CHECK(inside_rows == (r * 32 / 250 >= small.row0 && r * 32 / 250 < small.row0 + small.height));
  }
}

TEST_CASE("pgm round-trips occupancy images") {
  RasterImage img(8);
  img.at(1, 2) = 1.0;
  img.at(7, 7) = 1.0;
  const std::string text = write_pgm(img);
  CHECK(text.substr(0, 3) == "P2\n");
  const RasterImage back = parse_pgm(text);
  CHECK(back == img);
}
