#include "psd/raster.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "psd/errors.hpp"

namespace psd {

std::vector<Point2> polar_to_cartesian(const Scan& scan) {
  validate_scan(scan);
  std::vector<Point2> points;
  points.reserve(scan.ranges.size());
  for (std::size_t i = 0; i < scan.ranges.size(); ++i) {
    const double r = scan.ranges[i];
    if (!std::isfinite(r)) continue;
    const double theta = scan.angle_min + static_cast<double>(i) * scan.angle_increment;
    points.push_back({r * std::cos(theta), r * std::sin(theta)});
  }
  return points;
}

RasterImage rasterize(std::span<const Point2> points, const GridSpec& spec) {
  if (spec.side_pixels < 2) throw DataError("GridSpec side_pixels must be >= 2");
  if (!(spec.extent_meters > 0.0)) throw DataError("GridSpec extent_meters must be > 0");

  const int side = spec.side_pixels;
  const double R = spec.extent_meters;
  RasterImage img(side);
  for (const Point2& p : points) {
    if (p.x < -R || p.x > R || p.y < -R || p.y > R) continue;
    int col = static_cast<int>(std::floor((p.x + R) / (2.0 * R) * side));
    int row = static_cast<int>(std::floor((R - p.y) / (2.0 * R) * side));
    col = std::clamp(col, 0, side - 1);
    row = std::clamp(row, 0, side - 1);
    img.at(row, col) = 1.0;
  }
  return img;
}

RasterImage downscale(const RasterImage& img, int target_side) {
  if (target_side < 2) throw DataError("downscale target_side must be >= 2");
  if (target_side > img.side) throw DataError("downscale target_side exceeds image side");

  const int s = img.side;
  const int t = target_side;
  RasterImage out(t);
  for (int r = 0; r < s; ++r) {
    const int tr = static_cast<int>((static_cast<long>(r) * t) / s);
    for (int c = 0; c < s; ++c) {
      const int tc = static_cast<int>((static_cast<long>(c) * t) / s);
      out.at(tr, tc) = std::max(out.at(tr, tc), img.at(r, c));
    }
  }
  return out;
}

RasterImage resize_occupancy(const RasterImage& img, int target_side) {
  if (target_side < 1) throw DataError("resize target_side must be >= 1");
  const int s = img.side;
  const int t = target_side;
  if (s == t) return img;
  RasterImage out(t);
  if (t <= s) return downscale(img, t);
  for (int r = 0; r < t; ++r) {
    const int sr = static_cast<int>((static_cast<long>(r) * s) / t);
    for (int c = 0; c < t; ++c) {
      const int sc = static_cast<int>((static_cast<long>(c) * s) / t);
      out.at(r, c) = img.at(sr, sc);
    }
  }
  return out;
}

RasterImage crop_square(const RasterImage& img, const BoundingBox& box) {
  if (box.height <= 0 || box.width <= 0) throw DataError("crop box extent must be positive");
  if (box.row0 < 0 || box.col0 < 0 || box.row0 + box.height > img.side ||
      box.col0 + box.width > img.side)
    throw DataError("crop box lies outside the image");
  const int side = std::max(box.height, box.width);
  RasterImage out(side);
  for (int r = 0; r < box.height; ++r)
    for (int c = 0; c < box.width; ++c) out.at(r, c) = img.at(box.row0 + r, box.col0 + c);
  return out;
}

BoundingBox scale_box(const BoundingBox& box, int from_side, int to_side) {
  if (from_side < 1 || to_side < 1) throw DataError("scale_box sides must be positive");
  if (box.height <= 0 || box.width <= 0) throw DataError("scale_box box extent must be positive");
  const long s = from_side;
  const long t = to_side;
  BoundingBox out;
  if (t <= s) {
    // Shrink: map end pixels through the downscale bin rule.
    out.row0 = static_cast<int>((box.row0 * t) / s);
    out.col0 = static_cast<int>((box.col0 * t) / s);
    out.height = static_cast<int>(((box.row0 + box.height - 1) * t) / s) - out.row0 + 1;
    out.width = static_cast<int>(((box.col0 + box.width - 1) * t) / s) - out.col0 + 1;
  } else {
    // Grow: cover every target pixel whose nearest-neighbor source lies in the box.
    const auto ceil_div = [](long a, long b) { return (a + b - 1) / b; };
    out.row0 = static_cast<int>(ceil_div(box.row0 * t, s));
    out.col0 = static_cast<int>(ceil_div(box.col0 * t, s));
    out.height = static_cast<int>(ceil_div((box.row0 + box.height) * t, s)) - out.row0;
    out.width = static_cast<int>(ceil_div((box.col0 + box.width) * t, s)) - out.col0;
  }
  return out;
}

std::string write_pgm(const RasterImage& img) {
  std::string out = "P2\n" + std::to_string(img.side) + ' ' + std::to_string(img.side) + "\n255\n";
  for (int r = 0; r < img.side; ++r) {
    for (int c = 0; c < img.side; ++c) {
      if (c) out += ' ';
      const int v = static_cast<int>(std::lround(std::clamp(img.at(r, c), 0.0, 1.0) * 255.0));
      out += std::to_string(v);
    }
    out += '\n';
  }
  return out;
}

RasterImage parse_pgm(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  in >> magic;
  if (magic != "P2") throw ParseError("line 1: expected PGM magic 'P2'");
  int width = 0, height = 0, maxval = 0;
  in >> width >> height >> maxval;
  if (!in || width < 1 || height < 1 || maxval < 1) throw ParseError("line 2: malformed PGM header");
  if (width != height) throw ParseError("line 2: raster images must be square");
  RasterImage img(width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      int v = 0;
      if (!(in >> v)) throw ParseError("line 4: PGM pixel data truncated");
      img.at(r, c) = static_cast<double>(v) / maxval;
    }
  return img;
}

}  // namespace psd
