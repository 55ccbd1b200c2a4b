#pragma once

#include <span>
#include <string>
#include <vector>

#include "psd/scan.hpp"

namespace psd {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Square sensor-centered window [-R, R]^2 mapped onto side_pixels^2 cells.
struct GridSpec {
  int side_pixels = 250;
  double extent_meters = 5.0;
};

// Square grayscale occupancy image; intensities in [0, 1], row 0 at the top.
struct RasterImage {
  int side = 0;
  std::vector<double> pixels;  // row-major, side * side entries

  RasterImage() = default;
  explicit RasterImage(int s) : side(s), pixels(static_cast<std::size_t>(s) * s, 0.0) {}

  double& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * side + col]; }
  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * side + col]; }
  bool operator==(const RasterImage&) const = default;
};

// One Cartesian endpoint per finite-range beam: x = r cos(theta), y = r sin(theta)
// with theta = angle_min + i * angle_increment. No-return beams are omitted.
std::vector<Point2> polar_to_cartesian(const Scan& scan);

// Binary endpoint occupancy: a cell is 1.0 iff at least one point lands in it.
// col = floor((x+R)/(2R) * side), row = floor((R-y)/(2R) * side), both clamped
// to the valid range; points strictly outside [-R, R]^2 are dropped.
RasterImage rasterize(std::span<const Point2> points, const GridSpec& spec);

// Block max-pooling onto target_side^2 cells: source pixel (r, c) belongs to
// bin (floor(r*t/s), floor(c*t/s)); a bin is occupied if any member is.
// Requires 2 <= target_side <= img.side.
RasterImage downscale(const RasterImage& img, int target_side);

// Nearest-neighbor / block-max resize per axis (shrink uses the downscale bin
// rule, grow replicates source pixels). Used for ROI crops.
RasterImage resize_occupancy(const RasterImage& img, int target_side);

// Crop a pixel box out of an image (box must lie inside the image). The crop
// is zero-padded to a square of side max(height, width) so it remains a valid
// RasterImage and keeps its aspect ratio through resize_occupancy.
RasterImage crop_square(const RasterImage& img, const BoundingBox& box);

// Transfers a pixel box between grid resolutions, consistent with the
// downscale bin rule (shrinking) and nearest-neighbor cover (growing).
BoundingBox scale_box(const BoundingBox& box, int from_side, int to_side);

// Plain PGM (P2) encoding for visual inspection; intensities scaled to 0..255.
std::string write_pgm(const RasterImage& img);
RasterImage parse_pgm(const std::string& text);

}  // namespace psd
