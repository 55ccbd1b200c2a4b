#pragma once

#include <array>
#include <span>
#include <vector>

#include "psd/raster.hpp"

namespace psd {

// One of the 8 symmetries of a square: a quarter-turn count followed by an
// optional reflection over the x-axis (row reversal on the raster grid, since
// row 0 is the top and +y points up).
struct DihedralElement {
  int rotation_quarter = 0;  // counter-clockwise quarter turns, 0..3
  bool reflect_x = false;

  bool operator==(const DihedralElement&) const = default;
};

// Enumeration order used for file naming (stem__g<k>): g0..g3 are the pure
// rotations 0/90/180/270, g4..g7 the same rotations followed by reflection.
std::array<DihedralElement, 8> dihedral_elements();

// Group composition: apply a, then b.
DihedralElement compose(const DihedralElement& a, const DihedralElement& b);

// Exact pixel permutation; no interpolation, same dimensions.
RasterImage apply_dihedral(const RasterImage& img, const DihedralElement& g);

// Transforms a pixel box by the same permutation applied to image pixels.
BoundingBox transform_box(const BoundingBox& box, int side, const DihedralElement& g);

struct AugmentedExample {
  DihedralElement element;
  RasterImage image;
  std::vector<BoundingBox> boxes;
};

// The x8 expansion: one output per dihedral element, boxes transformed
// alongside the image. Class labels are unaffected by construction.
std::vector<AugmentedExample> augment_example(const RasterImage& img,
                                              std::span<const BoundingBox> boxes);

}  // namespace psd
