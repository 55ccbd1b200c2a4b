#include "psd/augment.hpp"

#include <algorithm>

#include "psd/errors.hpp"

namespace psd {
namespace {

// Forward map of one pixel under g: rotate CCW, then optionally reverse rows.
std::pair<int, int> map_pixel(int row, int col, int side, const DihedralElement& g) {
  int r = row, c = col;
  for (int q = 0; q < (g.rotation_quarter & 3); ++q) {
    const int nr = side - 1 - c;
    c = r;
    r = nr;
  }
  if (g.reflect_x) r = side - 1 - r;
  return {r, c};
}

}  // namespace

std::array<DihedralElement, 8> dihedral_elements() {
  std::array<DihedralElement, 8> elems;
  for (int k = 0; k < 8; ++k) elems[k] = {k & 3, k >= 4};
  return elems;
}

DihedralElement compose(const DihedralElement& a, const DihedralElement& b) {
  if (!a.reflect_x) return {(a.rotation_quarter + b.rotation_quarter) & 3, b.reflect_x};
  return {(a.rotation_quarter - b.rotation_quarter + 4) & 3, !b.reflect_x};
}

RasterImage apply_dihedral(const RasterImage& img, const DihedralElement& g) {
  RasterImage out(img.side);
  for (int r = 0; r < img.side; ++r)
    for (int c = 0; c < img.side; ++c) {
      const auto [nr, nc] = map_pixel(r, c, img.side, g);
      out.at(nr, nc) = img.at(r, c);
    }
  return out;
}

BoundingBox transform_box(const BoundingBox& box, int side, const DihedralElement& g) {
  if (box.height <= 0 || box.width <= 0) throw DataError("box extent must be positive");
  if (box.row0 < 0 || box.col0 < 0 || box.row0 + box.height > side || box.col0 + box.width > side)
    throw DataError("box lies outside the image");

  // The image of an axis-aligned box is axis-aligned: take the pixel-corner span.
  const auto [r0, c0] = map_pixel(box.row0, box.col0, side, g);
  const auto [r1, c1] = map_pixel(box.row0 + box.height - 1, box.col0 + box.width - 1, side, g);
  BoundingBox out;
  out.row0 = std::min(r0, r1);
  out.col0 = std::min(c0, c1);
  out.height = std::abs(r1 - r0) + 1;
  out.width = std::abs(c1 - c0) + 1;
  return out;
}

std::vector<AugmentedExample> augment_example(const RasterImage& img,
                                              std::span<const BoundingBox> boxes) {
  std::vector<AugmentedExample> out;
  out.reserve(8);
  for (const DihedralElement& g : dihedral_elements()) {
    AugmentedExample ex;
    ex.element = g;
    ex.image = apply_dihedral(img, g);
    ex.boxes.reserve(boxes.size());
    for (const BoundingBox& box : boxes) ex.boxes.push_back(transform_box(box, img.side, g));
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace psd
