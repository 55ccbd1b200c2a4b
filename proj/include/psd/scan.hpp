#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace psd {

// Beam with no endpoint (out of range); serialized as the token "inf".
inline constexpr double kNoReturn = std::numeric_limits<double>::infinity();

// One 2D rangefinder sweep. Beam i points at angle_min + i * angle_increment
// (radians, sensor frame); ranges are meters. Immutable after construction.
struct Scan {
  double angle_min = 0.0;
  double angle_increment = 0.0;  // > 0
  std::vector<double> ranges;    // non-empty; finite entries >= 0, or kNoReturn
  std::int64_t timestamp = 0;    // monotonic frame index, assigned by the loader
};

// Axis-aligned pixel box; row0/col0 inclusive, height/width > 0.
struct BoundingBox {
  int row0 = 0;
  int col0 = 0;
  int height = 0;
  int width = 0;

  long area() const { return static_cast<long>(height) * width; }
  bool operator==(const BoundingBox&) const = default;
};

// Ground-truth annotation for one scan. has_pallet == false implies no boxes.
struct ScanLabel {
  bool has_pallet = false;
  std::vector<BoundingBox> boxes;
};

// Disjoint train/test index partition of [0, n).
struct DatasetSplit {
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

// Throws DataError if any Scan invariant is violated.
void validate_scan(const Scan& scan);

// Scan file format (.scan), line oriented:
//   angle_min <float-rad>
//   angle_increment <float-rad>
//   count <int>
//   <count space-separated ranges in meters, "inf" for no return>
// parse_scan accepts arbitrary whitespace and ranges wrapped over several
// lines; write_scan emits the canonical single-spaced form with shortest
// round-trip float formatting, so parse/write compose to the identity.
Scan parse_scan(std::istream& in);
Scan parse_scan(const std::string& text);
std::string write_scan(const Scan& scan);

// Label file format (.label):
//   has_pallet 0|1
//   box <row0> <col0> <height> <width>     (zero or more lines)
ScanLabel parse_label(std::istream& in);
ScanLabel parse_label(const std::string& text);
std::string write_label(const ScanLabel& label);

// Seeded 70/30-style split: shuffles [0, n) with the documented PRNG and takes
// the first floor(train_fraction * n) indices as the training side.
DatasetSplit split_dataset(std::size_t n, double train_fraction, std::uint64_t seed);

}  // namespace psd
