#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "psd/raster.hpp"
#include "psd/scan.hpp"

namespace psd {

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, world frame
};

// EUR-pallet-like target. The rangefinder sees the front face only: three
// collinear segments (blocks) separated by two pocket gaps, sitting on the
// front edge of the width x depth footprint. The ground-truth box covers the
// footprint.
struct PalletSpec {
  double x = 0.0;
  double y = 0.0;
  double orientation = 0.0;   // direction the face normal points, radians
  double width = 1.2;         // face length, meters
  double depth = 0.8;         // footprint depth, meters
  double pocket_width = 0.2;  // each of the two fork pockets, meters
};

// Rectangular room centered at the origin with a single optional pallet.
struct WorldSpec {
  double half_extent_x = 5.0;
  double half_extent_y = 5.0;
  std::optional<PalletSpec> pallet;
  Pose sensor;
  int beam_count = 360;       // >= 8, spread evenly over the full circle
  double noise_sigma = 0.01;  // Gaussian range noise, meters
  std::uint64_t seed = 0;
};

struct SynthFrame {
  Scan scan;
  ScanLabel label;  // boxes on the raster grid of the GridSpec used
};

// Per-beam nearest ray intersection with the room walls and pallet segments,
// plus Gaussian range noise. has_pallet is true iff at least one beam hits the
// pallet before a wall (judged on the noiseless geometry); the box is the
// footprint's bounding box in sensor-frame raster pixels, clipped to the
// image and dropped when it falls fully outside.
SynthFrame raycast(const WorldSpec& world, const GridSpec& grid);

// Noiseless variant of the per-beam geometry, exposed for oracle tests.
std::vector<double> trace_ranges(const WorldSpec& world, bool include_pallet);

// Randomized corpus with exact class counts: n_pallet positive examples
// followed by n_empty negative ones. Sensor poses (and pallet poses for
// positives) are sampled per example from a stream derived from seed; pallets
// are placed so the footprint stays inside both the room and the raster
// window and is actually hit by at least one beam.
std::vector<SynthFrame> generate_dataset(int n_pallet, int n_empty, const WorldSpec& base_world,
                                         const GridSpec& grid, std::uint64_t seed);

// One frame per pose, static pallet, frames ordered and timestamped 0..n-1.
std::vector<SynthFrame> generate_sequence(const WorldSpec& world, std::span<const Pose> trajectory,
                                          const GridSpec& grid);

}  // namespace psd
