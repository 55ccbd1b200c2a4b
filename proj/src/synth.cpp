#include "psd/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "psd/errors.hpp"
#include "psd/rng.hpp"

namespace psd {
namespace {

struct Segment {
  double ax, ay, bx, by;
};

struct Vec2 {
  double x, y;
};

constexpr double kRayEpsilon = 1e-9;

double cross(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

// Distance along a unit ray to a segment, or +inf when there is no hit.
double ray_segment(double px, double py, double dx, double dy, const Segment& s) {
  const double ex = s.bx - s.ax;
  const double ey = s.by - s.ay;
  const double denom = cross(dx, dy, ex, ey);
  if (std::abs(denom) < 1e-15) return kNoReturn;
  const double qx = s.ax - px;
  const double qy = s.ay - py;
  const double t = cross(qx, qy, ex, ey) / denom;
  const double u = cross(qx, qy, dx, dy) / denom;
  if (t <= kRayEpsilon || u < 0.0 || u > 1.0) return kNoReturn;
  return t;
}

std::vector<Segment> wall_segments(const WorldSpec& w) {
  const double hx = w.half_extent_x;
  const double hy = w.half_extent_y;
  return {{-hx, -hy, hx, -hy}, {hx, -hy, hx, hy}, {hx, hy, -hx, hy}, {-hx, hy, -hx, -hy}};
}

std::vector<Segment> pallet_segments(const PalletSpec& p) {
  // Three face blocks with two pocket gaps, centered along the face tangent.
  const double block = (p.width - 2.0 * p.pocket_width) / 3.0;
  const double ux = -std::sin(p.orientation);
  const double uy = std::cos(p.orientation);
  const double nx = std::cos(p.orientation);
  const double ny = std::sin(p.orientation);
  const double fx = p.x + 0.5 * p.depth * nx;  // front-edge midpoint
  const double fy = p.y + 0.5 * p.depth * ny;

  std::vector<Segment> segs;
  double offset = -0.5 * p.width;
  for (int i = 0; i < 3; ++i) {
    const double s0 = offset;
    const double s1 = offset + block;
    segs.push_back({fx + s0 * ux, fy + s0 * uy, fx + s1 * ux, fy + s1 * uy});
    offset = s1 + p.pocket_width;
  }
  return segs;
}

std::array<Vec2, 4> footprint_corners(const PalletSpec& p) {
  const double ux = -std::sin(p.orientation);
  const double uy = std::cos(p.orientation);
  const double nx = std::cos(p.orientation);
  const double ny = std::sin(p.orientation);
  std::array<Vec2, 4> corners;
  int k = 0;
  for (const double su : {-0.5, 0.5})
    for (const double sn : {-0.5, 0.5})
      corners[k++] = {p.x + su * p.width * ux + sn * p.depth * nx,
                      p.y + su * p.width * uy + sn * p.depth * ny};
  return corners;
}

void validate_world(const WorldSpec& w) {
  if (!(w.half_extent_x > 0.0) || !(w.half_extent_y > 0.0))
    throw DataError("room half-extents must be positive");
  if (w.beam_count < 8) throw DataError("beam_count must be >= 8");
  if (w.noise_sigma < 0.0) throw DataError("noise sigma must be >= 0");
  if (std::abs(w.sensor.x) >= w.half_extent_x || std::abs(w.sensor.y) >= w.half_extent_y)
    throw DataError("sensor outside room");
  if (w.pallet) {
    const PalletSpec& p = *w.pallet;
    if (!(p.width > 0.0) || !(p.depth > 0.0)) throw DataError("pallet extents must be positive");
    if (2.0 * p.pocket_width >= p.width) throw DataError("pockets wider than the pallet face");
    for (const Vec2& c : footprint_corners(p))
      if (std::abs(c.x) > w.half_extent_x || std::abs(c.y) > w.half_extent_y)
        throw DataError("pallet outside room");
  }
}

// Clipped bounding box of the footprint on the sensor-frame raster grid.
std::optional<BoundingBox> footprint_box(const PalletSpec& p, const Pose& sensor,
                                         const GridSpec& grid) {
  const double ch = std::cos(-sensor.heading);
  const double sh = std::sin(-sensor.heading);
  const double R = grid.extent_meters;
  const int side = grid.side_pixels;
  double min_row = 1e30, max_row = -1e30, min_col = 1e30, max_col = -1e30;
  for (const Vec2& c : footprint_corners(p)) {
    const double wx = c.x - sensor.x;
    const double wy = c.y - sensor.y;
    const double qx = ch * wx - sh * wy;
    const double qy = sh * wx + ch * wy;
    const double col = (qx + R) / (2.0 * R) * side;
    const double row = (R - qy) / (2.0 * R) * side;
    min_row = std::min(min_row, row);
    max_row = std::max(max_row, row);
    min_col = std::min(min_col, col);
    max_col = std::max(max_col, col);
  }
  int r0 = static_cast<int>(std::floor(min_row));
  int r1 = static_cast<int>(std::floor(max_row));
  int c0 = static_cast<int>(std::floor(min_col));
  int c1 = static_cast<int>(std::floor(max_col));
  r0 = std::max(r0, 0);
  c0 = std::max(c0, 0);
  r1 = std::min(r1, side - 1);
  c1 = std::min(c1, side - 1);
  if (r0 > r1 || c0 > c1) return std::nullopt;
  return BoundingBox{r0, c0, r1 - r0 + 1, c1 - c0 + 1};
}

}  // namespace

std::vector<double> trace_ranges(const WorldSpec& world, bool include_pallet) {
  validate_world(world);
  auto segments = wall_segments(world);
  if (include_pallet && world.pallet) {
    for (const Segment& s : pallet_segments(*world.pallet)) segments.push_back(s);
  }

  std::vector<double> ranges(static_cast<std::size_t>(world.beam_count));
  const double increment = 2.0 * std::numbers::pi / world.beam_count;
  const double angle_min = -std::numbers::pi;
  for (int i = 0; i < world.beam_count; ++i) {
    const double theta = world.sensor.heading + angle_min + i * increment;
    const double dx = std::cos(theta);
    const double dy = std::sin(theta);
    double best = kNoReturn;
    for (const Segment& s : segments)
      best = std::min(best, ray_segment(world.sensor.x, world.sensor.y, dx, dy, s));
    ranges[static_cast<std::size_t>(i)] = best;
  }
  return ranges;
}

SynthFrame raycast(const WorldSpec& world, const GridSpec& grid) {
  validate_world(world);
  const auto walls = wall_segments(world);
  std::vector<Segment> pallet;
  if (world.pallet) pallet = pallet_segments(*world.pallet);

  const double increment = 2.0 * std::numbers::pi / world.beam_count;
  const double angle_min = -std::numbers::pi;
  const double diagonal =
      2.0 * std::hypot(world.half_extent_x, world.half_extent_y);  // range clamp

  SynthFrame frame;
  frame.scan.angle_min = angle_min;
  frame.scan.angle_increment = increment;
  frame.scan.ranges.resize(static_cast<std::size_t>(world.beam_count));

  Rng rng(world.seed);
  bool pallet_seen = false;
  for (int i = 0; i < world.beam_count; ++i) {
    const double theta = world.sensor.heading + angle_min + i * increment;
    const double dx = std::cos(theta);
    const double dy = std::sin(theta);
    double wall_t = kNoReturn;
    for (const Segment& s : walls)
      wall_t = std::min(wall_t, ray_segment(world.sensor.x, world.sensor.y, dx, dy, s));
    double pallet_t = kNoReturn;
    for (const Segment& s : pallet)
      pallet_t = std::min(pallet_t, ray_segment(world.sensor.x, world.sensor.y, dx, dy, s));
    if (pallet_t < wall_t) pallet_seen = true;

    double r = std::min(wall_t, pallet_t);
    if (std::isfinite(r) && world.noise_sigma > 0.0) r += world.noise_sigma * rng.normal();
    frame.scan.ranges[static_cast<std::size_t>(i)] = std::clamp(r, 0.0, diagonal);
  }

  frame.label.has_pallet = pallet_seen;
  if (pallet_seen) {
    if (auto box = footprint_box(*world.pallet, world.sensor, grid)) frame.label.boxes.push_back(*box);
  }
  return frame;
}

std::vector<SynthFrame> generate_dataset(int n_pallet, int n_empty, const WorldSpec& base_world,
                                         const GridSpec& grid, std::uint64_t seed) {
  if (n_pallet < 0 || n_empty < 0) throw DataError("example counts must be >= 0");
  WorldSpec probe = base_world;
  probe.pallet.reset();
  validate_world(probe);

  const double margin = 0.5;
  const double sensor_hx = std::max(base_world.half_extent_x - margin, 0.1);
  const double sensor_hy = std::max(base_world.half_extent_y - margin, 0.1);
  const PalletSpec pallet_proto = base_world.pallet.value_or(PalletSpec{});
  const double R = grid.extent_meters;

  std::vector<SynthFrame> frames;
  frames.reserve(static_cast<std::size_t>(n_pallet) + static_cast<std::size_t>(n_empty));
  const int total = n_pallet + n_empty;
  for (int i = 0; i < total; ++i) {
    const bool positive = i < n_pallet;
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    WorldSpec world = base_world;
    world.pallet.reset();
    world.seed = rng.next_u64();

    for (int attempt = 0;; ++attempt) {
      if (attempt >= 1000) throw DataError("could not place a pallet for example " + std::to_string(i));
      world.sensor.x = rng.uniform(-sensor_hx, sensor_hx);
      world.sensor.y = rng.uniform(-sensor_hy, sensor_hy);
      world.sensor.heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
      if (!positive) break;

      PalletSpec p = pallet_proto;
      const double reach = std::max(p.width, p.depth);
      const double d = rng.uniform(0.8 * reach, 0.82 * R);
      const double bearing = rng.uniform(0.0, 2.0 * std::numbers::pi);
      p.x = world.sensor.x + d * std::cos(bearing);
      p.y = world.sensor.y + d * std::sin(bearing);
      p.orientation = rng.uniform(0.0, 2.0 * std::numbers::pi);

      // Keep the footprint inside the room and well inside the raster window.
      bool ok = true;
      const double ch = std::cos(-world.sensor.heading);
      const double sh = std::sin(-world.sensor.heading);
      for (const double su : {-0.5, 0.5})
        for (const double sn : {-0.5, 0.5}) {
          const double ux = -std::sin(p.orientation), uy = std::cos(p.orientation);
          const double nx = std::cos(p.orientation), ny = std::sin(p.orientation);
          const double wx = p.x + su * p.width * ux + sn * p.depth * nx;
          const double wy = p.y + su * p.width * uy + sn * p.depth * ny;
          if (std::abs(wx) > base_world.half_extent_x - 0.05 ||
              std::abs(wy) > base_world.half_extent_y - 0.05)
            ok = false;
          const double qx = ch * (wx - world.sensor.x) - sh * (wy - world.sensor.y);
          const double qy = sh * (wx - world.sensor.x) + ch * (wy - world.sensor.y);
          if (std::abs(qx) > 0.95 * R || std::abs(qy) > 0.95 * R) ok = false;
        }
      if (!ok) continue;

      world.pallet = p;
      WorldSpec noiseless = world;
      noiseless.noise_sigma = 0.0;
      if (raycast(noiseless, grid).label.has_pallet) break;
      world.pallet.reset();
    }

    SynthFrame frame = raycast(world, grid);
    frame.scan.timestamp = i;
    frames.push_back(std::move(frame));
  }
  return frames;
}

std::vector<SynthFrame> generate_sequence(const WorldSpec& world, std::span<const Pose> trajectory,
                                          const GridSpec& grid) {
  std::vector<SynthFrame> frames;
  frames.reserve(trajectory.size());
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    WorldSpec w = world;
    w.sensor = trajectory[i];
    w.seed = derive_seed(world.seed, i);
    SynthFrame frame = raycast(w, grid);  // validates pose inside room
    frame.scan.timestamp = static_cast<std::int64_t>(i);
    frames.push_back(std::move(frame));
  }
  return frames;
}

}  // namespace psd
