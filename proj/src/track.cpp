#include "psd/track.hpp"

#include <algorithm>
#include <cmath>

#include "psd/errors.hpp"

namespace psd {
namespace {

struct Candidate {
  double distance;
  std::size_t track;
  std::size_t detection;
};

double centroid_row(const BoundingBox& b) { return b.row0 + b.height / 2.0; }
double centroid_col(const BoundingBox& b) { return b.col0 + b.width / 2.0; }

}  // namespace

std::vector<Track> associate(std::vector<Track> tracks, std::span<const Detection> detections,
                             double gate, std::int64_t frame) {
  if (!(gate > 0.0)) throw DataError("association gate must be > 0");

  std::vector<Candidate> candidates;
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    if (tracks[t].retired || tracks[t].points.empty()) continue;
    const TrackPoint& last = tracks[t].points.back();
    for (std::size_t d = 0; d < detections.size(); ++d) {
      const double dr = centroid_row(detections[d].box) - last.row;
      const double dc = centroid_col(detections[d].box) - last.col;
      const double dist = std::hypot(dr, dc);
      if (dist <= gate) candidates.push_back({dist, t, d});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.track != b.track) return a.track < b.track;
    return a.detection < b.detection;
  });

  std::vector<bool> track_used(tracks.size(), false);
  std::vector<bool> det_used(detections.size(), false);
  for (const Candidate& c : candidates) {
    if (track_used[c.track] || det_used[c.detection]) continue;
    track_used[c.track] = true;
    det_used[c.detection] = true;
    const Detection& det = detections[c.detection];
    tracks[c.track].points.push_back(
        {frame, centroid_row(det.box), centroid_col(det.box), det.class_prob});
    tracks[c.track].miss_count = 0;
  }

  int next_id = 0;
  for (const Track& t : tracks) next_id = std::max(next_id, t.id + 1);

  for (std::size_t t = 0; t < tracks.size(); ++t) {
    if (tracks[t].retired || track_used[t]) continue;
    tracks[t].miss_count += 1;
    if (tracks[t].miss_count > 3) tracks[t].retired = true;
  }
  for (std::size_t d = 0; d < detections.size(); ++d) {
    if (det_used[d]) continue;
    Track fresh;
    fresh.id = next_id++;
    fresh.points.push_back({frame, centroid_row(detections[d].box),
                            centroid_col(detections[d].box), detections[d].class_prob});
    tracks.push_back(std::move(fresh));
  }
  return tracks;
}

TrackResult track_sequence(std::span<const Scan> frames, const GatedDetector& gated,
                           double gate_px) {
  TrackResult result;
  const Detector& det = gated.detector;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto points = polar_to_cartesian(frames[f]);
    const RasterImage raster = rasterize(points, det.grid);
    const RasterImage det_img = downscale(raster, det.detect_side);

    result.stats.frames += 1;
    std::vector<Detection> detections;
    const double gate_prob = predict_positive_prob(gated.gate_classifier, image_tensor(det_img));
    if (gate_prob >= gated.gate_threshold) {
      result.stats.proposal_invocations += 1;
      detections = detect_image(det, det_img);
      for (Detection& d : detections)
        d.box = scale_box(d.box, det.detect_side, det.grid.side_pixels);
    } else {
      result.stats.gated_out += 1;
    }
    result.tracks =
        associate(std::move(result.tracks), detections, gate_px, static_cast<std::int64_t>(f));
  }
  return result;
}

}  // namespace psd
