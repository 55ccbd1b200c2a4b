#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "psd/detect.hpp"

namespace psd {

struct TrackPoint {
  std::int64_t frame = 0;
  double row = 0.0;  // box centroid, grid-resolution pixels
  double col = 0.0;
  double prob = 0.0;
};

struct Track {
  int id = 0;
  std::vector<TrackPoint> points;  // frame indices strictly increasing
  int miss_count = 0;
  bool retired = false;
};

// Greedy globally-nearest association of detections to active tracks under a
// centroid distance gate. Candidate pairs are ordered by (distance, track
// index, detection index), so the result is independent of detection input
// order. Unmatched detections spawn tracks; unmatched active tracks take a
// miss and retire after more than 3 consecutive misses.
std::vector<Track> associate(std::vector<Track> tracks, std::span<const Detection> detections,
                             double gate, std::int64_t frame);

struct TrackStats {
  long frames = 0;
  long proposal_invocations = 0;  // frames where the proposal stage actually ran
  long gated_out = 0;             // frames skipped by the whole-image classifier
};

struct TrackResult {
  std::vector<Track> tracks;  // every track ever spawned, retired ones included
  TrackStats stats;
};

// Detector plus the whole-image classifier that short-circuits the proposal
// stage on frames scored below gate_threshold.
struct GatedDetector {
  Detector detector;
  Model gate_classifier;
  double gate_threshold = 0.5;
};

// Runs the gated detection pipeline over an ordered scan sequence and
// associates the per-frame detections into tracks. gate_px is the association
// gate in grid-resolution pixels.
TrackResult track_sequence(std::span<const Scan> frames, const GatedDetector& gated,
                           double gate_px = 20.0);

}  // namespace psd
