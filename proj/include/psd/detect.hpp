#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "psd/nn.hpp"
#include "psd/raster.hpp"
#include "psd/scan.hpp"
#include "psd/train.hpp"

namespace psd {

// Default square anchor sizes (pixels) on the proposal grid.
inline const std::vector<int> kDefaultAnchorScales = {6, 10, 16};

struct Anchor {
  BoundingBox box;
  int cell_row = 0;
  int cell_col = 0;
  int scale_index = 0;
};

// Scored box; objectness from the proposal stage, class_prob from the ROI
// classifier (0 until classified).
struct Detection {
  BoundingBox box;
  double objectness = 0.0;
  double class_prob = 0.0;
};

// One square anchor per (cell, scale) on a stride-4 grid, centered on cell
// centers. Boxes are kept at full size and slid inside the image bounds, so a
// scale equal to image_side yields the full image everywhere.
std::vector<Anchor> generate_anchors(int image_side, std::span<const int> scales);

// Intersection over union of two pixel boxes, in [0, 1].
double iou(const BoundingBox& a, const BoundingBox& b);

// Greedy non-maximum suppression: boxes in descending objectness (ties by
// lower input index) suppress later boxes overlapping them with
// iou > threshold. Kept boxes preserve that order.
std::vector<Detection> nms(std::span<const Detection> detections, double iou_threshold);

// Anchor supervision by IoU against ground truth: +1 when max IoU >= 0.5,
// 0 when < 0.2, -1 (ignored) in between.
std::vector<int> label_anchors(std::span<const Anchor> anchors,
                               std::span<const BoundingBox> gt_boxes);

// Objectness head: one shared 3x3 conv over the image, features max-pooled
// over each anchor's own box, then a per-scale linear layer to a two-way
// softmax (background / object).
struct RpnModel {
  int filters = 15;
  std::vector<int> scales;
  ConvLayer conv;
  std::vector<DenseLayer> heads;  // one per scale, [filters] -> [2]
};

RpnModel init_rpn(int filters, std::span<const int> scales, std::uint64_t seed);

// Objectness for every anchor of the image, in anchor order.
std::vector<double> rpn_scores(const RasterImage& img, const RpnModel& rpn);

// Score all anchors, suppress with NMS at nms_threshold, keep the best top_k.
std::vector<Detection> propose(const RasterImage& img, const RpnModel& rpn, int top_k = 16,
                               double nms_threshold = 0.5);

// Crop each proposal, resize to the classifier grid, and attach the pallet
// probability; proposals below prob_threshold are dropped.
std::vector<Detection> classify_rois(const RasterImage& img, std::span<const Detection> proposals,
                                     const Model& classifier, double prob_threshold = 0.5);

// Image with ground-truth boxes at the same resolution.
struct BoxedExample {
  RasterImage image;
  std::vector<BoundingBox> boxes;
};

// Trains the objectness head with mini-batch SGD and softmax cross-entropy
// over labeled anchors (all positives plus a seeded sample of negatives per
// image). Throws DataError when no anchor in the whole dataset is positive.
RpnModel train_rpn(const std::vector<BoxedExample>& dataset, const HyperParams& hp,
                   std::span<const int> scales = kDefaultAnchorScales, int jobs = 1);

// ROI-classifier training set: ground-truth crops as positives plus seeded
// random background crops (IoU < 0.2 against every ground-truth box) as
// negatives, all resized to roi_side.
Dataset make_roi_dataset(const std::vector<BoxedExample>& dataset, int roi_side,
                         int negatives_per_image, std::uint64_t seed);

// Two-stage pipeline bundle. Scans are rasterized on `grid`, downscaled to
// detect_side for proposals and classification, and the surviving boxes are
// scaled back to grid resolution.
struct Detector {
  Model roi_classifier;
  RpnModel rpn;
  GridSpec grid;
  int detect_side = 32;
  int top_k = 16;
  double nms_threshold = 0.5;
  double roi_prob_threshold = 0.5;
};

// Detections on an already-downscaled proposal image (boxes at detect_side).
std::vector<Detection> detect_image(const Detector& detector, const RasterImage& det_img);

// Full per-scan pipeline; boxes at grid resolution.
std::vector<Detection> detect_scan(const Detector& detector, const Scan& scan);

// Versioned binary format, magic "PSDR1"; layout mirrors the weight file.
void save_rpn(const RpnModel& rpn, const std::filesystem::path& path);
RpnModel load_rpn(const std::filesystem::path& path);

}  // namespace psd
