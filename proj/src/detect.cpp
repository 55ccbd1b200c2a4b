#include "psd/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "psd/errors.hpp"
#include "psd/parallel.hpp"
#include "psd/rng.hpp"

namespace psd {
namespace {

constexpr int kAnchorStride = 4;

void validate_box(const BoundingBox& b, const char* what) {
  if (b.height <= 0 || b.width <= 0) throw DataError(std::string(what) + ": box extent must be positive");
}

}  // namespace

std::vector<Anchor> generate_anchors(int image_side, std::span<const int> scales) {
  if (image_side < kAnchorStride) throw DataError("image side too small for anchor grid");
  if (scales.empty()) throw DataError("generate_anchors needs at least one scale");
  for (const int s : scales)
    if (s < 1 || s > image_side) throw DataError("anchor scales must lie in [1, image_side]");

  const int cells = image_side / kAnchorStride;
  std::vector<Anchor> anchors;
  anchors.reserve(static_cast<std::size_t>(cells) * cells * scales.size());
  for (int cr = 0; cr < cells; ++cr)
    for (int cc = 0; cc < cells; ++cc)
      for (std::size_t k = 0; k < scales.size(); ++k) {
        const int s = scales[k];
        const int center_row = cr * kAnchorStride + kAnchorStride / 2;
        const int center_col = cc * kAnchorStride + kAnchorStride / 2;
        // Slide fully inside the image instead of truncating, keeping size.
        const int row0 = std::clamp(center_row - s / 2, 0, image_side - s);
        const int col0 = std::clamp(center_col - s / 2, 0, image_side - s);
        anchors.push_back({BoundingBox{row0, col0, s, s}, cr, cc, static_cast<int>(k)});
      }
  return anchors;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  validate_box(a, "iou");
  validate_box(b, "iou");
  const long r0 = std::max(a.row0, b.row0);
  const long c0 = std::max(a.col0, b.col0);
  const long r1 = std::min(a.row0 + a.height, b.row0 + b.height);
  const long c1 = std::min(a.col0 + a.width, b.col0 + b.width);
  const long inter = std::max(0L, r1 - r0) * std::max(0L, c1 - c0);
  const long uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<Detection> nms(std::span<const Detection> detections, double iou_threshold) {
  if (!(iou_threshold > 0.0) || iou_threshold > 1.0)
    throw DataError("nms threshold must lie in (0, 1]");

  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (detections[a].objectness != detections[b].objectness)
      return detections[a].objectness > detections[b].objectness;
    return a < b;
  });

  std::vector<Detection> kept;
  for (const std::size_t i : order) {
    bool suppressed = false;
    for (const Detection& k : kept)
      if (iou(detections[i].box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(detections[i]);
  }
  return kept;
}

std::vector<int> label_anchors(std::span<const Anchor> anchors,
                               std::span<const BoundingBox> gt_boxes) {
  std::vector<int> labels(anchors.size(), 0);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    double best = 0.0;
    for (const BoundingBox& gt : gt_boxes) best = std::max(best, iou(anchors[i].box, gt));
    if (best >= 0.5)
      labels[i] = 1;
    else if (best >= 0.2)
      labels[i] = -1;  // ignored
  }
  return labels;
}

RpnModel init_rpn(int filters, std::span<const int> scales, std::uint64_t seed) {
  if (filters < 1) throw DataError("rpn needs at least one filter");
  if (scales.empty()) throw DataError("rpn needs at least one anchor scale");

  RpnModel rpn;
  rpn.filters = filters;
  rpn.scales.assign(scales.begin(), scales.end());
  {
    Rng rng(derive_seed(seed, 17));
    rpn.conv.in_channels = 1;
    rpn.conv.filters = filters;
    rpn.conv.weights = Tensor({filters, 1, 3, 3});
    const double bound = std::sqrt(6.0 / 9.0);
    for (std::size_t i = 0; i < rpn.conv.weights.size(); ++i)
      rpn.conv.weights[i] = rng.uniform(-bound, bound);
    rpn.conv.bias = Tensor({filters});
  }
  for (std::size_t k = 0; k < scales.size(); ++k) {
    Rng rng(derive_seed(seed, 100 + k));
    DenseLayer head;
    head.in_features = filters;
    head.out_features = 2;
    head.weights = Tensor({2, filters});
    const double bound = std::sqrt(6.0 / filters);
    for (std::size_t i = 0; i < head.weights.size(); ++i) head.weights[i] = rng.uniform(-bound, bound);
    head.bias = Tensor({2});
    rpn.heads.push_back(std::move(head));
  }
  return rpn;
}

namespace {

// Channel-wise max over an anchor box, with argmax positions for backprop.
struct PooledFeature {
  Tensor values;                  // [filters]
  std::vector<std::int32_t> argmax;  // flat index into the feature tensor
};

PooledFeature pool_box(const Tensor& features, const BoundingBox& box) {
  const int F = features.dim(0);
  const int H = features.dim(1);
  const int W = features.dim(2);
  PooledFeature pooled{Tensor({F}), std::vector<std::int32_t>(static_cast<std::size_t>(F))};
  for (int f = 0; f < F; ++f) {
    const double* ch = features.data() + static_cast<std::size_t>(f) * H * W;
    double best = ch[static_cast<std::size_t>(box.row0) * W + box.col0];
    long best_idx = static_cast<long>(box.row0) * W + box.col0;
    for (int r = box.row0; r < box.row0 + box.height; ++r)
      for (int c = box.col0; c < box.col0 + box.width; ++c) {
        const long idx = static_cast<long>(r) * W + c;
        if (ch[idx] > best) {
          best = ch[idx];
          best_idx = idx;
        }
      }
    pooled.values[static_cast<std::size_t>(f)] = best;
    pooled.argmax[static_cast<std::size_t>(f)] =
        static_cast<std::int32_t>(static_cast<long>(f) * H * W + best_idx);
  }
  return pooled;
}

struct RpnGrads {
  ConvGrads conv;
  std::vector<DenseGrads> heads;

  static RpnGrads zeros(const RpnModel& rpn) {
    RpnGrads g;
    g.conv = {Tensor::zeros_like(rpn.conv.weights), Tensor::zeros_like(rpn.conv.bias)};
    for (const DenseLayer& head : rpn.heads)
      g.heads.push_back({Tensor::zeros_like(head.weights), Tensor::zeros_like(head.bias)});
    return g;
  }

  void add(const RpnGrads& other) {
    for (std::size_t i = 0; i < conv.weights.size(); ++i) conv.weights[i] += other.conv.weights[i];
    for (std::size_t i = 0; i < conv.bias.size(); ++i) conv.bias[i] += other.conv.bias[i];
    for (std::size_t h = 0; h < heads.size(); ++h) {
      for (std::size_t i = 0; i < heads[h].weights.size(); ++i)
        heads[h].weights[i] += other.heads[h].weights[i];
      for (std::size_t i = 0; i < heads[h].bias.size(); ++i)
        heads[h].bias[i] += other.heads[h].bias[i];
    }
  }

  void scale(double factor) {
    for (std::size_t i = 0; i < conv.weights.size(); ++i) conv.weights[i] *= factor;
    for (std::size_t i = 0; i < conv.bias.size(); ++i) conv.bias[i] *= factor;
    for (DenseGrads& h : heads) {
      for (std::size_t i = 0; i < h.weights.size(); ++i) h.weights[i] *= factor;
      for (std::size_t i = 0; i < h.bias.size(); ++i) h.bias[i] *= factor;
    }
  }
};

// Forward + backprop of the objectness loss for one image over the given
// anchors; returns the mean anchor loss.
double rpn_image_backward(const RpnModel& rpn, const Tensor& image,
                          std::span<const Anchor> anchors, std::span<const int> labels,
                          std::span<const std::size_t> selected, RpnGrads& grads) {
  const Tensor pre = conv_forward(image, rpn.conv);
  const Tensor features = relu(pre);
  const double inv = 1.0 / static_cast<double>(selected.size());

  Tensor dfeatures = Tensor::zeros_like(features);
  double loss_sum = 0.0;
  for (const std::size_t ai : selected) {
    const Anchor& anchor = anchors[ai];
    const int label = labels[ai];
    PooledFeature pooled = pool_box(features, anchor.box);
    const DenseLayer& head = rpn.heads[static_cast<std::size_t>(anchor.scale_index)];
    const Tensor probs = softmax(dense_forward(pooled.values, head));
    loss_sum += cross_entropy(probs, label);

    Tensor dlogits = softmax_cross_entropy_grad(probs, label);
    for (std::size_t i = 0; i < dlogits.size(); ++i) dlogits[i] *= inv;  // mean over anchors
    Tensor dpooled = dense_backward(pooled.values, head, dlogits,
                                    grads.heads[static_cast<std::size_t>(anchor.scale_index)]);
    for (std::size_t f = 0; f < dpooled.size(); ++f)
      dfeatures[static_cast<std::size_t>(pooled.argmax[f])] += dpooled[f];
  }

  Tensor dpre = relu_backward(pre, dfeatures);
  conv_backward(image, rpn.conv, dpre, grads.conv);
  return loss_sum * inv;
}

}  // namespace

std::vector<double> rpn_scores(const RasterImage& img, const RpnModel& rpn) {
  const Tensor features = relu(conv_forward(image_tensor(img), rpn.conv));
  const auto anchors = generate_anchors(img.side, rpn.scales);
  std::vector<double> scores;
  scores.reserve(anchors.size());
  for (const Anchor& anchor : anchors) {
    const PooledFeature pooled = pool_box(features, anchor.box);
    const Tensor probs =
        softmax(dense_forward(pooled.values, rpn.heads[static_cast<std::size_t>(anchor.scale_index)]));
    scores.push_back(probs[1]);
  }
  return scores;
}

std::vector<Detection> propose(const RasterImage& img, const RpnModel& rpn, int top_k,
                               double nms_threshold) {
  if (top_k < 0) throw DataError("propose top_k must be >= 0");
  const auto anchors = generate_anchors(img.side, rpn.scales);
  const auto scores = rpn_scores(img, rpn);

  std::vector<Detection> candidates;
  candidates.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i)
    candidates.push_back({anchors[i].box, scores[i], 0.0});

  std::vector<Detection> kept = nms(candidates, nms_threshold);
  if (kept.size() > static_cast<std::size_t>(top_k)) kept.resize(static_cast<std::size_t>(top_k));
  return kept;
}

std::vector<Detection> classify_rois(const RasterImage& img, std::span<const Detection> proposals,
                                     const Model& classifier, double prob_threshold) {
  std::vector<Detection> out;
  for (const Detection& proposal : proposals) {
    const RasterImage roi =
        resize_occupancy(crop_square(img, proposal.box), classifier.config.input_side);
    const double prob = predict_positive_prob(classifier, image_tensor(roi));
    if (prob < prob_threshold) continue;
    Detection det = proposal;
    det.class_prob = prob;
    out.push_back(det);
  }
  return out;
}

RpnModel train_rpn(const std::vector<BoxedExample>& dataset, const HyperParams& hp,
                   std::span<const int> scales, int jobs) {
  if (dataset.empty()) throw DataError("rpn training dataset is empty");
  const int side = dataset.front().image.side;
  for (const BoxedExample& ex : dataset)
    if (ex.image.side != side) throw DataError("rpn dataset images differ in size");

  const auto anchors = generate_anchors(side, scales);
  std::vector<std::vector<int>> labels;
  labels.reserve(dataset.size());
  bool any_positive = false;
  for (const BoxedExample& ex : dataset) {
    labels.push_back(label_anchors(anchors, ex.boxes));
    for (const int l : labels.back()) any_positive |= (l == 1);
  }
  if (!any_positive) throw DataError("no positive anchors in the entire dataset");

  RpnModel rpn = init_rpn(hp.filters, scales, derive_seed(hp.seed, 0x69u));

  std::vector<Tensor> images;
  images.reserve(dataset.size());
  for (const BoxedExample& ex : dataset) images.push_back(image_tensor(ex.image));

  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  constexpr std::size_t kBlock = 10;
  for (int epoch = 0; epoch < hp.max_epochs; ++epoch) {
    Rng epoch_rng(derive_seed(hp.seed, 0x4e0c + static_cast<std::uint64_t>(epoch)));
    epoch_rng.shuffle(order);

    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(hp.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(hp.batch_size));
      const std::size_t batch_n = stop - start;
      const std::size_t blocks = (batch_n + kBlock - 1) / kBlock;

      std::vector<RpnGrads> block_grads;
      block_grads.reserve(blocks);
      for (std::size_t b = 0; b < blocks; ++b) block_grads.push_back(RpnGrads::zeros(rpn));
      std::vector<double> block_loss(blocks, 0.0);

      parallel_for_index(blocks, jobs, [&](std::size_t b) {
        const std::size_t lo = start + b * kBlock;
        const std::size_t hi = std::min(stop, lo + kBlock);
        for (std::size_t i = lo; i < hi; ++i) {
          const std::size_t idx = order[i];
          const std::vector<int>& image_labels = labels[idx];

          // All positives plus a seeded sample of negatives (3:1, floor 16).
          std::vector<std::size_t> positives, negatives;
          for (std::size_t a = 0; a < image_labels.size(); ++a) {
            if (image_labels[a] == 1) positives.push_back(a);
            if (image_labels[a] == 0) negatives.push_back(a);
          }
          Rng sample_rng(derive_seed(hp.seed, 0x5a3f + idx * 7919 +
                                             static_cast<std::uint64_t>(epoch) * 104729));
          sample_rng.shuffle(negatives);
          const std::size_t keep_neg =
              std::min(negatives.size(), std::max<std::size_t>(16, 3 * positives.size()));
          std::vector<std::size_t> selected = positives;
          selected.insert(selected.end(), negatives.begin(),
                          negatives.begin() + static_cast<long>(keep_neg));
          if (selected.empty()) continue;

          block_loss[b] +=
              rpn_image_backward(rpn, images[idx], anchors, image_labels, selected, block_grads[b]);
        }
      });

      RpnGrads& total = block_grads.front();
      double batch_loss = block_loss.front();
      for (std::size_t b = 1; b < blocks; ++b) {
        total.add(block_grads[b]);
        batch_loss += block_loss[b];
      }
      if (!std::isfinite(batch_loss))
        throw NumericError("non-finite rpn loss at epoch " + std::to_string(epoch));
      total.scale(1.0 / static_cast<double>(batch_n));

      sgd_step(rpn.conv.weights, total.conv.weights, hp.learning_rate);
      sgd_step(rpn.conv.bias, total.conv.bias, hp.learning_rate);
      for (std::size_t h = 0; h < rpn.heads.size(); ++h) {
        sgd_step(rpn.heads[h].weights, total.heads[h].weights, hp.learning_rate);
        sgd_step(rpn.heads[h].bias, total.heads[h].bias, hp.learning_rate);
      }
    }
  }
  return rpn;
}

Dataset make_roi_dataset(const std::vector<BoxedExample>& dataset, int roi_side,
                         int negatives_per_image, std::uint64_t seed) {
  if (roi_side < 3) throw DataError("roi_side must be >= 3");
  if (negatives_per_image < 0) throw DataError("negatives_per_image must be >= 0");

  Dataset out;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const BoxedExample& ex = dataset[i];
    const int side = ex.image.side;
    for (const BoundingBox& box : ex.boxes)
      out.push_back({resize_occupancy(crop_square(ex.image, box), roi_side), 1});

    Rng rng(derive_seed(seed, 0xbac6 + i));
    int produced = 0;
    for (int attempt = 0; attempt < 50 * negatives_per_image && produced < negatives_per_image;
         ++attempt) {
      const int size = 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(
                               std::max(1, side / 2 - 4))));
      const int row0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(side - size + 1)));
      const int col0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(side - size + 1)));
      const BoundingBox candidate{row0, col0, size, size};
      bool overlaps = false;
      for (const BoundingBox& gt : ex.boxes)
        if (iou(candidate, gt) >= 0.2) overlaps = true;
      if (overlaps) continue;
      out.push_back({resize_occupancy(crop_square(ex.image, candidate), roi_side), 0});
      ++produced;
    }
  }
  return out;
}

std::vector<Detection> detect_image(const Detector& detector, const RasterImage& det_img) {
  const auto proposals = propose(det_img, detector.rpn, detector.top_k, detector.nms_threshold);
  return classify_rois(det_img, proposals, detector.roi_classifier,
                       detector.roi_prob_threshold);
}

std::vector<Detection> detect_scan(const Detector& detector, const Scan& scan) {
  const auto points = polar_to_cartesian(scan);
  const RasterImage raster = rasterize(points, detector.grid);
  const RasterImage det_img = downscale(raster, detector.detect_side);
  std::vector<Detection> dets = detect_image(detector, det_img);
  for (Detection& det : dets)
    det.box = scale_box(det.box, detector.detect_side, detector.grid.side_pixels);
  return dets;
}

// ---- RPN weight file ----

namespace {

constexpr char kRpnMagic[5] = {'P', 'S', 'D', 'R', '1'};

void write_i32(std::ostream& out, std::int32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i)
    buf[i] = static_cast<unsigned char>((static_cast<std::uint32_t>(v) >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 4);
}

std::int32_t read_i32(std::istream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw DataError("rpn file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return static_cast<std::int32_t>(v);
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

double read_f64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw DataError("rpn file truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) write_f64(out, t[i]);
}

void read_tensor(std::istream& in, Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = read_f64(in);
}

}  // namespace

void save_rpn(const RpnModel& rpn, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open rpn file for writing: " + path.string());
  out.write(kRpnMagic, sizeof(kRpnMagic));
  write_i32(out, rpn.filters);
  write_i32(out, static_cast<std::int32_t>(rpn.scales.size()));
  for (const int s : rpn.scales) write_i32(out, s);
  write_tensor(out, rpn.conv.weights);
  write_tensor(out, rpn.conv.bias);
  for (const DenseLayer& head : rpn.heads) {
    write_tensor(out, head.weights);
    write_tensor(out, head.bias);
  }
  if (!out) throw DataError("failed writing rpn file: " + path.string());
}

RpnModel load_rpn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open rpn file: " + path.string());
  char magic[5];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kRpnMagic, sizeof(kRpnMagic)) != 0)
    throw DataError("not a PSDR1 rpn file: " + path.string());

  const int filters = read_i32(in);
  const int num_scales = read_i32(in);
  if (filters < 1 || num_scales < 1) throw DataError("corrupt rpn file header: " + path.string());
  std::vector<int> scales(static_cast<std::size_t>(num_scales));
  for (int& s : scales) s = read_i32(in);

  RpnModel rpn = init_rpn(filters, scales, 0);
  read_tensor(in, rpn.conv.weights);
  read_tensor(in, rpn.conv.bias);
  for (DenseLayer& head : rpn.heads) {
    read_tensor(in, head.weights);
    read_tensor(in, head.bias);
  }
  in.peek();
  if (!in.eof()) throw DataError("trailing bytes in rpn file: " + path.string());
  return rpn;
}

}  // namespace psd
