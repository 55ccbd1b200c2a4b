#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psd/detect.hpp"
#include "psd/synth.hpp"
#include "psd/train.hpp"

namespace psd {

// File-level helpers; errors name the offending file.
Scan load_scan_file(const std::filesystem::path& path);
void save_scan_file(const std::filesystem::path& path, const Scan& scan);
ScanLabel load_label_file(const std::filesystem::path& path);
void save_label_file(const std::filesystem::path& path, const ScanLabel& label);

struct FrameFiles {
  std::string stem;
  std::filesystem::path scan;
  std::optional<std::filesystem::path> label;
};

// .scan files in a directory, sorted by stem; a sibling <stem>.label is
// attached when present.
std::vector<FrameFiles> list_frame_files(const std::filesystem::path& dir);

// Loads scan+label pairs (every frame must carry a label); timestamps are
// assigned from the sorted file order.
std::vector<SynthFrame> load_labeled_frames(const std::filesystem::path& dir);

// Loads an ordered scan sequence; labels, if any, are ignored.
std::vector<Scan> load_scan_sequence(const std::filesystem::path& dir);

// Writes frames as zero-padded <index>.scan/.label pairs.
void save_frames(const std::filesystem::path& dir, std::span<const SynthFrame> frames);

// Rasterize + downscale each frame to the classifier grid; label 1 = pallet.
Dataset to_classifier_dataset(std::span<const SynthFrame> frames, const GridSpec& grid,
                              int input_side);

// Rasterize + downscale with ground-truth boxes rescaled onto detect_side.
std::vector<BoxedExample> to_boxed_dataset(std::span<const SynthFrame> frames,
                                           const GridSpec& grid, int detect_side);

}  // namespace psd
