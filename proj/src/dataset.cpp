#include "psd/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "psd/errors.hpp"

namespace psd {
namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open file for writing: " + path.string());
  out << content;
  if (!out) throw DataError("failed writing file: " + path.string());
}

}  // namespace

Scan load_scan_file(const std::filesystem::path& path) {
  try {
    return parse_scan(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_scan_file(const std::filesystem::path& path, const Scan& scan) {
  write_file(path, write_scan(scan));
}

ScanLabel load_label_file(const std::filesystem::path& path) {
  try {
    return parse_label(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_label_file(const std::filesystem::path& path, const ScanLabel& label) {
  write_file(path, write_label(label));
}

std::vector<FrameFiles> list_frame_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw DataError("not a directory: " + dir.string());

  std::vector<FrameFiles> frames;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".scan") continue;
    FrameFiles frame;
    frame.stem = entry.path().stem().string();
    frame.scan = entry.path();
    std::filesystem::path label = entry.path();
    label.replace_extension(".label");
    if (std::filesystem::exists(label)) frame.label = label;
    frames.push_back(std::move(frame));
  }
  std::sort(frames.begin(), frames.end(),
            [](const FrameFiles& a, const FrameFiles& b) { return a.stem < b.stem; });
  if (frames.empty()) throw DataError("no .scan files in " + dir.string());
  return frames;
}

std::vector<SynthFrame> load_labeled_frames(const std::filesystem::path& dir) {
  std::vector<SynthFrame> frames;
  for (const FrameFiles& files : list_frame_files(dir)) {
    if (!files.label) throw DataError("missing label file for " + files.scan.string());
    SynthFrame frame;
    frame.scan = load_scan_file(files.scan);
    frame.scan.timestamp = static_cast<std::int64_t>(frames.size());
    frame.label = load_label_file(*files.label);
    frames.push_back(std::move(frame));
  }
  return frames;
}

std::vector<Scan> load_scan_sequence(const std::filesystem::path& dir) {
  std::vector<Scan> scans;
  for (const FrameFiles& files : list_frame_files(dir)) {
    Scan scan = load_scan_file(files.scan);
    scan.timestamp = static_cast<std::int64_t>(scans.size());
    scans.push_back(std::move(scan));
  }
  return scans;
}

void save_frames(const std::filesystem::path& dir, std::span<const SynthFrame> frames) {
  std::filesystem::create_directories(dir);
  int width = 1;
  for (std::size_t n = frames.size(); n > 9; n /= 10) ++width;
  width = std::max(width, 6);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::string stem = std::to_string(i);
    stem.insert(0, static_cast<std::size_t>(width) - std::min<std::size_t>(stem.size(), width), '0');
    save_scan_file(dir / (stem + ".scan"), frames[i].scan);
    save_label_file(dir / (stem + ".label"), frames[i].label);
  }
}

Dataset to_classifier_dataset(std::span<const SynthFrame> frames, const GridSpec& grid,
                              int input_side) {
  Dataset dataset;
  dataset.reserve(frames.size());
  for (const SynthFrame& frame : frames) {
    const RasterImage raster = rasterize(polar_to_cartesian(frame.scan), grid);
    dataset.push_back({downscale(raster, input_side), frame.label.has_pallet ? 1 : 0});
  }
  return dataset;
}

std::vector<BoxedExample> to_boxed_dataset(std::span<const SynthFrame> frames,
                                           const GridSpec& grid, int detect_side) {
  std::vector<BoxedExample> dataset;
  dataset.reserve(frames.size());
  for (const SynthFrame& frame : frames) {
    BoxedExample ex;
    const RasterImage raster = rasterize(polar_to_cartesian(frame.scan), grid);
    ex.image = downscale(raster, detect_side);
    for (const BoundingBox& box : frame.label.boxes)
      ex.boxes.push_back(scale_box(box, grid.side_pixels, detect_side));
    dataset.push_back(std::move(ex));
  }
  return dataset;
}

}  // namespace psd
