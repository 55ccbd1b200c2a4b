#include "psd/scan.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "psd/errors.hpp"
#include "psd/rng.hpp"

namespace psd {
namespace {

// Tokenizer that remembers the line each token came from, for error messages.
class LineTokenizer {
 public:
  explicit LineTokenizer(std::istream& in) : in_(in) {}

  bool next(std::string& token) {
    while (pos_ >= line_.size()) {
      if (!std::getline(in_, line_)) return false;
      ++line_no_;
      pos_ = 0;
      skip_spaces();
    }
    const std::size_t start = pos_;
    while (pos_ < line_.size() && !std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
    token = line_.substr(start, pos_ - start);
    skip_spaces();
    return true;
  }

  int line_no() const { return line_no_; }

 private:
  void skip_spaces() {
    while (pos_ < line_.size() && std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
  }

  std::istream& in_;
  std::string line_;
  std::size_t pos_ = 0;
  int line_no_ = 0;
};

[[noreturn]] void fail(int line, const std::string& what) {
  throw ParseError("line " + std::to_string(line) + ": " + what);
}

double parse_double_token(const std::string& token, int line, const std::string& field) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  // from_chars handles "inf"; a leading '+' is tolerated for hand-written files.
  if (!token.empty() && token.front() == '+') ++begin;
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc{} || result.ptr != end)
    fail(line, "malformed " + field + " value '" + token + "'");
  if (std::isnan(value)) fail(line, field + " must not be NaN");
  return value;
}

long parse_long_token(const std::string& token, int line, const std::string& field) {
  long value = 0;
  const auto result = std::from_chars(token.data(), token.data() + token.size(), value);
  if (result.ec != std::errc{} || result.ptr != token.data() + token.size())
    fail(line, "malformed " + field + " value '" + token + "'");
  return value;
}

void expect_key(LineTokenizer& tok, const std::string& key) {
  std::string token;
  if (!tok.next(token)) fail(tok.line_no() + 1, "missing '" + key + "' header");
  if (token != key) fail(tok.line_no(), "expected '" + key + "', got '" + token + "'");
}

std::string format_double(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

}  // namespace

void validate_scan(const Scan& scan) {
  if (scan.ranges.empty()) throw DataError("scan has no ranges");
  if (!(scan.angle_increment > 0.0)) throw DataError("angle_increment must be > 0");
  const double span = scan.angle_increment * static_cast<double>(scan.ranges.size() - 1);
  if (span > 2.0 * std::numbers::pi + 1e-9) throw DataError("angle span exceeds 2*pi");
  for (const double r : scan.ranges) {
    if (std::isnan(r)) throw DataError("range is NaN");
    if (std::isfinite(r) && r < 0.0) throw DataError("range is negative");
  }
}

Scan parse_scan(std::istream& in) {
  LineTokenizer tok(in);
  std::string token;
  Scan scan;

  expect_key(tok, "angle_min");
  if (!tok.next(token)) fail(tok.line_no(), "missing angle_min value");
  scan.angle_min = parse_double_token(token, tok.line_no(), "angle_min");

  expect_key(tok, "angle_increment");
  if (!tok.next(token)) fail(tok.line_no(), "missing angle_increment value");
  scan.angle_increment = parse_double_token(token, tok.line_no(), "angle_increment");
  if (!(scan.angle_increment > 0.0)) fail(tok.line_no(), "angle_increment must be > 0");

  expect_key(tok, "count");
  if (!tok.next(token)) fail(tok.line_no(), "missing count value");
  const long count = parse_long_token(token, tok.line_no(), "count");
  if (count < 1) fail(tok.line_no(), "count must be >= 1");

  scan.ranges.reserve(static_cast<std::size_t>(count));
  while (tok.next(token)) {
    if (static_cast<long>(scan.ranges.size()) == count)
      fail(tok.line_no(), "count mismatch: more than " + std::to_string(count) + " ranges");
    const double r = parse_double_token(token, tok.line_no(), "range");
    if (std::isfinite(r) && r < 0.0) fail(tok.line_no(), "range must be non-negative");
    if (r == -kNoReturn) fail(tok.line_no(), "range must be non-negative");
    scan.ranges.push_back(r);
  }
  if (static_cast<long>(scan.ranges.size()) != count)
    fail(tok.line_no(), "count mismatch: expected " + std::to_string(count) + " ranges, got " +
                            std::to_string(scan.ranges.size()));

  validate_scan(scan);
  return scan;
}

Scan parse_scan(const std::string& text) {
  std::istringstream in(text);
  return parse_scan(in);
}

std::string write_scan(const Scan& scan) {
  validate_scan(scan);
  std::string out;
  out += "angle_min " + format_double(scan.angle_min) + "\n";
  out += "angle_increment " + format_double(scan.angle_increment) + "\n";
  out += "count " + std::to_string(scan.ranges.size()) + "\n";
  for (std::size_t i = 0; i < scan.ranges.size(); ++i) {
    if (i) out += ' ';
    out += format_double(scan.ranges[i]);
  }
  out += '\n';
  return out;
}

ScanLabel parse_label(std::istream& in) {
  LineTokenizer tok(in);
  std::string token;
  ScanLabel label;

  expect_key(tok, "has_pallet");
  if (!tok.next(token)) fail(tok.line_no(), "missing has_pallet value");
  if (token == "1")
    label.has_pallet = true;
  else if (token == "0")
    label.has_pallet = false;
  else
    fail(tok.line_no(), "has_pallet must be 0 or 1, got '" + token + "'");

  while (tok.next(token)) {
    if (token != "box") fail(tok.line_no(), "expected 'box', got '" + token + "'");
    BoundingBox box;
    int* fields[4] = {&box.row0, &box.col0, &box.height, &box.width};
    const char* names[4] = {"row0", "col0", "height", "width"};
    for (int i = 0; i < 4; ++i) {
      if (!tok.next(token)) fail(tok.line_no(), std::string("missing box ") + names[i]);
      *fields[i] = static_cast<int>(parse_long_token(token, tok.line_no(), names[i]));
    }
    if (box.row0 < 0 || box.col0 < 0) fail(tok.line_no(), "box origin must be non-negative");
    if (box.height <= 0 || box.width <= 0) fail(tok.line_no(), "box extent must be positive");
    label.boxes.push_back(box);
  }
  if (!label.has_pallet && !label.boxes.empty())
    fail(tok.line_no(), "boxes present but has_pallet is 0");
  return label;
}

ScanLabel parse_label(const std::string& text) {
  std::istringstream in(text);
  return parse_label(in);
}

std::string write_label(const ScanLabel& label) {
  if (!label.has_pallet && !label.boxes.empty())
    throw DataError("label with has_pallet=0 must not carry boxes");
  std::string out = label.has_pallet ? "has_pallet 1\n" : "has_pallet 0\n";
  for (const BoundingBox& box : label.boxes) {
    if (box.height <= 0 || box.width <= 0) throw DataError("box extent must be positive");
    out += "box " + std::to_string(box.row0) + ' ' + std::to_string(box.col0) + ' ' +
           std::to_string(box.height) + ' ' + std::to_string(box.width) + "\n";
  }
  return out;
}

DatasetSplit split_dataset(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (n < 2) throw DataError("split_dataset requires n >= 2");
  if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
    throw DataError("train_fraction must lie in (0, 1)");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  // The epsilon absorbs binary rounding in products like 0.7 * 340, which
  // lands at 237.99999999999997 but means exactly 238.
  const auto train_size =
      static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  DatasetSplit split;
  split.train_indices.assign(order.begin(), order.begin() + static_cast<long>(train_size));
  split.test_indices.assign(order.begin() + static_cast<long>(train_size), order.end());
  return split;
}

}  // namespace psd
