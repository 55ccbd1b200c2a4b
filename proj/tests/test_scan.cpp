#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "psd/errors.hpp"
#include "psd/rng.hpp"
#include "psd/scan.hpp"

using namespace psd;

TEST_CASE("parse_scan reads a minimal file") {
  const std::string text =
      "angle_min 0\n"
      "angle_increment 1.5707963267948966\n"
      "count 3\n"
      "1.0 2.0 1.5\n";
  const Scan scan = parse_scan(text);
  CHECK(scan.angle_min == 0.0);
  CHECK(scan.angle_increment == doctest::Approx(std::numbers::pi / 2).epsilon(1e-15));
  REQUIRE(scan.ranges.size() == 3);
  CHECK(scan.ranges[0] == 1.0);
  CHECK(scan.ranges[1] == 2.0);
  CHECK(scan.ranges[2] == 1.5);
}

TEST_CASE("parse_scan rejects a count mismatch, naming the line") {
  const std::string text =
      "angle_min 0\n"
      "angle_increment 0.5\n"
      "count 3\n"
      "1.0 2.0\n";
  try {
    parse_scan(text);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("count mismatch") != std::string::npos);
    CHECK(msg.find("line") != std::string::npos);
  }
}

TEST_CASE("parse_scan rejects malformed headers and negative ranges") {
  CHECK_THROWS_AS(parse_scan("angle_max 0\nangle_increment 1\ncount 1\n1\n"), ParseError);
  CHECK_THROWS_AS(parse_scan("angle_min 0\nangle_increment 1\ncount 1\n-2.0\n"), ParseError);
  CHECK_THROWS_AS(parse_scan("angle_min 0\nangle_increment 1\ncount 1\nbogus\n"), ParseError);
  CHECK_THROWS_AS(parse_scan("angle_min 0\nangle_increment 0\ncount 1\n1\n"), ParseError);
  CHECK_THROWS_AS(parse_scan(""), ParseError);
  // span > 2*pi
  CHECK_THROWS_AS(parse_scan("angle_min 0\nangle_increment 1\ncount 8\n1 1 1 1 1 1 1 1\n"),
                  DataError);
}

TEST_CASE("no-return beams round-trip through the inf token") {
  Scan scan;
  scan.angle_min = -1.0;
  scan.angle_increment = 0.25;
  scan.ranges = {1.0, kNoReturn, 2.5};
  const std::string text = write_scan(scan);
  CHECK(text.find("inf") != std::string::npos);
  const Scan back = parse_scan(text);
  REQUIRE(back.ranges.size() == 3);
  CHECK(std::isinf(back.ranges[1]));
}

TEST_CASE("write_scan emits the canonical four-line form") {
  Scan scan;
  scan.angle_min = 0.0;
  scan.angle_increment = std::numbers::pi / 2;
  scan.ranges = {1.0, 2.0, 1.5};
  const std::string text = write_scan(scan);
  CHECK(text ==
        "angle_min 0\n"
        "angle_increment 1.5707963267948966\n"
        "count 3\n"
        "1 2 1.5\n");
}

TEST_CASE("parse/write round-trip laws") {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    Scan scan;
    scan.angle_min = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const std::size_t n = 1 + rng.below(400);
    scan.angle_increment = rng.uniform(1e-4, 2.0 * std::numbers::pi / std::max<std::size_t>(n, 2));
    for (std::size_t i = 0; i < n; ++i)
      scan.ranges.push_back(rng.below(10) == 0 ? kNoReturn : rng.uniform(0.0, 30.0));

    // parse(write(scan)) == scan, bit-exact thanks to shortest round-trip floats
    const std::string text = write_scan(scan);
    const Scan back = parse_scan(text);
    CHECK(back.angle_min == scan.angle_min);
    CHECK(back.angle_increment == scan.angle_increment);
    CHECK(back.ranges == scan.ranges);

    // write(parse(f)) is byte-identical to the canonicalized f
    CHECK(write_scan(back) == text);
  }

  // whitespace-mangled input canonicalizes to the same bytes
  const std::string messy =
      "angle_min   0.5\nangle_increment 0.01\ncount 4\n  1.25\n2.5\n   inf 0\n";
  const std::string canonical = write_scan(parse_scan(messy));
  CHECK(canonical == "angle_min 0.5\nangle_increment 0.01\ncount 4\n1.25 2.5 inf 0\n");
  CHECK(write_scan(parse_scan(canonical)) == canonical);
}

TEST_CASE("label files round-trip and enforce the has_pallet/boxes invariant") {
  ScanLabel label;
  label.has_pallet = true;
  label.boxes = {{10, 20, 5, 8}, {0, 0, 1, 1}};
  const std::string text = write_label(label);
  const ScanLabel back = parse_label(text);
  CHECK(back.has_pallet);
  REQUIRE(back.boxes.size() == 2);
  CHECK(back.boxes[0] == label.boxes[0]);
  CHECK(write_label(back) == text);

  CHECK_THROWS_AS(parse_label("has_pallet 0\nbox 1 1 2 2\n"), ParseError);
  CHECK_THROWS_AS(parse_label("has_pallet 2\n"), ParseError);
  CHECK_THROWS_AS(parse_label("has_pallet 1\nbox 1 1 0 2\n"), ParseError);

  ScanLabel empty;
  CHECK(write_label(empty) == "has_pallet 0\n");
}

TEST_CASE("split_dataset honors the 70/30 sizes from the corpus counts") {
  const DatasetSplit split = split_dataset(340, 0.7, 1);
  CHECK(split.train_indices.size() == 238);  // floor(340 * 0.7)
  CHECK(split.test_indices.size() == 102);

  const DatasetSplit small = split_dataset(10, 0.7, 1);
  CHECK(small.train_indices.size() == 7);
  CHECK(small.test_indices.size() == 3);
}

TEST_CASE("split_dataset is deterministic per seed and partitions the range") {
  Rng rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.below(500);
    const std::uint64_t seed = rng.next_u64();
    const DatasetSplit a = split_dataset(n, 0.7, seed);
    const DatasetSplit b = split_dataset(n, 0.7, seed);
    CHECK(a.train_indices == b.train_indices);
    CHECK(a.test_indices == b.test_indices);

    std::set<std::size_t> seen;
    for (const auto i : a.train_indices) seen.insert(i);
    for (const auto i : a.test_indices) seen.insert(i);
    CHECK(seen.size() == n);
    CHECK(*seen.rbegin() == n - 1);
    CHECK(a.train_indices.size() + a.test_indices.size() == n);
  }

  const DatasetSplit s1 = split_dataset(340, 0.7, 1);
  const DatasetSplit s2 = split_dataset(340, 0.7, 2);
  CHECK(s1.train_indices != s2.train_indices);
}

TEST_CASE("split_dataset rejects bad arguments") {
  CHECK_THROWS_AS(split_dataset(1, 0.7, 0), DataError);
  CHECK_THROWS_AS(split_dataset(10, 0.0, 0), DataError);
  CHECK_THROWS_AS(split_dataset(10, 1.0, 0), DataError);
}
