#include <doctest.h>

#include "winstack/windowing.hpp"

using namespace winstack;

namespace {
Recording rec_of(double duration) {
  return Recording{"r", "s", "p", duration, Label::Normal, 1.0};
}
}  // namespace

TEST_CASE("segment: 21-minute recording, 60 s windows, no overlap") {
  WindowingConfig cfg{60, 60, 60, 1200};
  const WindowIndexing idx = segment(rec_of(1260), cfg);
  CHECK(idx.usable_s == 1200);
  CHECK(idx.count == 20);
  CHECK_FALSE(idx.too_short);
  REQUIRE(idx.offsets.size() == 20);
  CHECK(idx.offsets.front() == 60);
  CHECK(idx.offsets.back() == 60 + 19 * 60);
  CHECK(idx.discarded_tail_s == 0.0);
}

TEST_CASE("segment: 10 s stride gives 115 windows") {
  WindowingConfig cfg{60, 10, 60, 1200};
  const WindowIndexing idx = segment(rec_of(1260), cfg);
  CHECK(idx.count == 115);  // floor((1200-60)/10) + 1
}

TEST_CASE("segment: recording shorter than one window is excluded") {
  WindowingConfig cfg{600, 600, 60, 1200};
  const WindowIndexing idx = segment(rec_of(300), cfg);
  CHECK(idx.count == 0);
  CHECK(idx.too_short);
  CHECK(idx.offsets.empty());
}

TEST_CASE("segment reports discarded tail seconds") {
  WindowingConfig cfg{60, 60, 60, 1200};
  const WindowIndexing idx = segment(rec_of(630), cfg);  // usable 570 -> 9 windows + 30 s tail
  CHECK(idx.count == 9);
  CHECK(idx.discarded_tail_s == doctest::Approx(30.0));
}

TEST_CASE("segment caps usable content after trimming the head") {
  WindowingConfig cfg{60, 60, 60, 1200};
  const WindowIndexing idx = segment(rec_of(10000), cfg);
  CHECK(idx.usable_s == 1200);
  CHECK(idx.count == 20);
}

TEST_CASE("inherit_labels tags every window with the parent label") {
  WindowingConfig cfg{60, 60, 60, 1200};
  const auto idx20 = segment(rec_of(1260), cfg);
  const auto abnormal = inherit_labels(idx20, Label::Abnormal);
  REQUIRE(abnormal.size() == 20);
  for (const auto& [k, l] : abnormal) CHECK(l == Label::Abnormal);

  const auto idx0 = segment(rec_of(100), cfg);
  CHECK(inherit_labels(idx0, Label::Abnormal).empty());

  const auto idx19 = segment(rec_of(1200), cfg);  // usable 1140 -> 19
  const auto normal = inherit_labels(idx19, Label::Normal);
  REQUIRE(normal.size() == 19);
  CHECK(normal[7].first == 7);
  CHECK(normal[7].second == Label::Normal);
}

TEST_CASE("window count is monotone in window length and stride") {
  const double duration = 1260;
  int prev = INT32_MAX;
  for (double length : {60.0, 180.0, 300.0, 400.0, 600.0}) {
    WindowingConfig cfg{length, length, 60, 1200};
    const int count = window_count_for_duration(duration, cfg);
    CHECK(count <= prev);
    prev = count;
  }
  prev = INT32_MAX;
  for (double stride : {10.0, 20.0, 30.0, 40.0, 50.0, 60.0}) {
    WindowingConfig cfg{60, stride, 60, 1200};
    const int count = window_count_for_duration(duration, cfg);
    CHECK(count <= prev);
    prev = count;
  }
}

TEST_CASE("non-overlapping windows tile the usable span") {
  WindowingConfig cfg{180, 180, 60, 1200};
  const WindowIndexing idx = segment(rec_of(1260), cfg);
  for (std::size_t k = 1; k < idx.offsets.size(); ++k) {
    CHECK(idx.offsets[k] - idx.offsets[k - 1] == cfg.window_length_s);
  }
  CHECK(idx.offsets.front() == cfg.head_trim_s);
}

TEST_CASE("segment is pure") {
  WindowingConfig cfg{60, 30, 60, 1200};
  const auto a = segment(rec_of(777), cfg);
  const auto b = segment(rec_of(777), cfg);
  CHECK(a.count == b.count);
  CHECK(a.offsets == b.offsets);
  CHECK(a.usable_s == b.usable_s);
}

TEST_CASE("windowing config validation") {
  CHECK_THROWS_AS(WindowingConfig{0, 60, 60, 1200}.validate(), std::invalid_argument);
  CHECK_THROWS_AS(WindowingConfig{60, 0, 60, 1200}.validate(), std::invalid_argument);
  CHECK_THROWS_AS(WindowingConfig{60, 61, 60, 1200}.validate(), std::invalid_argument);
  CHECK_THROWS_AS(WindowingConfig{60, 60, -1, 1200}.validate(), std::invalid_argument);
  CHECK_THROWS_AS(WindowingConfig{60, 60, 60, 59}.validate(), std::invalid_argument);
  CHECK_NOTHROW(WindowingConfig{60, 60, 0, 60}.validate());
}
