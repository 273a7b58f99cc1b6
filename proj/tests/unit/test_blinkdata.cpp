#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "../support/synth.hpp"
#include "thbench/blinkdata.hpp"
#include "thbench/error.hpp"

using namespace thbench;
using namespace thbench::blink;
using testing::Interval;

namespace {

constexpr EyeState O = EyeState::kOpen;
constexpr EyeState C = EyeState::kClosed;

BlinkSliceConfig config(int t, int stride = 1) {
  BlinkSliceConfig c;
  c.slice_length = t;
  c.stride = stride;
  return c;
}

// A window has a transition iff it overlaps a closed interval without lying
// inside it (intervals are separated by open frames).
int overlap_oracle(int s, int t, const std::vector<Interval>& closed) {
  const int e = s + t - 1;
  for (const auto& iv : closed) {
    const int a = iv.start, b = iv.start + iv.length - 1;
    const bool meets = s <= b && a <= e;
    const bool inside = a <= s && e <= b;
    if (meets && !inside) return 1;
  }
  return 0;
}

}  // namespace

TEST_CASE("label_frames examples") {
  BlinkSliceConfig fixed;
  fixed.policy = ThresholdPolicy::kFixed;
  fixed.threshold = 0.1;
  const std::vector<double> rates{0.3, 0.3, 0.02, 0.3};
  CHECK(label_frames(rates, fixed) == std::vector<EyeState>{O, O, C, O});
  const std::vector<double> high{0.2, 0.5, 0.1};
  CHECK(label_frames(high, fixed) == std::vector<EyeState>{O, O, O});
  CHECK_THROWS_AS(label_frames(std::vector<double>{}, fixed), Error);
  CHECK_THROWS_AS(label_frames(std::vector<double>{0.2, -0.1}, fixed), Error);
}

TEST_CASE("percentile matches the linear definition") {
  const std::vector<double> v{4, 1, 3, 2, 5};
  CHECK(percentile(v, 0) == 1.0);
  CHECK(percentile(v, 100) == 5.0);
  CHECK(percentile(v, 50) == 3.0);
  CHECK(percentile(v, 10) == doctest::Approx(1.4));
  CHECK(percentile(v, 62.5) == doctest::Approx(3.5));
}

TEST_CASE("percentile threshold separates a bimodal corpus") {
  // Bounded modes with exactly 10% closed frames: the default 10th percentile
  // interpolates between the largest closed and the smallest open rate.
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> open(0.25, 0.35), closed(0.02, 0.08);
  std::vector<double> rates;
  std::vector<EyeState> truth;
  for (int i = 0; i < 2000; ++i) {
    const bool c = i % 10 == 3;
    rates.push_back(c ? closed(rng) : open(rng));
    truth.push_back(c ? C : O);
  }
  const BlinkSliceConfig cfg;
  const double thr = open_threshold(rates, cfg);
  CHECK(thr > 0.08);
  CHECK(thr < 0.25);
  CHECK(label_frames(rates, cfg) == truth);
}

TEST_CASE("sample_slices examples") {
  const std::vector<EyeState> all_open(20, O);
  const auto a = sample_slices("v", all_open, config(5));
  CHECK(a.slices.size() == 16);
  CHECK(std::all_of(a.slices.begin(), a.slices.end(), [](const SliceSpec& s) { return s.label == 0; }));

  const std::vector<EyeState> one{O, O, C, O, O};
  const auto b = sample_slices("v", one, config(5));
  REQUIRE(b.slices.size() == 1);
  CHECK(b.slices[0] == SliceSpec{"v", 0, 5, 1});

  const auto c = sample_slices("v", one, config(6));
  CHECK(c.too_short);
  CHECK(c.slices.empty());
}

TEST_CASE("slice count formula over a grid") {
  for (int frames = 0; frames <= 60; ++frames)
    for (int t = 2; t <= 15; ++t)
      for (int stride = 1; stride <= 7; ++stride) {
        const std::vector<EyeState> states(static_cast<std::size_t>(frames), O);
        const auto cfg = config(t, stride);
        const auto got = sample_slices("v", states, cfg).slices.size();
        const std::size_t expected = frames >= t ? static_cast<std::size_t>((frames - t) / stride + 1) : 0;
        CHECK(got == expected);
        CHECK(slice_count(static_cast<std::size_t>(frames), cfg) == expected);
      }
}

TEST_CASE("blink labels match the interval-overlap oracle") {
  std::mt19937_64 rng(52);
  BlinkSliceConfig fixed;
  fixed.policy = ThresholdPolicy::kFixed;
  fixed.threshold = 0.15;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Interval> closed;
    int t = 3;
    std::uniform_int_distribution<int> gap(2, 30), len(1, 6);
    while (true) {
      const int start = t + gap(rng);
      const Interval iv{start, len(rng)};
      if (iv.start + iv.length >= 300) break;
      closed.push_back(iv);
      t = iv.start + iv.length;
    }
    const auto rates = testing::blink_trace(rng, 300, closed);
    const auto states = label_frames(rates, fixed);
    for (int slice_len : {2, 5, 12}) {
      for (int stride : {1, 3}) {
        auto cfg = config(slice_len, stride);
        const auto out = sample_slices("v", states, cfg);
        for (const auto& s : out.slices) CHECK(s.label == overlap_oracle(s.start, s.length, closed));
      }
    }
  }
}

TEST_CASE("slice labels survive mirroring and threshold shifts") {
  std::mt19937_64 rng(53);
  std::bernoulli_distribution flip(0.15);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<EyeState> states(12);
    for (auto& s : states) s = flip(rng) ? C : O;
    std::vector<EyeState> mirrored(states.rbegin(), states.rend());
    const auto cfg = config(12);
    CHECK(sample_slices("v", states, cfg).slices[0].label == sample_slices("v", mirrored, cfg).slices[0].label);
  }
  const auto rates = testing::blink_trace(rng, 100, {{10, 3}, {50, 4}});
  std::vector<double> shifted = rates;
  for (double& r : shifted) r += 0.7;
  BlinkSliceConfig fixed;
  fixed.policy = ThresholdPolicy::kFixed;
  fixed.threshold = 0.12;
  auto fixed_shifted = fixed;
  fixed_shifted.threshold += 0.7;
  CHECK(label_frames(rates, fixed) == label_frames(shifted, fixed_shifted));
}

TEST_CASE("balance_slices") {
  std::vector<SliceSpec> s;
  for (int i = 0; i < 20; ++i) s.push_back({"v", i, 5, i % 5 == 0 ? 1 : 0});
  const auto b = balance_slices(s, 7);
  CHECK(b.size() == 8);
  CHECK(std::count_if(b.begin(), b.end(), [](const SliceSpec& x) { return x.label == 1; }) == 4);
  CHECK(std::is_sorted(b.begin(), b.end(), [](const SliceSpec& x, const SliceSpec& y) { return x.start < y.start; }));
  CHECK(balance_slices(s, 7) == b);
}

TEST_CASE("eye crops") {
  auto f = testing::face_2d(100, {60, 50});
  const std::vector<geom::LandmarkFrame> lms(3, f);
  BlinkSliceConfig cfg;
  const cv::Rect box = eye_box(lms, cfg);
  double x0 = 1e9, x1 = -1e9;
  for (int i = 36; i < 48; ++i) {
    x0 = std::min(x0, f(i, 0));
    x1 = std::max(x1, f(i, 0));
  }
  CHECK(box.x <= x0 - 0.2 * (x1 - x0));
  CHECK(box.x + box.width >= x1 + 0.2 * (x1 - x0));
  CHECK(box.width <= (x1 - x0) * 1.4 + 2);

  std::vector<cv::Mat> frames(3, cv::Mat(120, 120, CV_8UC1, cv::Scalar(200)));
  const auto slice = crop_slice({"v", 0, 3, 0}, frames, lms, cfg);
  REQUIRE(slice.crops.size() == 3);
  CHECK(slice.crops[0].size() == cv::Size(88, 88));
  CHECK(cv::mean(slice.crops[1])[0] == doctest::Approx(200));
  CHECK_THROWS_AS(crop_slice({"v", 1, 3, 0}, frames, lms, cfg), Error);
}

TEST_CASE("slice manifest round trip") {
  testing::TempDir dir;
  const std::vector<SliceSpec> s{{"a", 0, 12, 1}, {"b \"q\"", 5, 12, 0}};
  write_slice_manifest(dir.path() / "slices.jsonl", s);
  CHECK(read_slice_manifest(dir.path() / "slices.jsonl") == s);
  std::ofstream(dir.path() / "bad.jsonl") << "{\"video_id\": 1}\n";
  CHECK_THROWS_AS(read_slice_manifest(dir.path() / "bad.jsonl"), Error);
}

TEST_CASE("config validation") {
  auto c = config(1);
  CHECK_THROWS_AS(c.validate(), Error);
  c = config(5, 0);
  CHECK_THROWS_AS(c.validate(), Error);
  c = config(5);
  c.threshold = 150;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(threshold_policy_from_string(to_string(ThresholdPolicy::kFixed)) == ThresholdPolicy::kFixed);
}
