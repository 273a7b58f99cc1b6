#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "thbench/geom.hpp"

namespace thbench::blink {

enum class ThresholdPolicy { kPercentile, kFixed };

struct BlinkSliceConfig {
  int slice_length = 12;
  ThresholdPolicy policy = ThresholdPolicy::kPercentile;
  // Percentile in [0, 100] or a fixed open-rate threshold, depending on policy.
  double threshold = 10.0;
  int stride = 1;
  // Eye boxes grow by this fraction of their size on every side.
  double crop_margin = 0.2;
  int crop_width = 88;
  int crop_height = 88;

  void validate() const;
};

std::string to_string(ThresholdPolicy p);
ThresholdPolicy threshold_policy_from_string(const std::string& s);

enum class EyeState : std::uint8_t { kOpen, kClosed };

/// Linear-interpolation percentile (the usual "linear" definition).
double percentile(std::span<const double> values, double q);

/// Threshold implied by the config over a corpus of open rates.
double open_threshold(std::span<const double> corpus_rates, const BlinkSliceConfig& cfg);

/// A frame is closed iff its rate is strictly below the threshold. With the
/// percentile policy the threshold comes from `corpus_rates`, or from `rates`
/// themselves when no corpus is given.
std::vector<EyeState> label_frames(std::span<const double> rates, const BlinkSliceConfig& cfg,
                                   std::span<const double> corpus_rates = {});

std::vector<EyeState> label_frames_with_threshold(std::span<const double> rates, double threshold);

struct SliceSpec {
  std::string video_id;
  int start = 0;
  int length = 0;
  int label = 0;  // 1 = blink

  friend bool operator==(const SliceSpec&, const SliceSpec&) = default;
};

struct SliceSampling {
  std::vector<SliceSpec> slices;
  bool too_short = false;  // fewer frames than one slice
};

/// Number of windows for T frames: floor((T - t) / stride) + 1, or 0 if T < t.
std::size_t slice_count(std::size_t frames, const BlinkSliceConfig& cfg);

/// Sliding windows over per-frame states; a window is a blink iff two
/// consecutive frames inside it differ.
SliceSampling sample_slices(const std::string& video_id, std::span<const EyeState> states,
                            const BlinkSliceConfig& cfg);

/// Keeps every minority-class slice and an equally sized random subset of the
/// majority class. Output preserves input order.
std::vector<SliceSpec> balance_slices(std::span<const SliceSpec> slices, std::uint64_t seed);

/// One box around both eyes over all given frames, with the configured margin.
cv::Rect eye_box(std::span<const geom::LandmarkFrame> frames, const BlinkSliceConfig& cfg,
                 const geom::EyeLandmarks& eyes = {});

struct BlinkSlice {
  SliceSpec spec;
  std::vector<cv::Mat> crops;
};

/// Crops the eye region of the slice's frames, resampled to the configured
/// size. Area outside the frame is zero-filled.
BlinkSlice crop_slice(const SliceSpec& spec, std::span<const cv::Mat> frames,
                      std::span<const geom::LandmarkFrame> landmarks, const BlinkSliceConfig& cfg,
                      const geom::EyeLandmarks& eyes = {});

/// JSON lines: {"video_id", "start", "t", "label"}.
void write_slice_manifest(const std::filesystem::path& path, std::span<const SliceSpec> slices);
std::vector<SliceSpec> read_slice_manifest(const std::filesystem::path& path);

}  // namespace thbench::blink
