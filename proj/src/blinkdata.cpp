#include "thbench/blinkdata.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include "text_util.hpp"
#include "thbench/error.hpp"

namespace thbench::blink {

void BlinkSliceConfig::validate() const {
  require(slice_length >= 2, ErrorCode::kConfiguration, "blink slice length must be >= 2");
  require(stride >= 1, ErrorCode::kConfiguration, "blink slice stride must be >= 1");
  require(std::isfinite(threshold), ErrorCode::kConfiguration, "blink threshold must be finite");
  if (policy == ThresholdPolicy::kPercentile)
    require(threshold >= 0 && threshold <= 100, ErrorCode::kConfiguration,
            "blink percentile must lie in [0, 100]");
  require(crop_margin >= 0, ErrorCode::kConfiguration, "eye crop margin must be >= 0");
  require(crop_width > 0 && crop_height > 0, ErrorCode::kConfiguration, "eye crop size must be positive");
}

std::string to_string(ThresholdPolicy p) { return p == ThresholdPolicy::kFixed ? "fixed" : "percentile"; }

ThresholdPolicy threshold_policy_from_string(const std::string& s) {
  if (s == "percentile") return ThresholdPolicy::kPercentile;
  if (s == "fixed") return ThresholdPolicy::kFixed;
  fail(ErrorCode::kConfiguration, "unknown threshold policy '" + s + "'");
}

double percentile(std::span<const double> values, double q) {
  require(!values.empty(), ErrorCode::kInvalidArgument, "percentile of an empty set");
  require(q >= 0 && q <= 100, ErrorCode::kInvalidArgument, "percentile must lie in [0, 100]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

namespace {

void check_rates(std::span<const double> rates, const char* what) {
  for (double r : rates)
    require(std::isfinite(r) && r >= 0, ErrorCode::kInvalidArgument,
            std::string(what) + ": open rates must be finite and non-negative");
}

}  // namespace

double open_threshold(std::span<const double> corpus_rates, const BlinkSliceConfig& cfg) {
  if (cfg.policy == ThresholdPolicy::kFixed) return cfg.threshold;
  require(!corpus_rates.empty(), ErrorCode::kInvalidArgument, "open_threshold: empty corpus");
  check_rates(corpus_rates, "open_threshold");
  return percentile(corpus_rates, cfg.threshold);
}

std::vector<EyeState> label_frames_with_threshold(std::span<const double> rates, double threshold) {
  require(!rates.empty(), ErrorCode::kInvalidArgument, "label_frames: empty open-rate sequence");
  check_rates(rates, "label_frames");
  std::vector<EyeState> out;
  out.reserve(rates.size());
  for (double r : rates) out.push_back(r < threshold ? EyeState::kClosed : EyeState::kOpen);
  return out;
}

std::vector<EyeState> label_frames(std::span<const double> rates, const BlinkSliceConfig& cfg,
                                   std::span<const double> corpus_rates) {
  require(!rates.empty(), ErrorCode::kInvalidArgument, "label_frames: empty open-rate sequence");
  return label_frames_with_threshold(rates, open_threshold(corpus_rates.empty() ? rates : corpus_rates, cfg));
}

std::size_t slice_count(std::size_t frames, const BlinkSliceConfig& cfg) {
  const auto t = static_cast<std::size_t>(cfg.slice_length);
  if (frames < t) return 0;
  return (frames - t) / static_cast<std::size_t>(cfg.stride) + 1;
}

SliceSampling sample_slices(const std::string& video_id, std::span<const EyeState> states,
                            const BlinkSliceConfig& cfg) {
  cfg.validate();
  SliceSampling out;
  const std::size_t n = slice_count(states.size(), cfg);
  out.too_short = n == 0;
  // change[i] = 1 when frames i and i + 1 differ; prefix sums give O(1) windows.
  std::vector<int> prefix(states.size() + 1, 0);
  for (std::size_t i = 0; i + 1 < states.size(); ++i)
    prefix[i + 1] = prefix[i] + (states[i] != states[i + 1] ? 1 : 0);
  out.slices.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t s = k * static_cast<std::size_t>(cfg.stride);
    const std::size_t last = s + static_cast<std::size_t>(cfg.slice_length) - 1;
    // Transitions between (s, s+1) ... (last-1, last).
    const int changes = prefix[last] - prefix[s];
    out.slices.push_back({video_id, static_cast<int>(s), cfg.slice_length, changes > 0 ? 1 : 0});
  }
  return out;
}

std::vector<SliceSpec> balance_slices(std::span<const SliceSpec> slices, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < slices.size(); ++i) (slices[i].label ? pos : neg).push_back(i);
  auto& major = pos.size() > neg.size() ? pos : neg;
  const auto& minor = pos.size() > neg.size() ? neg : pos;
  std::mt19937_64 rng(seed);
  std::shuffle(major.begin(), major.end(), rng);
  major.resize(minor.size());
  std::vector<std::size_t> keep(pos.begin(), pos.end());
  keep.insert(keep.end(), neg.begin(), neg.end());
  std::sort(keep.begin(), keep.end());
  std::vector<SliceSpec> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(slices[i]);
  return out;
}

cv::Rect eye_box(std::span<const geom::LandmarkFrame> frames, const BlinkSliceConfig& cfg,
                 const geom::EyeLandmarks& eyes) {
  require(!frames.empty(), ErrorCode::kInvalidArgument, "eye_box: no frames");
  double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
  for (const auto& f : frames) {
    require(f.rows() == geom::kNumLandmarks && f.cols() >= 2, ErrorCode::kInvalidArgument,
            "eye_box: expected 68 x D landmarks");
    for (const auto& side : {eyes.right, eyes.left})
      for (int i : side) {
        x0 = std::min(x0, f(i, 0));
        x1 = std::max(x1, f(i, 0));
        y0 = std::min(y0, f(i, 1));
        y1 = std::max(y1, f(i, 1));
      }
  }
  require(std::isfinite(x0 + x1 + y0 + y1) && x1 > x0 && y1 > y0, ErrorCode::kDegenerateGeometry,
          "eye_box: degenerate eye landmarks");
  const double mx = cfg.crop_margin * (x1 - x0), my = cfg.crop_margin * (y1 - y0);
  const int left = static_cast<int>(std::floor(x0 - mx)), top = static_cast<int>(std::floor(y0 - my));
  const int right = static_cast<int>(std::ceil(x1 + mx)), bottom = static_cast<int>(std::ceil(y1 + my));
  return {left, top, right - left, bottom - top};
}

BlinkSlice crop_slice(const SliceSpec& spec, std::span<const cv::Mat> frames,
                      std::span<const geom::LandmarkFrame> landmarks, const BlinkSliceConfig& cfg,
                      const geom::EyeLandmarks& eyes) {
  require(frames.size() == landmarks.size(), ErrorCode::kInvalidArgument,
          "crop_slice: frame and landmark counts differ");
  require(spec.start >= 0 && spec.length > 0 &&
              static_cast<std::size_t>(spec.start + spec.length) <= frames.size(),
          ErrorCode::kInvalidArgument, "crop_slice: slice outside the video");
  const auto first = static_cast<std::size_t>(spec.start), len = static_cast<std::size_t>(spec.length);
  const cv::Rect box = eye_box(landmarks.subspan(first, len), cfg, eyes);
  BlinkSlice out{spec, {}};
  out.crops.reserve(len);
  for (std::size_t i = first; i < first + len; ++i) {
    const cv::Mat& f = frames[i];
    cv::Mat patch = cv::Mat::zeros(box.height, box.width, f.type());
    const cv::Rect inside = box & cv::Rect(0, 0, f.cols, f.rows);
    if (inside.area() > 0)
      f(inside).copyTo(patch(cv::Rect(inside.x - box.x, inside.y - box.y, inside.width, inside.height)));
    cv::Mat resized;
    cv::resize(patch, resized, cv::Size(cfg.crop_width, cfg.crop_height), 0, 0, cv::INTER_AREA);
    out.crops.push_back(std::move(resized));
  }
  return out;
}

void write_slice_manifest(const std::filesystem::path& path, std::span<const SliceSpec> slices) {
  std::string text;
  for (const auto& s : slices) {
    const nlohmann::json j = {{"video_id", s.video_id}, {"start", s.start}, {"t", s.length}, {"label", s.label}};
    text += j.dump();
    text += '\n';
  }
  detail::write_file(path, text);
}

std::vector<SliceSpec> read_slice_manifest(const std::filesystem::path& path) {
  std::vector<SliceSpec> out;
  std::size_t line_no = 0;
  for (const auto& line : detail::read_lines(path)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SliceSpec s{j.at("video_id").get<std::string>(), j.at("start").get<int>(), j.at("t").get<int>(),
                  j.at("label").get<int>()};
      require(s.start >= 0 && s.length >= 2 && (s.label == 0 || s.label == 1), ErrorCode::kInvalidInput,
              path.string() + ":" + std::to_string(line_no) + ": invalid slice");
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kInvalidInput, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace thbench::blink
