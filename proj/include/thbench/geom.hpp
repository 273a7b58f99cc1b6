#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <opencv2/core.hpp>

namespace thbench::geom {

inline constexpr int kNumLandmarks = 68;

/// One frame of landmarks, 68 rows by D (2 or 3) columns, in pixels.
using LandmarkFrame = Eigen::MatrixXd;

class LandmarkSequence {
 public:
  LandmarkSequence(std::vector<LandmarkFrame> frames, double frame_rate);

  std::size_t size() const noexcept { return frames_.size(); }
  int dims() const noexcept { return static_cast<int>(frames_.front().cols()); }
  double frame_rate() const noexcept { return frame_rate_; }

  const LandmarkFrame& operator[](std::size_t t) const { return frames_[t]; }
  const std::vector<LandmarkFrame>& frames() const noexcept { return frames_; }

 private:
  std::vector<LandmarkFrame> frames_;
  double frame_rate_;
};

/// Indices into the 68-point iBUG layout. Each eye is listed as
/// outer corner, two upper lid points, inner corner, two lower lid points.
struct EyeLandmarks {
  std::array<int, 6> right{36, 37, 38, 39, 40, 41};
  std::array<int, 6> left{42, 43, 44, 45, 46, 47};
};

enum class BoundaryPolicy { kReflect, kClamp };

struct SmoothingConfig {
  int window_size = 11;
  BoundaryPolicy boundary = BoundaryPolicy::kReflect;
};

struct CropConfig {
  double r1 = 10.0 / 9.0;
  double r2 = 8.0 / 9.0;
  double side_factor = 41.0 / 18.0;
  // Crops are resampled to output_size x output_size when > 0.
  int output_size = 0;
  EyeLandmarks eyes{};
};

/// Hanning weights w_j = 0.5 - 0.5 cos(2 pi j / (N - 1)). N = 1 yields [1].
std::vector<double> hanning_window(int n);

/// Weight-normalised Hanning convolution. Indices falling outside [0, T) are
/// resolved by the boundary policy; reflect mirrors about the end samples
/// without repeating them (x[-1] = x[1]).
std::vector<double> smooth_sequence(std::span<const double> x, const SmoothingConfig& cfg);

struct CropRect {
  int x = 0;
  int y = 0;
  int side = 0;

  friend bool operator==(const CropRect&, const CropRect&) = default;
};

struct CropPlan {
  std::vector<CropRect> rects;       // nominal square per frame
  std::vector<cv::Rect> clipped;     // nominal square intersected with the frame
  std::vector<double> center_x;      // smoothed eye-area centres
  std::vector<double> center_y;
  double face_length = 0.0;          // mean landmark bounding-box extent
};

struct CroppedClip {
  std::vector<cv::Mat> frames;
  CropPlan plan;
};

/// Mean of the twelve eye-contour points of one frame (x, y).
Eigen::Vector2d eye_center(const LandmarkFrame& lms, const EyeLandmarks& eyes = {});

/// Face length of one frame: the larger side of the landmark bounding box.
double face_length(const LandmarkFrame& lms);

/// Computes per-frame crop squares without touching pixels.
CropPlan plan_crops(const LandmarkSequence& lms, const CropConfig& crop,
                    const SmoothingConfig& smoothing, cv::Size frame_size);

/// Crops every frame with the planned square. Regions extending past the frame
/// border are zero-filled so that all crops share the nominal side length.
CroppedClip track_and_crop(std::span<const cv::Mat> frames, const LandmarkSequence& lms,
                           const CropConfig& crop, const SmoothingConfig& smoothing);

class CanonicalFace {
 public:
  /// Validates that points is 68 x 3, zero-mean and of rank 3.
  explicit CanonicalFace(Eigen::MatrixXd points);

  /// Recentres the given points before validation.
  static CanonicalFace centered(Eigen::MatrixXd points);

  /// Mean-shape asset shipped with the library.
  static const CanonicalFace& standard();

  const Eigen::MatrixXd& points() const noexcept { return points_; }

 private:
  Eigen::MatrixXd points_;
};

struct EulerAngles {
  double pitch = 0.0;
  double yaw = 0.0;
  double roll = 0.0;
};

/// R = Rx(pitch) * Ry(yaw) * Rz(roll); angles in degrees.
Eigen::Matrix3d rotation_from_euler(const EulerAngles& angles);
EulerAngles euler_from_rotation(const Eigen::Matrix3d& r);

struct PoseOptions {
  bool estimate_scale = true;
};

struct PoseEstimate {
  EulerAngles angles;
  double residual = 0.0;  // RMS distance between fitted canonical and observed
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double scale = 1.0;
};

/// Least-squares similarity (or rigid) alignment of the canonical face onto
/// the observed 3D landmarks, closed form via SVD of the cross-covariance.
PoseEstimate estimate_pose(const LandmarkFrame& observed, const CanonicalFace& canon,
                           const PoseOptions& opts = {});

enum class Axis { kPitch = 0, kYaw = 1, kRoll = 2 };

class PoseTrace {
 public:
  PoseTrace() = default;
  PoseTrace(Eigen::MatrixX3d angles, std::vector<double> residuals);

  std::size_t size() const noexcept { return static_cast<std::size_t>(angles_.rows()); }
  const Eigen::MatrixX3d& angles() const noexcept { return angles_; }
  const std::vector<double>& residuals() const noexcept { return residuals_; }
  std::vector<double> axis(Axis a) const;

 private:
  Eigen::MatrixX3d angles_;
  std::vector<double> residuals_;
};

PoseTrace estimate_pose_trace(const LandmarkSequence& lms3d, const CanonicalFace& canon,
                              const PoseOptions& opts = {});

/// |max - min| of the chosen angle over the clip.
double head_motion_score(const PoseTrace& trace, Axis axis = Axis::kYaw);
double head_motion_score(std::span<const double> angles);

/// Eye aspect ratio averaged over both eyes:
/// (|p2 - p6| + |p3 - p5|) / (2 |p1 - p4|).
double eye_open_rate(const LandmarkFrame& lms, const EyeLandmarks& eyes = {});

}  // namespace thbench::geom
