#include "thbench/geom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <opencv2/imgproc.hpp>

#include "thbench/error.hpp"

namespace thbench::geom {

LandmarkSequence::LandmarkSequence(std::vector<LandmarkFrame> frames, double frame_rate)
    : frames_(std::move(frames)), frame_rate_(frame_rate) {
  require(!frames_.empty(), ErrorCode::kInvalidArgument, "landmark sequence is empty");
  require(std::isfinite(frame_rate_) && frame_rate_ > 0.0, ErrorCode::kInvalidArgument,
          "frame rate must be positive");
  const auto d = frames_.front().cols();
  require(d == 2 || d == 3, ErrorCode::kInvalidArgument, "landmarks must be 2D or 3D");
  for (std::size_t t = 0; t < frames_.size(); ++t) {
    const auto& f = frames_[t];
    require(f.rows() == kNumLandmarks && f.cols() == d, ErrorCode::kInvalidArgument,
            "frame " + std::to_string(t) + " is not 68 x " + std::to_string(d));
    require(f.allFinite(), ErrorCode::kInvalidArgument,
            "frame " + std::to_string(t) + " has non-finite coordinates");
  }
}

std::vector<double> hanning_window(int n) {
  require(n >= 1 && n % 2 == 1, ErrorCode::kInvalidArgument,
          "window size must be odd and positive, got " + std::to_string(n));
  if (n == 1) return {1.0};
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    w[j] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * j / (n - 1));
  return w;
}

namespace {

std::size_t resolve_index(long k, long len, BoundaryPolicy policy) {
  if (k >= 0 && k < len) return static_cast<std::size_t>(k);
  if (len == 1) return 0;
  if (policy == BoundaryPolicy::kClamp) return static_cast<std::size_t>(std::clamp(k, 0L, len - 1));
  const long period = 2 * (len - 1);
  k = ((k % period) + period) % period;
  if (k >= len) k = period - k;
  return static_cast<std::size_t>(k);
}

}  // namespace

std::vector<double> smooth_sequence(std::span<const double> x, const SmoothingConfig& cfg) {
  require(!x.empty(), ErrorCode::kInvalidArgument, "cannot smooth an empty sequence");
  const auto w = hanning_window(cfg.window_size);
  double wsum = 0.0;
  for (double v : w) wsum += v;
  const long half = (cfg.window_size - 1) / 2;
  const long len = static_cast<long>(x.size());

  // Accumulating deviations from the centre sample is algebraically the same
  // weighted mean, but reproduces constant input bit for bit.
  std::vector<double> out(x.size());
  for (long i = 0; i < len; ++i) {
    double acc = 0.0;
    for (long j = 0; j < cfg.window_size; ++j) {
      if (w[j] == 0.0) continue;
      acc += (x[resolve_index(i + j - half, len, cfg.boundary)] - x[i]) * w[j];
    }
    out[i] = x[i] + acc / wsum;
  }
  return out;
}

Eigen::Vector2d eye_center(const LandmarkFrame& lms, const EyeLandmarks& eyes) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (int idx : eyes.right) c += lms.row(idx).head<2>().transpose();
  for (int idx : eyes.left) c += lms.row(idx).head<2>().transpose();
  return c / 12.0;
}

double face_length(const LandmarkFrame& lms) {
  const auto xy = lms.leftCols<2>();
  const double w = xy.col(0).maxCoeff() - xy.col(0).minCoeff();
  const double h = xy.col(1).maxCoeff() - xy.col(1).minCoeff();
  return std::max(w, h);
}

CropPlan plan_crops(const LandmarkSequence& lms, const CropConfig& crop,
                    const SmoothingConfig& smoothing, cv::Size frame_size) {
  require(crop.r1 > 0 && crop.r2 > 0 && crop.side_factor > 0, ErrorCode::kInvalidArgument,
          "crop ratios must be positive");
  for (int idx : crop.eyes.right)
    require(idx >= 0 && idx < kNumLandmarks, ErrorCode::kInvalidArgument, "eye index out of range");
  for (int idx : crop.eyes.left)
    require(idx >= 0 && idx < kNumLandmarks, ErrorCode::kInvalidArgument, "eye index out of range");

  const std::size_t n = lms.size();
  std::vector<double> raw_x(n), raw_y(n);
  double length_sum = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const auto c = eye_center(lms[t], crop.eyes);
    raw_x[t] = c.x();
    raw_y[t] = c.y();
    length_sum += face_length(lms[t]);
  }

  CropPlan plan;
  plan.face_length = length_sum / static_cast<double>(n);
  require(plan.face_length >= 4.0, ErrorCode::kDegenerateFace,
          "mean face length " + std::to_string(plan.face_length) + " px is below 4 px");
  plan.center_x = smooth_sequence(raw_x, smoothing);
  plan.center_y = smooth_sequence(raw_y, smoothing);

  const double l = plan.face_length;
  const int side = static_cast<int>(std::lround(crop.side_factor * l));
  const cv::Rect frame_rect(0, 0, frame_size.width, frame_size.height);
  plan.rects.reserve(n);
  plan.clipped.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    CropRect r{static_cast<int>(std::lround(plan.center_x[t] - crop.r1 * l)),
               static_cast<int>(std::lround(plan.center_y[t] - crop.r2 * l)), side};
    const cv::Rect clipped = cv::Rect(r.x, r.y, r.side, r.side) & frame_rect;
    require(clipped.area() > 0, ErrorCode::kOutOfFrame,
            "crop for frame " + std::to_string(t) + " lies outside the image");
    plan.rects.push_back(r);
    plan.clipped.push_back(clipped);
  }
  return plan;
}

CroppedClip track_and_crop(std::span<const cv::Mat> frames, const LandmarkSequence& lms,
                           const CropConfig& crop, const SmoothingConfig& smoothing) {
  require(frames.size() == lms.size(), ErrorCode::kInvalidArgument,
          "frame count " + std::to_string(frames.size()) + " != landmark count " +
              std::to_string(lms.size()));
  const cv::Size size = frames.front().size();
  for (const auto& f : frames)
    require(f.size() == size && f.type() == frames.front().type(), ErrorCode::kInvalidArgument,
            "frames differ in size or type");

  CroppedClip clip;
  clip.plan = plan_crops(lms, crop, smoothing, size);
  clip.frames.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const CropRect& r = clip.plan.rects[t];
    const cv::Rect& src = clip.plan.clipped[t];
    cv::Mat out = cv::Mat::zeros(r.side, r.side, frames[t].type());
    frames[t](src).copyTo(out(cv::Rect(src.x - r.x, src.y - r.y, src.width, src.height)));
    if (crop.output_size > 0 && crop.output_size != r.side) {
      cv::Mat resized;
      cv::resize(out, resized, cv::Size(crop.output_size, crop.output_size), 0, 0,
                 crop.output_size < r.side ? cv::INTER_AREA : cv::INTER_LINEAR);
      out = resized;
    }
    clip.frames.push_back(std::move(out));
  }
  return clip;
}

CanonicalFace::CanonicalFace(Eigen::MatrixXd points) : points_(std::move(points)) {
  require(points_.rows() == kNumLandmarks && points_.cols() == 3, ErrorCode::kInvalidArgument,
          "canonical face must be 68 x 3");
  require(points_.allFinite(), ErrorCode::kInvalidArgument, "canonical face has non-finite points");
  const double scale = points_.cwiseAbs().maxCoeff();
  const Eigen::RowVector3d centroid = points_.colwise().mean();
  require(centroid.norm() <= 1e-9 * std::max(scale, 1.0), ErrorCode::kInvalidArgument,
          "canonical face is not zero-mean");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(points_);
  const auto& sv = svd.singularValues();
  require(sv(2) > 1e-9 * sv(0), ErrorCode::kDegenerateGeometry,
          "canonical face is not a rank-3 point cloud");
}

CanonicalFace CanonicalFace::centered(Eigen::MatrixXd points) {
  require(points.cols() == 3, ErrorCode::kInvalidArgument, "canonical face must be 68 x 3");
  const Eigen::RowVector3d centroid = points.colwise().mean();
  points.rowwise() -= centroid;
  return CanonicalFace(std::move(points));
}

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

Eigen::Matrix3d rotation_from_euler(const EulerAngles& a) {
  const Eigen::Matrix3d rx = Eigen::AngleAxisd(a.pitch * kDeg, Eigen::Vector3d::UnitX()).matrix();
  const Eigen::Matrix3d ry = Eigen::AngleAxisd(a.yaw * kDeg, Eigen::Vector3d::UnitY()).matrix();
  const Eigen::Matrix3d rz = Eigen::AngleAxisd(a.roll * kDeg, Eigen::Vector3d::UnitZ()).matrix();
  return rx * ry * rz;
}

EulerAngles euler_from_rotation(const Eigen::Matrix3d& r) {
  EulerAngles a;
  const double sy = std::clamp(r(0, 2), -1.0, 1.0);
  a.yaw = std::asin(sy) / kDeg;
  if (std::abs(sy) < 1.0 - 1e-12) {
    a.pitch = std::atan2(-r(1, 2), r(2, 2)) / kDeg;
    a.roll = std::atan2(-r(0, 1), r(0, 0)) / kDeg;
  } else {
    // Gimbal lock: only pitch + roll is observable, attribute it to pitch.
    a.pitch = std::atan2(r(2, 1), r(1, 1)) / kDeg;
    a.roll = 0.0;
  }
  return a;
}

PoseEstimate estimate_pose(const LandmarkFrame& observed, const CanonicalFace& canon,
                           const PoseOptions& opts) {
  require(observed.rows() == kNumLandmarks && observed.cols() == 3, ErrorCode::kInvalidArgument,
          "pose estimation needs 68 x 3 landmarks");
  require(observed.allFinite(), ErrorCode::kInvalidArgument, "non-finite landmarks");

  const Eigen::MatrixXd& src = canon.points();  // already zero-mean
  const Eigen::RowVector3d obs_mean = observed.colwise().mean();
  const Eigen::MatrixXd dst = observed.rowwise() - obs_mean;

  Eigen::JacobiSVD<Eigen::MatrixXd> rank_check(dst);
  const auto& osv = rank_check.singularValues();
  require(osv(0) > 0.0 && osv(2) > 1e-9 * osv(0), ErrorCode::kDegenerateGeometry,
          "observed landmarks are rank deficient");

  const Eigen::Matrix3d cov = src.transpose() * dst;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d d = Eigen::Vector3d::Ones();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2) = -1.0;

  PoseEstimate est;
  est.rotation = svd.matrixV() * d.asDiagonal() * svd.matrixU().transpose();
  if (opts.estimate_scale)
    est.scale = svd.singularValues().dot(d) / src.squaredNorm();
  est.translation = obs_mean.transpose();  // canonical centroid is the origin

  const Eigen::MatrixXd fitted =
      (est.scale * src * est.rotation.transpose()).rowwise() + obs_mean;
  est.residual = std::sqrt((fitted - observed).rowwise().squaredNorm().mean());
  est.angles = euler_from_rotation(est.rotation);
  return est;
}

PoseTrace::PoseTrace(Eigen::MatrixX3d angles, std::vector<double> residuals)
    : angles_(std::move(angles)), residuals_(std::move(residuals)) {
  require(static_cast<std::size_t>(angles_.rows()) == residuals_.size(),
          ErrorCode::kInvalidArgument, "pose trace angle/residual length mismatch");
  for (Eigen::Index t = 0; t < angles_.rows(); ++t) {
    require(angles_.row(t).allFinite(), ErrorCode::kInvalidArgument, "non-finite pose angle");
    require(std::abs(angles_(t, 1)) <= 180.0, ErrorCode::kInvalidArgument,
            "yaw outside [-180, 180]");
    require(residuals_[t] >= 0.0, ErrorCode::kInvalidArgument, "negative residual");
  }
}

std::vector<double> PoseTrace::axis(Axis a) const {
  const auto col = angles_.col(static_cast<int>(a));
  return {col.begin(), col.end()};
}

PoseTrace estimate_pose_trace(const LandmarkSequence& lms3d, const CanonicalFace& canon,
                              const PoseOptions& opts) {
  require(lms3d.dims() == 3, ErrorCode::kInvalidArgument, "pose trace needs 3D landmarks");
  Eigen::MatrixX3d angles(static_cast<Eigen::Index>(lms3d.size()), 3);
  std::vector<double> residuals(lms3d.size());
  for (std::size_t t = 0; t < lms3d.size(); ++t) {
    const auto est = estimate_pose(lms3d[t], canon, opts);
    angles.row(static_cast<Eigen::Index>(t)) << est.angles.pitch, est.angles.yaw, est.angles.roll;
    residuals[t] = est.residual;
  }
  return PoseTrace(std::move(angles), std::move(residuals));
}

double head_motion_score(std::span<const double> angles) {
  if (angles.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(angles.begin(), angles.end());
  return std::abs(*hi - *lo);
}

double head_motion_score(const PoseTrace& trace, Axis axis) {
  const auto values = trace.axis(axis);
  return head_motion_score(values);
}

double eye_open_rate(const LandmarkFrame& lms, const EyeLandmarks& eyes) {
  require(lms.rows() == kNumLandmarks && lms.cols() >= 2, ErrorCode::kInvalidArgument,
          "eye open rate needs a 68-point frame");
  auto ratio = [&](const std::array<int, 6>& idx) {
    auto p = [&](int k) -> Eigen::Vector2d { return lms.row(idx[k]).head<2>().transpose(); };
    const double width = (p(0) - p(3)).norm();
    require(width > 0.0, ErrorCode::kDegenerateGeometry, "eye width is zero");
    return ((p(1) - p(5)).norm() + (p(2) - p(4)).norm()) / (2.0 * width);
  };
  return 0.5 * (ratio(eyes.right) + ratio(eyes.left));
}

}  // namespace thbench::geom
