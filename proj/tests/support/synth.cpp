#include "synth.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>

#include <opencv2/imgcodecs.hpp>

namespace thbench::testing {

std::filesystem::path data_dir() { return THBENCH_TEST_DATA_DIR; }

cv::Mat camera_image() {
  cv::Mat img = cv::imread((data_dir() / "camera.pgm").string(), cv::IMREAD_GRAYSCALE);
  if (img.empty()) throw std::runtime_error("missing test image camera.pgm");
  return img;
}

geom::LandmarkFrame face_2d(double length, const Eigen::Vector2d& eye_center) {
  const auto& canon = geom::CanonicalFace::standard().points();
  geom::LandmarkFrame xy = canon.leftCols<2>();
  const double extent = std::max(xy.col(0).maxCoeff() - xy.col(0).minCoeff(),
                                 xy.col(1).maxCoeff() - xy.col(1).minCoeff());
  xy *= length / extent;
  const Eigen::Vector2d c = geom::eye_center(xy);
  xy.rowwise() += (eye_center - c).transpose();
  return xy;
}

geom::LandmarkFrame posed_face_3d(const geom::EulerAngles& angles, const Eigen::Vector3d& t,
                                  double scale) {
  const Eigen::Matrix3d r = geom::rotation_from_euler(angles);
  const auto& canon = geom::CanonicalFace::standard().points();
  geom::LandmarkFrame out = (scale * canon * r.transpose()).rowwise() + t.transpose();
  return out;
}

void set_eye_shape(geom::LandmarkFrame& lms, double width, double gap) {
  const geom::EyeLandmarks eyes;
  for (const auto& idx : {eyes.right, eyes.left}) {
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (int i : idx) c += lms.row(i).head<2>().transpose();
    c /= 6.0;
    const double hw = width / 2, hg = gap / 2;
    const double pts[6][2] = {{-hw, 0},         {-hw / 3, -hg}, {hw / 3, -hg},
                              {hw, 0},          {hw / 3, hg},   {-hw / 3, hg}};
    for (int k = 0; k < 6; ++k) {
      lms(idx[k], 0) = c.x() + pts[k][0];
      lms(idx[k], 1) = c.y() + pts[k][1];
    }
  }
}

cv::Mat random_image(std::mt19937_64& rng, int rows, int cols, int type) {
  cv::Mat img(rows, cols, type);
  std::uniform_real_distribution<double> u(0.0, 255.0);
  cv::Mat tmp(rows, cols, CV_MAKETYPE(CV_64F, CV_MAT_CN(type)));
  double* p = tmp.ptr<double>();
  for (std::size_t i = 0; i < tmp.total() * tmp.channels(); ++i) p[i] = u(rng);
  tmp.convertTo(img, type);
  return img;
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = std::filesystem::temp_directory_path() /
          ("thbench-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::vector<double> blink_trace(std::mt19937_64& rng, int frames, const std::vector<Interval>& closed_intervals,
                                double open, double closed) {
  std::uniform_real_distribution<double> jitter(-0.01, 0.01);
  std::vector<double> rates(static_cast<std::size_t>(frames));
  for (double& r : rates) r = open + jitter(rng);
  for (const auto& iv : closed_intervals)
    for (int t = iv.start; t < iv.start + iv.length && t < frames; ++t)
      rates[static_cast<std::size_t>(t)] = std::max(0.0, closed + jitter(rng));
  return rates;
}

}  // namespace thbench::testing
