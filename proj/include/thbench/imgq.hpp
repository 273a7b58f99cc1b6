#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <opencv2/core.hpp>

namespace thbench::imgq {

/// Converts to a single-channel CV_64F image on the input's intensity scale.
/// Colour input is assumed BGR and mapped with BT.601 luma weights.
cv::Mat to_luma(const cv::Mat& img);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 255.0;
};

/// Mean SSIM over every Gaussian-weighted window that lies fully inside the
/// image. Colour input is compared on luma.
double ssim(const cv::Mat& a, const cv::Mat& b, const SsimParams& params = {});

/// Returned by psnr() for identical inputs.
inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

/// 10 log10(peak^2 / MSE), MSE taken over all channels.
double psnr(const cv::Mat& a, const cv::Mat& b, double peak = 255.0);

struct CpbdParams {
  int block_size = 64;
  // A block is an edge block when more than this fraction of its pixels are
  // Canny edges.
  double edge_block_fraction = 0.002;
  double beta = 3.6;
  // Just-noticeable blur widths for block contrast <= contrast_split and above.
  double jnb_width_low_contrast = 5.0;
  double jnb_width_high_contrast = 3.0;
  int contrast_split = 50;
  // Histogram bucket (percent) up to which blur is considered not noticeable.
  int jnb_bucket = 63;
  int max_edge_half_width = 100;
  double canny_sigma = 1.0;
  double canny_low = 0.1;
  double canny_high = 0.2;
  // Intensity value that maps to 255 in the internal 8-bit scale.
  double peak = 255.0;
};

struct CpbdResult {
  double score = 0.0;
  bool edges_detected = false;
  std::size_t edge_count = 0;
};

/// No-reference sharpness: cumulative probability that blur at the detected
/// edges stays below the just-noticeable level. Higher is sharper. An image
/// with no measurable edges scores 0 with edges_detected = false.
CpbdResult cpbd(const cv::Mat& img, const CpbdParams& params = {});

/// Canny edge map (CV_8U, 0/1) of a CV_64F image: mask-normalised Gaussian
/// smoothing, Sobel gradients, four-direction non-maximum suppression and
/// 8-connected hysteresis. The one-pixel border is never an edge.
cv::Mat canny_edges(const cv::Mat& gray, double sigma, double low, double high);

/// Thinned vertical-edge map (CV_8U, 0/1) from the horizontal Sobel response.
cv::Mat sobel_vertical_edges(const cv::Mat& gray);

/// Horizontal edge widths (CV_64F, 0 where not measured) at the given edge
/// pixels whose gradient direction quantises to 0 or 180 degrees.
cv::Mat marziliano_widths(const cv::Mat& gray, const cv::Mat& edges, int max_half_width = 100);

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t sample_count = 0;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
};

/// Sample mean and unbiased covariance of the rows of `features` (n x d).
GaussianStats gaussian_stats(const Eigen::MatrixXd& features);

/// ||mu_p - mu_q||^2 + Tr(S_p + S_q - 2 (S_p S_q)^{1/2}), with the square-root
/// trace taken from the symmetric product S_p^{1/2} S_q S_p^{1/2}.
double frechet_distance(const GaussianStats& p, const GaussianStats& q);

/// Per-frame Frechet distance between the statistics of real and fake features
/// inside a centred window of 2 * half_window + 1 frames. This is a local proxy,
/// not FID: FID is a set-level statistic.
std::vector<double> windowed_frechet_distance(const Eigen::MatrixXd& real_features,
                                              const Eigen::MatrixXd& fake_features,
                                              int half_window);

struct QualityScores {
  std::optional<double> ssim;
  std::optional<double> psnr;
  std::optional<double> cpbd;
  std::optional<double> fid;
};

}  // namespace thbench::imgq
