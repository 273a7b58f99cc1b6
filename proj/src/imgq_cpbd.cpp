#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <opencv2/imgproc.hpp>

#include "thbench/error.hpp"
#include "thbench/imgq.hpp"

namespace thbench::imgq {
namespace {

// Gaussian smoothing that renormalises by the kernel mass falling inside the
// image, so a constant image stays constant up to the border.
cv::Mat masked_gaussian(const cv::Mat& src, double sigma) {
  const int radius = static_cast<int>(4.0 * sigma + 0.5);
  std::vector<double> k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));

  auto pass = [&](const cv::Mat& in, bool horizontal) {
    cv::Mat out(in.size(), CV_64F);
    for (int r = 0; r < in.rows; ++r) {
      for (int c = 0; c < in.cols; ++c) {
        double acc = 0.0, mass = 0.0;
        for (int j = -radius; j <= radius; ++j) {
          const int rr = horizontal ? r : r + j;
          const int cc = horizontal ? c + j : c;
          if (rr < 0 || rr >= in.rows || cc < 0 || cc >= in.cols) continue;
          acc += k[j + radius] * in.at<double>(rr, cc);
          mass += k[j + radius];
        }
        out.at<double>(r, c) = acc / mass;
      }
    }
    return out;
  };
  return pass(pass(src, true), false);
}

}  // namespace

cv::Mat canny_edges(const cv::Mat& gray, double sigma, double low, double high) {
  require(gray.type() == CV_64FC1, ErrorCode::kInvalidArgument, "canny expects CV_64FC1");
  const cv::Mat smoothed = sigma > 0 ? masked_gaussian(gray, sigma) : gray;

  cv::Mat gx, gy;
  cv::Sobel(smoothed, gx, CV_64F, 1, 0, 3, 1.0, 0.0, cv::BORDER_REFLECT);
  cv::Sobel(smoothed, gy, CV_64F, 0, 1, 3, 1.0, 0.0, cv::BORDER_REFLECT);
  cv::Mat mag;
  cv::magnitude(gx, gy, mag);

  const int rows = gray.rows, cols = gray.cols;
  cv::Mat candidate = cv::Mat::zeros(rows, cols, CV_8U);
  for (int r = 1; r + 1 < rows; ++r) {
    for (int c = 1; c + 1 < cols; ++c) {
      const double m = mag.at<double>(r, c);
      if (m < low || m == 0.0) continue;
      double angle = std::atan2(gy.at<double>(r, c), gx.at<double>(r, c)) * 180.0 / std::numbers::pi;
      if (angle < 0) angle += 180.0;
      int dr = 0, dc = 0;
      if (angle < 22.5 || angle >= 157.5) {
        dc = 1;
      } else if (angle < 67.5) {
        dr = 1;
        dc = 1;
      } else if (angle < 112.5) {
        dr = 1;
      } else {
        dr = 1;
        dc = -1;
      }
      if (m >= mag.at<double>(r + dr, c + dc) && m >= mag.at<double>(r - dr, c - dc))
        candidate.at<uchar>(r, c) = m >= high ? 2 : 1;
    }
  }

  // Hysteresis: keep weak candidates 8-connected to a strong one.
  cv::Mat edges = cv::Mat::zeros(rows, cols, CV_8U);
  std::vector<cv::Point> stack;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (candidate.at<uchar>(r, c) == 2) {
        edges.at<uchar>(r, c) = 1;
        stack.emplace_back(c, r);
      }
  while (!stack.empty()) {
    const cv::Point p = stack.back();
    stack.pop_back();
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        const int r = p.y + dr, c = p.x + dc;
        if (r < 0 || r >= rows || c < 0 || c >= cols) continue;
        if (candidate.at<uchar>(r, c) && !edges.at<uchar>(r, c)) {
          edges.at<uchar>(r, c) = 1;
          stack.emplace_back(c, r);
        }
      }
  }
  return edges;
}

cv::Mat sobel_vertical_edges(const cv::Mat& gray) {
  require(gray.type() == CV_64FC1, ErrorCode::kInvalidArgument, "sobel expects CV_64FC1");
  cv::Mat gx;
  cv::Sobel(gray, gx, CV_64F, 1, 0, 3, 1.0 / 8.0, 0.0, cv::BORDER_REFLECT);
  cv::Mat strength = gx.mul(gx);
  const double thresh = 2.0 * std::sqrt(cv::mean(strength)[0]);
  strength.setTo(0.0, strength <= thresh);

  const int rows = gray.rows, cols = gray.cols;
  auto at = [&](int r, int c) {
    return (r < 0 || r >= rows || c < 0 || c >= cols) ? 0.0 : strength.at<double>(r, c);
  };
  cv::Mat edges = cv::Mat::zeros(rows, cols, CV_8U);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double s = strength.at<double>(r, c);
      // Ties go to the first pixel of a plateau.
      const bool x_max = s > at(r, c - 1) && s >= at(r, c + 1);
      const bool y_max = s > at(r - 1, c) && s >= at(r + 1, c);
      if (x_max || y_max) edges.at<uchar>(r, c) = 1;
    }
  return edges;
}

cv::Mat marziliano_widths(const cv::Mat& gray, const cv::Mat& edges, int max_half_width) {
  const int rows = gray.rows, cols = gray.cols;
  cv::Mat widths = cv::Mat::zeros(rows, cols, CV_64F);
  auto px = [&](int r, int c) { return gray.at<double>(r, c); };

  for (int r = 1; r + 1 < rows; ++r) {
    for (int c = 1; c + 1 < cols; ++c) {
      if (!edges.at<uchar>(r, c)) continue;
      const double gx = 0.5 * (px(r, c + 1) - px(r, c - 1));
      const double gy = 0.5 * (px(r + 1, c) - px(r - 1, c));
      const double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      const double q = 45.0 * std::nearbyint(angle / 45.0);
      const bool rising = q == 0.0;                   // brighter to the right
      const bool falling = q == 180.0 || q == -180.0;  // darker to the right
      if (!rising && !falling) continue;

      // Walk outwards until the monotone run ends (local extremum or border).
      int left = max_half_width + 1;
      for (int m = 0; m <= max_half_width; ++m) {
        const int inner = c - 1 - m, outer = c - 2 - m;
        if (outer < 0) {
          left = m + 1;
          break;
        }
        const double d = px(r, outer) - px(r, inner);
        if (rising ? d >= 0.0 : d <= 0.0) {
          left = m + 1;
          break;
        }
      }
      int right = max_half_width + 1;
      for (int m = 0; m <= max_half_width; ++m) {
        const int inner = c + 1 + m, outer = c + 2 + m;
        if (outer >= cols) {
          right = m + 1;
          break;
        }
        const double d = px(r, outer) - px(r, inner);
        if (rising ? d <= 0.0 : d >= 0.0) {
          right = m + 1;
          break;
        }
      }
      widths.at<double>(r, c) = left + right;
    }
  }
  return widths;
}

CpbdResult cpbd(const cv::Mat& img, const CpbdParams& params) {
  require(params.block_size >= 8, ErrorCode::kInvalidArgument, "cpbd: block size too small");
  require(params.peak > 0 && params.beta > 0, ErrorCode::kInvalidArgument,
          "cpbd: peak and beta must be positive");
  cv::Mat gray = to_luma(img);
  require(gray.rows >= params.block_size && gray.cols >= params.block_size,
          ErrorCode::kInvalidArgument, "cpbd: image smaller than one block");
  if (params.peak != 255.0) gray *= 255.0 / params.peak;

  const cv::Mat canny = canny_edges(gray, params.canny_sigma, params.canny_low, params.canny_high);
  const cv::Mat sobel = sobel_vertical_edges(gray);
  const cv::Mat widths = marziliano_widths(gray, sobel, params.max_edge_half_width);

  const int bs = params.block_size;
  const double min_edges = params.edge_block_fraction * bs * bs;
  std::size_t total = 0, sharp = 0;
  for (int by = 0; by + bs <= gray.rows; by += bs) {
    for (int bx = 0; bx + bs <= gray.cols; bx += bs) {
      const cv::Rect roi(bx, by, bs, bs);
      if (static_cast<double>(cv::countNonZero(canny(roi))) <= min_edges) continue;
      double lo = 0.0, hi = 0.0;
      cv::minMaxLoc(gray(roi), &lo, &hi);
      const int contrast = static_cast<int>(hi - lo);
      const double jnb = contrast <= params.contrast_split ? params.jnb_width_low_contrast
                                                           : params.jnb_width_high_contrast;
      const cv::Mat w = widths(roi);
      for (int r = 0; r < bs; ++r)
        for (int c = 0; c < bs; ++c) {
          const double width = w.at<double>(r, c);
          if (width == 0.0) continue;
          const double p = 1.0 - std::exp(-std::pow(std::abs(width / jnb), params.beta));
          ++total;
          if (std::nearbyint(p * 100.0) <= params.jnb_bucket) ++sharp;
        }
    }
  }

  CpbdResult res;
  res.edge_count = total;
  res.edges_detected = total > 0;
  res.score = total > 0 ? static_cast<double>(sharp) / static_cast<double>(total) : 0.0;
  return res;
}

}  // namespace thbench::imgq
