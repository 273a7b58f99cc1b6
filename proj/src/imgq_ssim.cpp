#include <cmath>
#include <string>

#include "thbench/error.hpp"
#include "thbench/imgq.hpp"

namespace thbench::imgq {

cv::Mat to_luma(const cv::Mat& img) {
  require(!img.empty(), ErrorCode::kInvalidArgument, "empty image");
  cv::Mat f;
  img.convertTo(f, CV_MAKETYPE(CV_64F, img.channels()));
  if (img.channels() == 1) return f;
  require(img.channels() == 3 || img.channels() == 4, ErrorCode::kInvalidArgument,
          "unsupported channel count " + std::to_string(img.channels()));
  cv::Mat y(img.rows, img.cols, CV_64F);
  const int ch = img.channels();
  for (int r = 0; r < img.rows; ++r) {
    const double* src = f.ptr<double>(r);
    double* dst = y.ptr<double>(r);
    for (int c = 0; c < img.cols; ++c, src += ch)
      dst[c] = 0.114 * src[0] + 0.587 * src[1] + 0.299 * src[2];
  }
  return y;
}

namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const int half = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double x = i - half;
    k[i] = std::exp(-(x * x) / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable filtering restricted to positions where the window fits.
cv::Mat filter_valid(const cv::Mat& src, const std::vector<double>& k) {
  const int w = static_cast<int>(k.size());
  const int out_cols = src.cols - w + 1;
  const int out_rows = src.rows - w + 1;
  cv::Mat tmp(src.rows, out_cols, CV_64F);
  for (int r = 0; r < src.rows; ++r) {
    const double* s = src.ptr<double>(r);
    double* d = tmp.ptr<double>(r);
    for (int c = 0; c < out_cols; ++c) {
      double acc = 0.0;
      for (int j = 0; j < w; ++j) acc += k[j] * s[c + j];
      d[c] = acc;
    }
  }
  cv::Mat out(out_rows, out_cols, CV_64F);
  for (int r = 0; r < out_rows; ++r) {
    double* d = out.ptr<double>(r);
    for (int c = 0; c < out_cols; ++c) {
      double acc = 0.0;
      for (int j = 0; j < w; ++j) acc += k[j] * tmp.at<double>(r + j, c);
      d[c] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const cv::Mat& a, const cv::Mat& b, const SsimParams& params) {
  require(a.size() == b.size(), ErrorCode::kInvalidArgument, "ssim: image shapes differ");
  require(params.window >= 1 && params.window % 2 == 1, ErrorCode::kInvalidArgument,
          "ssim: window must be odd and positive");
  require(params.sigma > 0 && params.peak > 0, ErrorCode::kInvalidArgument,
          "ssim: sigma and peak must be positive");
  require(a.rows >= params.window && a.cols >= params.window, ErrorCode::kInvalidArgument,
          "ssim: image smaller than the window");

  const cv::Mat x = to_luma(a);
  const cv::Mat y = to_luma(b);
  const auto k = gaussian_kernel(params.window, params.sigma);
  const double c1 = (params.k1 * params.peak) * (params.k1 * params.peak);
  const double c2 = (params.k2 * params.peak) * (params.k2 * params.peak);

  const cv::Mat mu_x = filter_valid(x, k);
  const cv::Mat mu_y = filter_valid(y, k);
  const cv::Mat e_xx = filter_valid(x.mul(x), k);
  const cv::Mat e_yy = filter_valid(y.mul(y), k);
  const cv::Mat e_xy = filter_valid(x.mul(y), k);

  double total = 0.0;
  for (int r = 0; r < mu_x.rows; ++r) {
    for (int c = 0; c < mu_x.cols; ++c) {
      const double mx = mu_x.at<double>(r, c);
      const double my = mu_y.at<double>(r, c);
      const double vx = e_xx.at<double>(r, c) - mx * mx;
      const double vy = e_yy.at<double>(r, c) - my * my;
      const double cxy = e_xy.at<double>(r, c) - mx * my;
      const double num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
      const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
      total += num / den;
    }
  }
  return total / static_cast<double>(mu_x.total());
}

double psnr(const cv::Mat& a, const cv::Mat& b, double peak) {
  require(a.size() == b.size() && a.channels() == b.channels(), ErrorCode::kInvalidArgument,
          "psnr: image shapes differ");
  require(peak > 0, ErrorCode::kInvalidArgument, "psnr: peak must be positive");
  cv::Mat fa, fb;
  a.convertTo(fa, CV_MAKETYPE(CV_64F, a.channels()));
  b.convertTo(fb, CV_MAKETYPE(CV_64F, b.channels()));
  const cv::Mat diff = fa - fb;
  const double mse = diff.dot(diff) / static_cast<double>(diff.total() * diff.channels());
  if (mse == 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace thbench::imgq
