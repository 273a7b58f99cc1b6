#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "thbench/error.hpp"
#include "thbench/imgq.hpp"

namespace thbench::imgq {

GaussianStats gaussian_stats(const Eigen::MatrixXd& features) {
  require(features.rows() >= 2, ErrorCode::kInsufficientSamples,
          "need at least 2 samples for a covariance, got " + std::to_string(features.rows()));
  require(features.cols() >= 1, ErrorCode::kInvalidArgument, "features have zero dimensions");
  require(features.allFinite(), ErrorCode::kInvalidArgument, "features contain non-finite values");
  GaussianStats s;
  s.sample_count = static_cast<std::size_t>(features.rows());
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.covariance = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  return s;
}

namespace {

constexpr double kNegativeSlack = 1e-6;

void check_stats(const GaussianStats& s, const char* which) {
  const auto d = s.mean.size();
  require(s.covariance.rows() == d && s.covariance.cols() == d, ErrorCode::kInvalidArgument,
          std::string(which) + ": covariance shape does not match mean");
  require(s.mean.allFinite() && s.covariance.allFinite(), ErrorCode::kInvalidArgument,
          std::string(which) + ": non-finite statistics");
  const double scale = std::max(1.0, s.covariance.cwiseAbs().maxCoeff());
  require((s.covariance - s.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-8 * scale,
          ErrorCode::kInvalidArgument, std::string(which) + ": covariance is not symmetric");
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianStats& p, const GaussianStats& q) {
  require(p.mean.size() == q.mean.size(), ErrorCode::kInvalidArgument,
          "frechet_distance: dimension mismatch " + std::to_string(p.mean.size()) + " vs " +
              std::to_string(q.mean.size()));
  check_stats(p, "p");
  check_stats(q, "q");

  const Eigen::MatrixXd sp = 0.5 * (p.covariance + p.covariance.transpose());
  const Eigen::MatrixXd sq = 0.5 * (q.covariance + q.covariance.transpose());
  const Eigen::MatrixXd root_p = psd_sqrt(sp);
  Eigen::MatrixXd inner = root_p * sq * root_p;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(inner, Eigen::EigenvaluesOnly);
  const double trace_root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double d = (p.mean - q.mean).squaredNorm() + sp.trace() + sq.trace() - 2.0 * trace_root;
  require(d >= -kNegativeSlack * std::max(1.0, sp.trace() + sq.trace()),
          ErrorCode::kInvalidArgument, "frechet_distance: covariances are not positive semidefinite");
  return std::max(d, 0.0);
}

std::vector<double> windowed_frechet_distance(const Eigen::MatrixXd& real_features,
                                              const Eigen::MatrixXd& fake_features,
                                              int half_window) {
  require(real_features.rows() == fake_features.rows() &&
              real_features.cols() == fake_features.cols(),
          ErrorCode::kInvalidArgument, "windowed_frechet_distance: feature shapes differ");
  require(half_window >= 1, ErrorCode::kInvalidArgument, "half window must be >= 1");
  require(real_features.rows() >= 2, ErrorCode::kInsufficientSamples,
          "windowed_frechet_distance needs at least 2 frames");
  const Eigen::Index n = real_features.rows();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index lo = std::max<Eigen::Index>(0, i - half_window);
    Eigen::Index hi = std::min<Eigen::Index>(n - 1, i + half_window);
    if (hi == lo) (lo > 0 ? --lo : ++hi);
    const auto len = hi - lo + 1;
    out[static_cast<std::size_t>(i)] =
        frechet_distance(gaussian_stats(real_features.middleRows(lo, len)),
                         gaussian_stats(fake_features.middleRows(lo, len)));
  }
  return out;
}

}  // namespace thbench::imgq
