#include <algorithm>
#include <cmath>
#include <numbers>

#include "thbench/error.hpp"
#include "thbench/stnet.hpp"

namespace thbench::stnet {
namespace {

void check_labels(std::span<const int> labels, Eigen::Index rows, Eigen::Index classes) {
  require(static_cast<Eigen::Index>(labels.size()) == rows, ErrorCode::kInvalidArgument,
          "label count does not match batch size");
  for (int y : labels)
    require(y >= 0 && y < classes, ErrorCode::kInvalidArgument,
            "label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
}

// Softmax of one row and its log-sum-exp, shifted by the row maximum.
double softmax_row(const Eigen::RowVectorXd& logits, Eigen::RowVectorXd& prob) {
  const double mx = logits.maxCoeff();
  prob = (logits.array() - mx).exp().matrix();
  const double sum = prob.sum();
  prob /= sum;
  return mx + std::log(sum);
}

}  // namespace

CrossEntropyResult softmax_cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> labels) {
  require(logits.rows() > 0 && logits.cols() >= 2, ErrorCode::kInvalidArgument,
          "cross-entropy needs a non-empty batch and >= 2 classes");
  check_labels(labels, logits.rows(), logits.cols());
  const auto n = static_cast<double>(logits.rows());
  CrossEntropyResult res;
  res.grad_logits.resize(logits.rows(), logits.cols());
  Eigen::RowVectorXd prob;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double lse = softmax_row(logits.row(i), prob);
    res.loss += (lse - logits(i, y)) / n;
    prob(y) -= 1.0;
    res.grad_logits.row(i) = prob / n;
  }
  return res;
}

ArcLossResult arcloss(const Eigen::MatrixXd& features, std::span<const int> labels,
                      const ArcLossParams& params, bool with_gradient) {
  const Eigen::Index b = features.rows(), d = features.cols(), v = params.weight.cols();
  require(b > 0, ErrorCode::kInvalidArgument, "arcloss: empty batch");
  require(params.weight.rows() == d, ErrorCode::kInvalidArgument,
          "arcloss: W has " + std::to_string(params.weight.rows()) + " rows, features have " +
              std::to_string(d) + " columns");
  require(v >= 2, ErrorCode::kInvalidArgument, "arcloss: need >= 2 classes");
  require(params.scale > 0, ErrorCode::kInvalidArgument, "arcloss: scale must be positive");
  require(params.margin >= 0 && params.margin < std::numbers::pi / 2, ErrorCode::kInvalidArgument,
          "arcloss: margin must lie in [0, pi/2)");
  check_labels(labels, b, v);

  const Eigen::VectorXd fnorm = features.rowwise().norm();
  const Eigen::RowVectorXd wnorm = params.weight.colwise().norm();
  for (Eigen::Index i = 0; i < b; ++i)
    require(fnorm(i) > 0 && std::isfinite(fnorm(i)), ErrorCode::kDegenerateFeature,
            "arcloss: feature row " + std::to_string(i) + " has zero norm");
  for (Eigen::Index j = 0; j < v; ++j)
    require(wnorm(j) > 0 && std::isfinite(wnorm(j)), ErrorCode::kDegenerateFeature,
            "arcloss: class direction " + std::to_string(j) + " has zero norm");

  const Eigen::MatrixXd fhat = fnorm.cwiseInverse().asDiagonal() * features;
  const Eigen::MatrixXd what = params.weight * wnorm.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd cos = (fhat * what).cwiseMax(-1.0).cwiseMin(1.0);

  const double s = params.scale, m = params.margin;
  const double n = static_cast<double>(b);
  ArcLossResult res;
  // dL/dcos, filled row by row.
  Eigen::MatrixXd gcos = Eigen::MatrixXd::Zero(b, v);
  Eigen::RowVectorXd logits(v), prob;
  for (Eigen::Index i = 0; i < b; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double theta = std::acos(cos(i, y));
    const double shifted = std::min(theta + m, std::numbers::pi);
    logits = s * cos.row(i);
    logits(y) = s * std::cos(shifted);
    const double lse = softmax_row(logits, prob);
    res.loss += (lse - logits(y)) / n;
    if (!with_gradient) continue;

    prob(y) -= 1.0;
    gcos.row(i) = s * prob / n;
    // d cos(theta + m) / d cos(theta) = sin(theta + m) / sin(theta); zero once clamped.
    double dtarget = 0.0;
    if (theta + m < std::numbers::pi) {
      const double sin_t = std::max(std::sin(theta), 1e-12);
      dtarget = std::sin(theta + m) / sin_t;
    }
    gcos(i, y) *= dtarget;
  }
  if (!with_gradient) return res;

  // Back through the normalisations: d(x/|x|) = (I - x^ x^T) / |x|.
  const Eigen::MatrixXd g_fhat = gcos * what.transpose();  // b x d
  const Eigen::MatrixXd g_what = fhat.transpose() * gcos;  // d x v
  res.grad_features.resize(b, d);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double proj = g_fhat.row(i).dot(fhat.row(i));
    res.grad_features.row(i) = (g_fhat.row(i) - proj * fhat.row(i)) / fnorm(i);
  }
  res.grad_weight.resize(d, v);
  for (Eigen::Index j = 0; j < v; ++j) {
    const double proj = g_what.col(j).dot(what.col(j));
    res.grad_weight.col(j) = (g_what.col(j) - proj * what.col(j)) / wnorm(j);
  }
  return res;
}

}  // namespace thbench::stnet
