#include "thbench/semmet.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "thbench/error.hpp"

namespace thbench::semmet {
namespace {

void check_pair(const FeatureVector& a, const FeatureVector& b, const char* what) {
  require(a.dim() == b.dim(), ErrorCode::kInvalidArgument,
          std::string(what) + ": dimensions " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
  require(a.source() == b.source(), ErrorCode::kPairing,
          std::string(what) + ": features come from different checkpoints ('" + a.source() + "' vs '" +
              b.source() + "')");
}

double cosine(const FeatureVector& a, const FeatureVector& b, const char* what) {
  check_pair(a, b, what);
  require(a.norm() > 0.0 && b.norm() > 0.0, ErrorCode::kDegenerateFeature,
          std::string(what) + ": zero-norm feature");
  const double c = a.as_eigen().dot(b.as_eigen()) / (a.norm() * b.norm());
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace

double lrsd(const FeatureVector& real, const FeatureVector& fake) {
  check_pair(real, fake, "lrsd");
  double sum = 0.0;
  for (std::size_t i = 0; i < real.dim(); ++i) {
    const double d = real[i] - fake[i];
    sum += d * d;
  }
  return sum;
}

double l2_distance(const FeatureVector& real, const FeatureVector& fake) {
  return std::sqrt(lrsd(real, fake));
}

double esd(const FeatureVector& a, const FeatureVector& b) { return cosine(a, b, "esd"); }

double bsd(const FeatureVector& a, const FeatureVector& b) { return cosine(a, b, "bsd"); }

double bsd(std::span<const FeatureVector> real_slices, std::span<const FeatureVector> fake_slices) {
  require(real_slices.size() == fake_slices.size(), ErrorCode::kPairing,
          "bsd: " + std::to_string(real_slices.size()) + " real slices vs " +
              std::to_string(fake_slices.size()) + " fake slices");
  require(!real_slices.empty(), ErrorCode::kInvalidArgument, "bsd: no slices");
  std::vector<double> cos;
  cos.reserve(real_slices.size());
  for (std::size_t i = 0; i < real_slices.size(); ++i) cos.push_back(bsd(real_slices[i], fake_slices[i]));
  return compensated_mean(cos);
}

PairScores score_pair(const PairedClipRecord& record) {
  PairScores s;
  if (record.lipreading) {
    s.lrsd = lrsd(record.lipreading->real, record.lipreading->fake);
    s.l2 = std::sqrt(*s.lrsd);
  }
  if (record.emotion) s.esd = esd(record.emotion->real, record.emotion->fake);
  if (!record.blink_slices.empty()) {
    std::vector<double> cos;
    for (const auto& p : record.blink_slices) cos.push_back(bsd(p.real, p.fake));
    s.bsd = compensated_mean(cos);
  }
  return s;
}

double topk_accuracy(const Eigen::MatrixXd& logits, std::span<const int> labels, int k) {
  const auto v = logits.cols();
  require(static_cast<Eigen::Index>(labels.size()) == logits.rows(), ErrorCode::kInvalidArgument,
          "topk_accuracy: " + std::to_string(labels.size()) + " labels for " + std::to_string(logits.rows()) +
              " rows");
  require(!labels.empty(), ErrorCode::kInvalidArgument, "topk_accuracy: empty batch");
  require(k >= 1 && k <= v, ErrorCode::kInvalidArgument, "topk_accuracy: k must lie in [1, V]");
  require(logits.allFinite(), ErrorCode::kInvalidArgument, "topk_accuracy: non-finite logits");
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < v, ErrorCode::kInvalidArgument, "topk_accuracy: label " + std::to_string(y) + " out of range");
    const double target = logits(i, y);
    Eigen::Index rank = 0;
    for (Eigen::Index j = 0; j < v; ++j)
      if (logits(i, j) > target || (logits(i, j) == target && j < y)) ++rank;
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<WordAccuracy> per_word_accuracy(std::span<const int> predictions, std::span<const int> labels,
                                            std::span<const std::string> vocabulary) {
  require(predictions.size() == labels.size(), ErrorCode::kInvalidArgument,
          "per_word_accuracy: prediction and label counts differ");
  const int v = static_cast<int>(vocabulary.size());
  std::map<int, WordAccuracy> by_word;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    require(y >= 0 && y < v, ErrorCode::kInvalidArgument, "per_word_accuracy: label outside vocabulary");
    auto& w = by_word[y];
    w.word = vocabulary[static_cast<std::size_t>(y)];
    ++w.total;
    if (predictions[i] == y) ++w.correct;
  }
  std::vector<WordAccuracy> out;
  out.reserve(by_word.size());
  for (auto& [_, w] : by_word) {
    w.accuracy = static_cast<double>(w.correct) / static_cast<double>(w.total);
    out.push_back(std::move(w));
  }
  std::stable_sort(out.begin(), out.end(), [](const WordAccuracy& a, const WordAccuracy& b) {
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    return a.word < b.word;
  });
  return out;
}

}  // namespace thbench::semmet
