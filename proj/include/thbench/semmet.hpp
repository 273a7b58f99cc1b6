#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "thbench/features.hpp"

namespace thbench::semmet {

/// Squared Euclidean distance between lipreading features of a real and a
/// generated clip. Both must come from the same checkpoint.
double lrsd(const FeatureVector& real, const FeatureVector& fake);

/// Unsquared companion of lrsd, emitted alongside it.
double l2_distance(const FeatureVector& real, const FeatureVector& fake);

/// Cosine similarity of emotion features.
double esd(const FeatureVector& a, const FeatureVector& b);

/// Cosine similarity of blink features of one slice pair.
double bsd(const FeatureVector& a, const FeatureVector& b);

/// Mean slice cosine over the paired slices of one video pair.
double bsd(std::span<const FeatureVector> real_slices, std::span<const FeatureVector> fake_slices);

struct FeaturePair {
  FeatureVector real;
  FeatureVector fake;
};

struct PairedClipRecord {
  std::string real_id;
  std::string fake_id;
  std::string method;
  std::optional<std::string> label;
  std::optional<FeaturePair> lipreading;
  std::optional<FeaturePair> emotion;
  std::vector<FeaturePair> blink_slices;
};

struct PairScores {
  std::optional<double> lrsd;
  std::optional<double> l2;
  std::optional<double> esd;
  std::optional<double> bsd;
};

/// Scores whichever networks' features the record carries.
PairScores score_pair(const PairedClipRecord& record);

/// Fraction of rows whose label ranks among the k largest logits. Among equal
/// logits the lower class index ranks first.
double topk_accuracy(const Eigen::MatrixXd& logits, std::span<const int> labels, int k);

struct WordAccuracy {
  std::string word;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
};

/// Accuracy per vocabulary word that occurs in `labels`, sorted by accuracy
/// (descending), then by word.
std::vector<WordAccuracy> per_word_accuracy(std::span<const int> predictions, std::span<const int> labels,
                                            std::span<const std::string> vocabulary);

}  // namespace thbench::semmet
