#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace thbench {

/// An embedding with its Euclidean norm cached at construction. `source`
/// fingerprints the model that produced it; metrics comparing two vectors
/// refuse to mix sources.
class FeatureVector {
 public:
  explicit FeatureVector(std::vector<double> values, std::string source = {});

  std::size_t dim() const noexcept { return values_.size(); }
  const std::vector<double>& values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double norm() const noexcept { return norm_; }
  const std::string& source() const noexcept { return source_; }

  Eigen::Map<const Eigen::VectorXd> as_eigen() const {
    return {values_.data(), static_cast<Eigen::Index>(values_.size())};
  }

 private:
  std::vector<double> values_;
  double norm_ = 0.0;
  std::string source_;
};

struct FeatureRecord {
  std::string id;
  std::optional<std::string> label;
  FeatureVector feature;
};

/// CSV export: header `id,label,f0,...,f{d-1}` then one row per record. Values
/// use the shortest round-trip decimal form, so export/import is lossless. An
/// absent label is an empty field. The source fingerprint is kept in a leading
/// `# source=` comment line when all records share one.
void write_features_csv(const std::filesystem::path& path, std::span<const FeatureRecord> records);
std::vector<FeatureRecord> read_features_csv(const std::filesystem::path& path);

/// Stacks features into an n x d matrix (rows in input order).
Eigen::MatrixXd stack_features(std::span<const FeatureVector> features);

/// Neumaier-compensated mean; empty input yields NaN.
double compensated_mean(std::span<const double> values);

}  // namespace thbench
