#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "thbench/features.hpp"

namespace thbench::embed {

enum class Modality { kFaceIdentity, kImageInception };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

/// Whether one provider instance may serve concurrent embed() calls, or the
/// harness must create one instance per worker.
enum class Sharing { kShareable, kPerWorker };

struct ProviderConfig {
  std::string name = "stub";
  Modality modality = Modality::kFaceIdentity;
  int dim = 4;
  // "stub" or a path to a serialized model artifact.
  std::string model_source = "stub";
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual const std::string& name() const = 0;
  virtual int dimensionality() const = 0;
  virtual Modality modality() const = 0;
  virtual Sharing sharing() const { return Sharing::kShareable; }
  /// Stable identifier of the loaded model; copied into every produced vector.
  virtual const std::string& fingerprint() const = 0;

  /// Deterministic for a given (provider, image) pair. Throws kProviderFault if
  /// the model produces non-finite values.
  virtual FeatureVector embed(const cv::Mat& img) const = 0;
};

/// Analytic provider used in tests and fixtures: d = 4, values
/// [mean R, mean G, mean B, std of luma] on a unit intensity scale (8-bit
/// divided by 255, 16-bit by 65535, floating point taken as is). Grayscale
/// input has R = G = B.
class StubProvider final : public EmbeddingProvider {
 public:
  explicit StubProvider(std::string name = "stub", Modality modality = Modality::kFaceIdentity);

  const std::string& name() const override { return name_; }
  int dimensionality() const override { return 4; }
  Modality modality() const override { return modality_; }
  const std::string& fingerprint() const override { return fingerprint_; }
  FeatureVector embed(const cv::Mat& img) const override;

 private:
  std::string name_;
  Modality modality_;
  std::string fingerprint_;
};

/// A linear (optionally rectified) projection of the resized, unit-scaled
/// image, loaded from a JSON artifact:
///   {"format": "thbench-linear-embedding/1", "name": ..., "modality": ...,
///    "input": {"width": W, "height": H, "channels": C},
///    "weights": [[... W*H*C ...] x d], "bias": [d], "activation": "none"|"relu"|"tanh"}
/// Pixels are flattened row-major with interleaved channels (BGR order).
class LinearProvider final : public EmbeddingProvider {
 public:
  static std::unique_ptr<LinearProvider> load(const std::filesystem::path& path);

  const std::string& name() const override { return name_; }
  int dimensionality() const override { return static_cast<int>(weights_.rows()); }
  Modality modality() const override { return modality_; }
  const std::string& fingerprint() const override { return fingerprint_; }
  FeatureVector embed(const cv::Mat& img) const override;

 private:
  LinearProvider() = default;

  std::string name_;
  Modality modality_ = Modality::kFaceIdentity;
  int width_ = 0, height_ = 0, channels_ = 0;
  Eigen::MatrixXd weights_;
  Eigen::VectorXd bias_;
  std::string activation_;
  std::string fingerprint_;
};

/// Builds the configured provider. Relative artifact paths are resolved
/// against `model_dir` when it is non-empty. Declared dimensionality must
/// match the loaded model.
std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& cfg,
                                                 const std::filesystem::path& model_dir = {});

/// Cosine similarity a.b / (|a| |b|), in [-1, 1].
double arcsim(const FeatureVector& a, const FeatureVector& b);

struct VideoSimilarity {
  std::vector<double> per_frame;
  double mean = 0.0;
};

/// Frame-by-frame ArcSim of paired clips and its arithmetic mean.
VideoSimilarity video_arcsim(std::span<const cv::Mat> real_frames,
                             std::span<const cv::Mat> fake_frames,
                             const EmbeddingProvider& provider);

}  // namespace thbench::embed
