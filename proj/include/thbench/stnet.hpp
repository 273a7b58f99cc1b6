#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <opencv2/core.hpp>

#include "thbench/features.hpp"
#include "thbench/nn/ops.hpp"
#include "thbench/nn/tensor.hpp"

namespace thbench::stnet {

struct StConvLayer {
  int channels = 64;
  std::array<int, 3> kernel{3, 3, 3};  // (t, h, w); padded to keep T
  std::array<int, 3> stride{1, 1, 1};
};

/// Spatio-temporal 3D convs, a residual 2D refine stage applied per frame,
/// spatial pooling to z (B x T x C'), a temporal 1D conv and temporal pooling
/// to z' (B x C''), then an MLP classifier.
struct STNetConfig {
  int frames = 29;
  int height = 88;
  int width = 88;
  int channels = 1;
  std::vector<StConvLayer> st_stage{{64, {5, 7, 7}, {1, 2, 2}}, {64, {3, 3, 3}, {1, 2, 2}}};
  // Basic residual blocks per stage (two 3x3 convs each). Stage 0 keeps the
  // resolution, later stages halve it.
  std::vector<int> refine_widths{64, 128, 256, 512};
  std::vector<int> refine_blocks{2, 2, 2, 2};
  int fusion_kernel = 3;
  int feature_dim = 512;
  std::vector<int> mlp_hidden{};
  int num_classes = 300;

  /// Throws kConfiguration on an inconsistent configuration.
  void validate() const;

  /// Small configuration for 16 x 16 grayscale, 8-frame clips.
  static STNetConfig toy(int num_classes);
};

std::string to_json(const STNetConfig& cfg);
STNetConfig stnet_config_from_json(std::string_view text);
bool operator==(const STNetConfig& a, const STNetConfig& b);

/// One clip, (channels, frames, height, width), intensities in [0, 1].
using ClipTensor = nn::Tensor<float>;

/// Resizes (area interpolation) and converts frames to the configured
/// geometry. The frame count must equal cfg.frames.
ClipTensor clip_from_frames(std::span<const cv::Mat> frames, const STNetConfig& cfg);

enum class Head { kSoftmax, kArcLoss };
std::string to_string(Head h);
Head head_from_string(const std::string& s);

struct Parameter {
  std::string name;
  nn::Tensor<float> value;
  nn::Tensor<float> grad;
};

struct ForwardOutput {
  Eigen::MatrixXf features;  // B x C''
  Eigen::MatrixXf logits;    // B x V
};

class STNet {
 public:
  STNet(STNetConfig cfg, std::uint64_t seed);

  const STNetConfig& config() const noexcept { return cfg_; }

  /// Inference. Each clip is processed independently, so a clip's outputs do
  /// not depend on the rest of the batch. Throws kInvalidInput on a shape
  /// mismatch.
  ForwardOutput forward(std::span<const ClipTensor> clips) const;

  /// Activations kept for backward().
  struct Tape;
  ForwardOutput forward(std::span<const ClipTensor> clips, Tape& tape) const;
  /// Accumulates parameter gradients. Either gradient may be empty (0 x 0).
  void backward(const Tape& tape, const Eigen::MatrixXf& grad_features,
                const Eigen::MatrixXf& grad_logits);

  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  Parameter& parameter(std::string_view name);
  const Parameter& parameter(std::string_view name) const;
  void zero_grad();

  /// ArcLoss class directions W (C'' x V); absent until attached.
  bool has_arc_head() const noexcept { return arc_index_ >= 0; }
  void attach_arc_head(const Eigen::MatrixXd& weight);
  Eigen::MatrixXd arc_weight() const;

  /// Per-class scores: logits for the softmax head, cos(theta_j) for ArcLoss.
  Eigen::MatrixXf scores(const ForwardOutput& out, Head head) const;

  /// FNV-1a digest of the configuration and every parameter value.
  std::string fingerprint() const;

 private:
  struct ConvRef {
    nn::Conv3dSpec spec;
    int weight = -1;
    int bias = -1;
  };
  struct Block {
    ConvRef conv1, conv2;
    bool projection = false;
    ConvRef shortcut;
  };
  struct LinearRef {
    int weight = -1;
    int bias = -1;
  };

  int add_param(std::string name, std::vector<int> shape);
  ConvRef add_conv(const std::string& name, const nn::Conv3dSpec& spec);

  STNetConfig cfg_;
  std::vector<Parameter> params_;
  std::vector<ConvRef> st_;
  std::vector<Block> blocks_;
  ConvRef fusion_;
  std::vector<LinearRef> mlp_;
  int arc_index_ = -1;
};

struct STNet::Tape {
  int batch = 0;
  std::vector<nn::Tensor<float>> st_inputs, st_outputs;
  struct BlockTape {
    nn::Tensor<float> input, hidden, output;
  };
  std::vector<BlockTape> blocks;
  std::vector<int> refine_shape;
  nn::Tensor<float> fusion_input, fusion_output, features;
  std::vector<nn::Tensor<float>> mlp_inputs;
  nn::Tensor<float> logits;
};

// ---------------------------------------------------------------------------
// ArcLoss

struct ArcLossParams {
  Eigen::MatrixXd weight;  // C'' x V class directions (normalised internally)
  double scale = 64.0;
  double margin = 0.5;
};

struct ArcLossResult {
  double loss = 0.0;
  Eigen::MatrixXd grad_features;  // B x C''
  Eigen::MatrixXd grad_weight;    // C'' x V
};

/// Mean additive-angular-margin loss over the batch: features are scaled to
/// norm s, columns of W to unit norm, the target angle becomes
/// min(theta_y + m, pi) and softmax cross-entropy is taken over
/// s cos(theta). Zero-norm feature rows or W columns raise
/// kDegenerateFeature.
ArcLossResult arcloss(const Eigen::MatrixXd& features, std::span<const int> labels,
                      const ArcLossParams& params, bool with_gradient = true);

/// Mean softmax cross-entropy with its gradient w.r.t. the logits.
struct CrossEntropyResult {
  double loss = 0.0;
  Eigen::MatrixXd grad_logits;
};
CrossEntropyResult softmax_cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Training

struct Example {
  std::string id;
  int label = -1;
  ClipTensor clip;
};

struct OptimizerSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  int batch_size = 16;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
};

struct TrainRun {
  std::string dataset_id;
  std::vector<std::string> labels;  // class id -> name
  int epochs = 20;
  OptimizerSettings optimizer;
  std::uint64_t seed = 0;
  // Rewritten after every epoch when non-empty.
  std::filesystem::path checkpoint_path;
  // Checkpoint whose network weights initialise this run (same config).
  std::filesystem::path warm_start;
  double arc_scale = 64.0;
  double arc_margin = 0.5;
  std::function<void(const EpochLog&)> on_epoch;

  // Filled by train_classifier.
  std::vector<EpochLog> log;
  double final_train_accuracy = 0.0;
  double final_validation_accuracy = 0.0;
};

/// Adam with a per-epoch shuffle drawn from run.seed. With the ArcLoss head the
/// class directions start from the normalised class means of the training
/// features. A non-finite loss throws TrainingFault naming the last
/// checkpoint written.
STNet train_classifier(const STNetConfig& cfg, std::span<const Example> train,
                       std::span<const Example> validation, Head head, TrainRun& run);

/// Top-1 accuracy of the given head over labelled examples.
double evaluate_accuracy(const STNet& net, Head head, std::span<const Example> examples,
                         int batch_size = 32);

/// z' per example, tagged with id and label name when the label is known.
/// The source fingerprint is the network's.
std::vector<FeatureRecord> extract_features(const STNet& net, std::span<const Example> examples,
                                            std::span<const std::string> labels = {},
                                            int batch_size = 32);

struct Lexicon {
  std::vector<std::string> words;
  bool short_lexicon = false;  // fewer distinct words than requested
};

/// The `size` most frequent words, ties broken lexicographically.
Lexicon build_lexicon(std::span<const std::string> words, std::size_t size);

// ---------------------------------------------------------------------------
// Checkpoints: "THBCKPT1", u64 header length, JSON header, float32 data.

struct Checkpoint {
  STNet net;
  Head head = Head::kSoftmax;
  std::vector<std::string> labels;
  std::string manifest_json = "{}";
};

void save_checkpoint(const std::filesystem::path& path, const STNet& net, Head head,
                     std::span<const std::string> labels, const std::string& manifest_json = "{}");
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic data

/// Clips of a bright square moving right (class 0), left (1), down (2) or up
/// (3) over a noisy background, wrapping at the borders. Start positions,
/// intensities and noise are drawn from `seed`.
std::vector<Example> moving_pattern_clips(int count, int num_classes, const STNetConfig& cfg,
                                          std::uint64_t seed);

}  // namespace thbench::stnet
