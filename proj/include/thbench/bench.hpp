#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "thbench/blinkdata.hpp"
#include "thbench/embed.hpp"
#include "thbench/geom.hpp"
#include "thbench/report.hpp"
#include "thbench/stnet.hpp"

namespace thbench::bench {

/// Environment variable naming the model-artifact cache directory.
inline constexpr const char* kModelCacheEnv = "THBENCH_MODEL_CACHE";

struct ManifestEntry {
  std::string id;
  std::filesystem::path source;     // frame directory or video file
  std::filesystem::path landmarks;  // CSV or JSON landmark file
  std::string split = "test";
  std::string method;               // empty for real clips
  std::string real_id;              // generated clips: the paired real clip
  std::map<std::string, std::string> labels;  // e.g. "word", "emotion"

  bool is_real() const { return method.empty(); }
};

struct DatasetManifest {
  std::string dataset_id;
  std::vector<ManifestEntry> entries;

  const ManifestEntry* find(const std::string& id) const;
  /// Unique ids, resolvable paths, and per (method, split) a bijection
  /// between generated clips and the real clips they pair with.
  void validate() const;
};

/// JSON document {"dataset_id", "entries": [...]}; relative paths resolve
/// against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

enum class Target { kLipreading, kEmotion, kBlink };
std::string to_string(Target t);
Target target_from_string(const std::string& s);

struct MetricToggles {
  bool ssim = true;
  bool psnr = true;
  bool cpbd = true;
  bool fid = true;
  bool arcsim = true;
  bool lrsd = true;
  bool esd = true;
  bool bsd = true;
};

struct TrainSettings {
  stnet::STNetConfig network;
  int epochs = 20;
  stnet::OptimizerSettings optimizer;
  stnet::Head head = stnet::Head::kSoftmax;
  double arc_scale = 64.0;
  double arc_margin = 0.5;
  std::string warm_start;
  bool balance_blink = true;
  std::string train_split = "train";
  std::string validation_split = "val";
};

struct BenchConfig {
  geom::SmoothingConfig smoothing;
  geom::CropConfig crop;
  report::BinSpec pose_bins = report::BinSpec::pose();
  report::BinSpec motion_bins = report::BinSpec::motion();
  embed::ProviderConfig identity_provider;
  embed::ProviderConfig inception_provider;
  // Relative paths resolve against the model cache first, then the output directory.
  std::map<Target, std::string> checkpoints;
  blink::BlinkSliceConfig blink;
  MetricToggles metrics;
  TrainSettings train;
  int lexicon_size = 300;
  int bsd_slices = 8;          // slice pairs sampled per video pair
  int fid_half_window = 4;     // windowed FID in trend traces
  std::string eval_split = "test";  // empty evaluates every split
  int workers = 1;             // 0 = hardware concurrency
  std::filesystem::path output_dir = "thbench_out";
  std::string model_cache;     // overridden by THBENCH_MODEL_CACHE
  std::uint64_t seed = 0;

  static BenchConfig defaults();
  void validate() const;
};

std::string config_to_json(const BenchConfig& cfg);
BenchConfig config_from_json(const std::string& text);
/// Missing keys keep their defaults.
BenchConfig load_config(const std::filesystem::path& path);

/// Fingerprint of everything that affects results (not workers or paths).
std::string config_hash(const BenchConfig& cfg);

/// THBENCH_MODEL_CACHE when set, else the configured cache (may be empty).
std::filesystem::path model_cache_dir(const BenchConfig& cfg);
std::filesystem::path resolve_checkpoint(const BenchConfig& cfg, Target target);

/// Output layout under cfg.output_dir.
struct OutputLayout {
  std::filesystem::path root, crops, poses, features, checkpoints, reports;
  explicit OutputLayout(const std::filesystem::path& root);
  void create() const;
};

/// Runs fn(index, worker) for index in [0, n) on a pool of `workers` threads.
/// The first exception thrown by a job is rethrown after all workers stop.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t, int)>& fn);

/// Reads a frame directory (sorted image files) or a video container.
std::vector<cv::Mat> read_frames(const std::filesystem::path& source);

enum class EntryState { kProcessed, kSkipped, kFailed };
std::string to_string(EntryState s);

struct EntryStatus {
  std::string id;
  EntryState state = EntryState::kProcessed;
  std::string message;
};

struct PreprocessSummary {
  std::vector<EntryStatus> entries;  // manifest order
  std::size_t processed = 0, skipped = 0, failed = 0;
};

/// Crops every entry and estimates its pose trace. Entries whose inputs and
/// settings are unchanged since the last run are skipped; failures are logged
/// per entry and do not stop the run.
PreprocessSummary run_preprocess(const DatasetManifest& manifest, const BenchConfig& cfg);

/// Crops and poses written by run_preprocess for one entry.
struct PreparedClip {
  std::vector<cv::Mat> frames;
  std::vector<geom::LandmarkFrame> landmarks;  // crop coordinates, 2D
  std::optional<geom::PoseTrace> pose;
};
PreparedClip load_prepared(const OutputLayout& out, const std::string& id);

/// Evaluates every generated clip against its real pair and writes the report
/// under reports/. Enabled semantic metrics need their checkpoints; a missing
/// one is a configuration error raised before any work.
report::MetricReport run_eval(const DatasetManifest& manifest, const BenchConfig& cfg);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::vector<std::string> labels;
  std::vector<stnet::EpochLog> log;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
  std::size_t train_examples = 0;
};

/// Trains the lipreading, emotion or blink network on the real clips of the
/// training split. The blink target builds (and re-reads) the slice manifest
/// features/blink_slices.jsonl.
TrainResult run_train(const DatasetManifest& manifest, const BenchConfig& cfg, Target target);

/// Exports network features of every real and generated clip (or blink
/// slice) to features/<target>.csv.
std::filesystem::path run_features(const DatasetManifest& manifest, const BenchConfig& cfg, Target target);

/// Re-aggregates reports/report.json from its per-video records with the
/// configured bins and rewrites the report files.
report::MetricReport run_report(const BenchConfig& cfg);

/// Evenly spaced frame subset of length n (nearest index), used to fit clips
/// to a network's temporal extent.
std::vector<cv::Mat> resample_frames(const std::vector<cv::Mat>& frames, int n);

}  // namespace thbench::bench
