#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "thbench/geom.hpp"

namespace thbench::report {

inline constexpr int kSchemaVersion = 1;

enum class BinAxis { kPoseYaw, kPosePitch, kPoseRoll, kMotion };

std::string to_string(BinAxis a);
BinAxis bin_axis_from_string(const std::string& s);

/// Record statistic consulted for an axis: "yaw", "pitch", "roll", "motion".
std::string stat_key(BinAxis a);

/// Edges e0 < ... < en define n bins [e_i, e_i+1); values below e0 land in
/// the first bin and values at or above en in the last.
struct BinSpec {
  BinAxis axis = BinAxis::kPoseYaw;
  std::vector<double> edges;

  void validate() const;
  std::size_t bins() const { return edges.size() - 1; }
  std::size_t bin_of(double value) const;
  std::string label(std::size_t bin) const;

  /// 10 degree bins over [-90, 90].
  static BinSpec pose(BinAxis axis = BinAxis::kPoseYaw);
  /// 10 degree bins over [0, 90].
  static BinSpec motion();

  friend bool operator==(const BinSpec&, const BinSpec&) = default;
};

struct Histogram {
  BinSpec spec;
  std::vector<std::size_t> counts;
  std::vector<double> ratios;  // all zero for empty input
  std::size_t total = 0;
};

Histogram histogram(std::span<const double> values, const BinSpec& spec);

struct BinStat {
  double mean = 0.0;
  std::size_t count = 0;

  friend bool operator==(const BinStat&, const BinStat&) = default;
};

/// Order-independent mean: values are sorted before compensated summation, so
/// any permutation of the input gives a bit-identical result.
BinStat stable_mean(std::vector<double> values);

/// One evaluated video pair.
struct VideoRecord {
  std::string method;
  std::string video_id;       // generated clip
  std::string reference_id;   // paired real clip
  std::map<std::string, double> metrics;
  std::map<std::string, double> stats;  // yaw/pitch/roll means, motion score, ...

  friend bool operator==(const VideoRecord&, const VideoRecord&) = default;
};

/// Per-bin mean of `metric` over records carrying both the metric and the
/// spec's statistic. Empty bins are nullopt.
std::vector<std::optional<BinStat>> metric_vs_bin(std::span<const VideoRecord> records, const std::string& metric,
                                                  const BinSpec& spec);

struct PosePairSample {
  double reference_angle = 0.0;
  double target_angle = 0.0;
  double value = 0.0;
};

struct ConfusionMatrix {
  BinSpec spec;
  std::string metric;
  // cells[i][j]: reference bin i, target bin j.
  std::vector<std::vector<std::optional<BinStat>>> cells;
};

ConfusionMatrix pose_confusion_matrix(std::span<const PosePairSample> samples, const BinSpec& spec,
                                      const std::string& metric);

/// Frame-aligned table: frame, pitch, yaw, roll, then one column per metric.
struct TrendTrace {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

TrendTrace trend_trace(const geom::PoseTrace& pose, const std::vector<std::pair<std::string, std::vector<double>>>& metrics);

void write_trend_tsv(const std::filesystem::path& path, const TrendTrace& trace);

struct MethodAggregate {
  std::string method;
  std::map<std::string, BinStat> metrics;
  // Set-level metrics (FID) that have no per-video value.
  std::map<std::string, double> set_metrics;
};

struct BinnedMetric {
  std::string method;
  std::string metric;
  BinSpec spec;
  std::vector<std::optional<BinStat>> bins;
};

struct FailureRecord {
  std::string entry_id;
  std::string stage;
  std::string code;
  std::string message;

  friend bool operator==(const FailureRecord&, const FailureRecord&) = default;
};

struct Provenance {
  std::string config_hash;
  std::map<std::string, std::string> fingerprints;  // checkpoints and providers
  std::string created_at;                           // excluded from report bodies
};

struct MetricReport {
  int schema_version = kSchemaVersion;
  std::vector<VideoRecord> records;  // sorted by (method, video_id)
  std::vector<MethodAggregate> methods;
  std::vector<BinnedMetric> binned;
  std::vector<ConfusionMatrix> confusion;
  std::vector<FailureRecord> failures;
  Provenance provenance;
};

/// Sorts records, then computes per-method means of every metric and per-bin
/// means for every (method, metric, spec) combination.
MetricReport aggregate(std::vector<VideoRecord> records, std::span<const BinSpec> specs = {});

/// Recomputes the aggregates from the records and compares them exactly.
bool self_consistent(const MetricReport& report);

/// Report JSON. Non-finite metric values are written as "inf"/"-inf"/"nan"
/// strings; empty bins as null. The body omits provenance.created_at.
std::string to_json(const MetricReport& report, bool include_timestamp = true);
std::string report_body(const MetricReport& report);
MetricReport report_from_json(const std::string& text);

/// records.csv (one row per video), aggregates.csv (per method and metric),
/// binned TSVs, failures.csv and report.json under `dir`.
void write_report(const std::filesystem::path& dir, const MetricReport& report);
MetricReport read_report(const std::filesystem::path& report_json);

}  // namespace thbench::report
