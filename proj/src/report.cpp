#include "thbench/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "text_util.hpp"
#include "thbench/error.hpp"
#include "thbench/features.hpp"

namespace thbench::report {

using nlohmann::json;

std::string to_string(BinAxis a) {
  switch (a) {
    case BinAxis::kPoseYaw: return "pose-yaw";
    case BinAxis::kPosePitch: return "pose-pitch";
    case BinAxis::kPoseRoll: return "pose-roll";
    case BinAxis::kMotion: return "motion";
  }
  return "?";
}

BinAxis bin_axis_from_string(const std::string& s) {
  for (BinAxis a : {BinAxis::kPoseYaw, BinAxis::kPosePitch, BinAxis::kPoseRoll, BinAxis::kMotion})
    if (to_string(a) == s) return a;
  fail(ErrorCode::kConfiguration, "unknown bin axis '" + s + "'");
}

std::string stat_key(BinAxis a) {
  switch (a) {
    case BinAxis::kPoseYaw: return "yaw";
    case BinAxis::kPosePitch: return "pitch";
    case BinAxis::kPoseRoll: return "roll";
    case BinAxis::kMotion: return "motion";
  }
  return "?";
}

void BinSpec::validate() const {
  require(edges.size() >= 2, ErrorCode::kConfiguration, "bin spec needs at least two edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    require(std::isfinite(edges[i]), ErrorCode::kConfiguration, "bin edges must be finite");
    if (i > 0)
      require(edges[i] > edges[i - 1], ErrorCode::kConfiguration, "bin edges must be strictly increasing");
  }
}

std::size_t BinSpec::bin_of(double value) const {
  require(!std::isnan(value), ErrorCode::kInvalidArgument, "cannot bin NaN");
  const auto it = std::upper_bound(edges.begin(), edges.end(), value);
  const auto idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - edges.begin() - 1, 0));
  return std::min(idx, bins() - 1);
}

std::string BinSpec::label(std::size_t bin) const {
  return "[" + detail::format_double(edges[bin]) + "," + detail::format_double(edges[bin + 1]) + ")";
}

namespace {

std::vector<double> steps(double lo, double hi, double step) {
  std::vector<double> e;
  for (double v = lo; v <= hi + 1e-9; v += step) e.push_back(v);
  return e;
}

}  // namespace

BinSpec BinSpec::pose(BinAxis axis) { return {axis, steps(-90, 90, 10)}; }
BinSpec BinSpec::motion() { return {BinAxis::kMotion, steps(0, 90, 10)}; }

Histogram histogram(std::span<const double> values, const BinSpec& spec) {
  spec.validate();
  Histogram h{spec, std::vector<std::size_t>(spec.bins(), 0), std::vector<double>(spec.bins(), 0.0), values.size()};
  for (double v : values) ++h.counts[spec.bin_of(v)];
  if (h.total > 0)
    for (std::size_t i = 0; i < h.counts.size(); ++i)
      h.ratios[i] = static_cast<double>(h.counts[i]) / static_cast<double>(h.total);
  return h;
}

BinStat stable_mean(std::vector<double> values) {
  // Total order that also places infinities and NaN deterministically.
  std::sort(values.begin(), values.end(), [](double a, double b) {
    if (std::isnan(a) || std::isnan(b)) return !std::isnan(a) && std::isnan(b);
    return a < b;
  });
  return {compensated_mean(values), values.size()};
}

std::vector<std::optional<BinStat>> metric_vs_bin(std::span<const VideoRecord> records, const std::string& metric,
                                                  const BinSpec& spec) {
  spec.validate();
  const std::string key = stat_key(spec.axis);
  std::vector<std::vector<double>> groups(spec.bins());
  for (const auto& r : records) {
    const auto m = r.metrics.find(metric);
    const auto s = r.stats.find(key);
    if (m == r.metrics.end() || s == r.stats.end()) continue;
    groups[spec.bin_of(s->second)].push_back(m->second);
  }
  std::vector<std::optional<BinStat>> out(spec.bins());
  for (std::size_t i = 0; i < groups.size(); ++i)
    if (!groups[i].empty()) out[i] = stable_mean(std::move(groups[i]));
  return out;
}

ConfusionMatrix pose_confusion_matrix(std::span<const PosePairSample> samples, const BinSpec& spec,
                                      const std::string& metric) {
  spec.validate();
  const std::size_t n = spec.bins();
  std::vector<std::vector<std::vector<double>>> groups(n, std::vector<std::vector<double>>(n));
  for (const auto& s : samples) groups[spec.bin_of(s.reference_angle)][spec.bin_of(s.target_angle)].push_back(s.value);
  ConfusionMatrix m{spec, metric, std::vector<std::vector<std::optional<BinStat>>>(n, std::vector<std::optional<BinStat>>(n))};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (!groups[i][j].empty()) m.cells[i][j] = stable_mean(std::move(groups[i][j]));
  return m;
}

TrendTrace trend_trace(const geom::PoseTrace& pose,
                       const std::vector<std::pair<std::string, std::vector<double>>>& metrics) {
  TrendTrace t;
  t.columns = {"frame", "pitch", "yaw", "roll"};
  for (const auto& [name, values] : metrics) {
    require(values.size() == pose.size(), ErrorCode::kInvalidArgument,
            "trend_trace: metric '" + name + "' has " + std::to_string(values.size()) + " frames, pose has " +
                std::to_string(pose.size()));
    t.columns.push_back(name);
  }
  t.rows.reserve(pose.size());
  for (std::size_t f = 0; f < pose.size(); ++f) {
    const auto row = static_cast<Eigen::Index>(f);
    std::vector<double> r{static_cast<double>(f), pose.angles()(row, 0), pose.angles()(row, 1), pose.angles()(row, 2)};
    for (const auto& m : metrics) r.push_back(m.second[f]);
    t.rows.push_back(std::move(r));
  }
  return t;
}

void write_trend_tsv(const std::filesystem::path& path, const TrendTrace& trace) {
  std::string text;
  for (std::size_t i = 0; i < trace.columns.size(); ++i) text += (i ? "\t" : "") + trace.columns[i];
  text += '\n';
  for (const auto& r : trace.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) text += (i ? "\t" : "") + detail::format_double(r[i]);
    text += '\n';
  }
  detail::write_file(path, text);
}

MetricReport aggregate(std::vector<VideoRecord> records, std::span<const BinSpec> specs) {
  for (const auto& s : specs) s.validate();
  std::sort(records.begin(), records.end(), [](const VideoRecord& a, const VideoRecord& b) {
    return std::tie(a.method, a.video_id, a.reference_id) < std::tie(b.method, b.video_id, b.reference_id);
  });
  MetricReport rep;
  rep.records = std::move(records);

  std::map<std::string, std::map<std::string, std::vector<double>>> by_method;
  for (const auto& r : rep.records) {
    auto& m = by_method[r.method];
    for (const auto& [name, v] : r.metrics) m[name].push_back(v);
  }
  for (auto& [method, metrics] : by_method) {
    MethodAggregate agg{method, {}, {}};
    for (auto& [name, values] : metrics) agg.metrics[name] = stable_mean(std::move(values));
    rep.methods.push_back(std::move(agg));
  }

  // Records are sorted by method, so each method is a contiguous range.
  auto first = rep.records.begin();
  while (first != rep.records.end()) {
    auto last = std::find_if(first, rep.records.end(), [&](const VideoRecord& r) { return r.method != first->method; });
    const std::span<const VideoRecord> group(&*first, static_cast<std::size_t>(last - first));
    std::set<std::string> names;
    for (const auto& r : group)
      for (const auto& kv : r.metrics) names.insert(kv.first);
    for (const auto& name : names)
      for (const auto& spec : specs) {
        auto bins = metric_vs_bin(group, name, spec);
        if (std::any_of(bins.begin(), bins.end(), [](const auto& b) { return b.has_value(); }))
          rep.binned.push_back({first->method, name, spec, std::move(bins)});
      }
    first = last;
  }
  return rep;
}

bool self_consistent(const MetricReport& report) {
  std::vector<BinSpec> specs;
  for (const auto& b : report.binned)
    if (std::find(specs.begin(), specs.end(), b.spec) == specs.end()) specs.push_back(b.spec);
  const MetricReport again = aggregate(report.records, specs);
  if (again.methods.size() != report.methods.size()) return false;
  for (std::size_t i = 0; i < again.methods.size(); ++i)
    if (again.methods[i].method != report.methods[i].method || again.methods[i].metrics != report.methods[i].metrics)
      return false;
  // Every stored binned series must match its recomputation.
  for (const auto& b : report.binned) {
    const auto it = std::find_if(again.binned.begin(), again.binned.end(), [&](const BinnedMetric& x) {
      return x.method == b.method && x.metric == b.metric && x.spec == b.spec;
    });
    if (it == again.binned.end() || it->bins != b.bins) return false;
  }
  return true;
}

namespace {

json number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double number_from(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  if (s == "nan") return NAN;
  fail(ErrorCode::kInvalidInput, "report: bad numeric value '" + s + "'");
}

json value_map(const std::map<std::string, double>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[k] = number(v);
  return j;
}

std::map<std::string, double> value_map_from(const json& j) {
  std::map<std::string, double> m;
  for (const auto& [k, v] : j.items()) m[k] = number_from(v);
  return m;
}

json stat(const std::optional<BinStat>& s) {
  if (!s) return nullptr;
  return {{"mean", number(s->mean)}, {"count", s->count}};
}

std::optional<BinStat> stat_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return BinStat{number_from(j.at("mean")), j.at("count").get<std::size_t>()};
}

json spec_json(const BinSpec& s) { return {{"axis", to_string(s.axis)}, {"edges", s.edges}}; }

BinSpec spec_from(const json& j) {
  BinSpec s{bin_axis_from_string(j.at("axis").get<std::string>()), j.at("edges").get<std::vector<double>>()};
  s.validate();
  return s;
}

json to_json_value(const MetricReport& r, bool include_timestamp) {
  json prov = {{"config_hash", r.provenance.config_hash}, {"fingerprints", r.provenance.fingerprints}};
  if (include_timestamp) prov["created_at"] = r.provenance.created_at;

  json methods = json::array();
  for (const auto& m : r.methods) {
    json metrics = json::object();
    for (const auto& [k, v] : m.metrics) metrics[k] = stat(v);
    methods.push_back({{"method", m.method}, {"metrics", metrics}, {"set_metrics", value_map(m.set_metrics)}});
  }
  json binned = json::array();
  for (const auto& b : r.binned) {
    json bins = json::array();
    for (const auto& s : b.bins) bins.push_back(stat(s));
    binned.push_back({{"method", b.method}, {"metric", b.metric}, {"spec", spec_json(b.spec)}, {"bins", bins}});
  }
  json confusion = json::array();
  for (const auto& c : r.confusion) {
    json cells = json::array();
    for (const auto& row : c.cells) {
      json jr = json::array();
      for (const auto& s : row) jr.push_back(stat(s));
      cells.push_back(std::move(jr));
    }
    confusion.push_back({{"metric", c.metric}, {"spec", spec_json(c.spec)}, {"cells", cells}});
  }
  json failures = json::array();
  for (const auto& f : r.failures)
    failures.push_back({{"entry_id", f.entry_id}, {"stage", f.stage}, {"code", f.code}, {"message", f.message}});
  json records = json::array();
  for (const auto& v : r.records)
    records.push_back({{"method", v.method},
                       {"video_id", v.video_id},
                       {"reference_id", v.reference_id},
                       {"metrics", value_map(v.metrics)},
                       {"stats", value_map(v.stats)}});
  return {{"schema", "thbench-report"},
          {"schema_version", r.schema_version},
          {"provenance", prov},
          {"methods", methods},
          {"binned", binned},
          {"confusion", confusion},
          {"failures", failures},
          {"records", records}};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::string stat_cells(const std::optional<BinStat>& s, char sep) {
  if (!s) return std::string(1, sep) + "0";
  return detail::format_double(s->mean) + sep + std::to_string(s->count);
}

}  // namespace

std::string to_json(const MetricReport& report, bool include_timestamp) {
  return to_json_value(report, include_timestamp).dump(2) + "\n";
}

std::string report_body(const MetricReport& report) { return to_json(report, false); }

MetricReport report_from_json(const std::string& text) {
  MetricReport r;
  try {
    const json j = json::parse(text);
    require(j.value("schema", std::string()) == "thbench-report", ErrorCode::kInvalidInput, "not a thbench report");
    r.schema_version = j.at("schema_version").get<int>();
    require(r.schema_version == kSchemaVersion, ErrorCode::kInvalidInput,
            "unsupported report schema version " + std::to_string(r.schema_version));
    const auto& p = j.at("provenance");
    r.provenance.config_hash = p.value("config_hash", std::string());
    r.provenance.fingerprints = p.value("fingerprints", std::map<std::string, std::string>{});
    r.provenance.created_at = p.value("created_at", std::string());
    for (const auto& m : j.at("methods")) {
      MethodAggregate agg{m.at("method").get<std::string>(), {}, value_map_from(m.at("set_metrics"))};
      for (const auto& [k, v] : m.at("metrics").items()) agg.metrics[k] = *stat_from(v);
      r.methods.push_back(std::move(agg));
    }
    for (const auto& b : j.at("binned")) {
      BinnedMetric bm{b.at("method").get<std::string>(), b.at("metric").get<std::string>(), spec_from(b.at("spec")), {}};
      for (const auto& s : b.at("bins")) bm.bins.push_back(stat_from(s));
      r.binned.push_back(std::move(bm));
    }
    for (const auto& c : j.at("confusion")) {
      ConfusionMatrix cm{spec_from(c.at("spec")), c.at("metric").get<std::string>(), {}};
      for (const auto& row : c.at("cells")) {
        std::vector<std::optional<BinStat>> cells;
        for (const auto& s : row) cells.push_back(stat_from(s));
        cm.cells.push_back(std::move(cells));
      }
      r.confusion.push_back(std::move(cm));
    }
    for (const auto& f : j.at("failures"))
      r.failures.push_back({f.at("entry_id").get<std::string>(), f.at("stage").get<std::string>(),
                            f.at("code").get<std::string>(), f.at("message").get<std::string>()});
    for (const auto& v : j.at("records"))
      r.records.push_back({v.at("method").get<std::string>(), v.at("video_id").get<std::string>(),
                           v.at("reference_id").get<std::string>(), value_map_from(v.at("metrics")),
                           value_map_from(v.at("stats"))});
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidInput, std::string("malformed report JSON: ") + e.what());
  }
  return r;
}

void write_report(const std::filesystem::path& dir, const MetricReport& report) {
  detail::write_file(dir / "report.json", to_json(report));

  std::set<std::string> metric_names, stat_names;
  for (const auto& r : report.records) {
    for (const auto& kv : r.metrics) metric_names.insert(kv.first);
    for (const auto& kv : r.stats) stat_names.insert(kv.first);
  }
  std::string csv = "method,video_id,reference_id";
  for (const auto& m : metric_names) csv += "," + csv_field(m);
  for (const auto& s : stat_names) csv += "," + csv_field("stat_" + s);
  csv += '\n';
  for (const auto& r : report.records) {
    csv += csv_field(r.method) + "," + csv_field(r.video_id) + "," + csv_field(r.reference_id);
    for (const auto* names : {&metric_names, &stat_names}) {
      const auto& values = names == &metric_names ? r.metrics : r.stats;
      for (const auto& n : *names) {
        csv += ',';
        if (const auto it = values.find(n); it != values.end()) csv += detail::format_double(it->second);
      }
    }
    csv += '\n';
  }
  detail::write_file(dir / "records.csv", csv);

  std::string agg = "method,metric,mean,count\n";
  for (const auto& m : report.methods) {
    for (const auto& [name, s] : m.metrics)
      agg += csv_field(m.method) + "," + csv_field(name) + "," + stat_cells(s, ',') + "\n";
    for (const auto& [name, v] : m.set_metrics)
      agg += csv_field(m.method) + "," + csv_field(name) + "," + detail::format_double(v) + ",\n";
  }
  detail::write_file(dir / "aggregates.csv", agg);

  // Empty bins keep an empty mean so they never read as zero.
  std::string binned = "method\tmetric\taxis\tbin_lo\tbin_hi\tmean\tcount\n";
  for (const auto& b : report.binned)
    for (std::size_t i = 0; i < b.bins.size(); ++i)
      binned += b.method + "\t" + b.metric + "\t" + to_string(b.spec.axis) + "\t" +
                detail::format_double(b.spec.edges[i]) + "\t" + detail::format_double(b.spec.edges[i + 1]) + "\t" +
                stat_cells(b.bins[i], '\t') + "\n";
  detail::write_file(dir / "binned.tsv", binned);

  std::string conf = "metric\taxis\treference_lo\treference_hi\ttarget_lo\ttarget_hi\tmean\tcount\n";
  for (const auto& c : report.confusion)
    for (std::size_t i = 0; i < c.cells.size(); ++i)
      for (std::size_t j = 0; j < c.cells[i].size(); ++j)
        conf += c.metric + "\t" + to_string(c.spec.axis) + "\t" + detail::format_double(c.spec.edges[i]) + "\t" +
                detail::format_double(c.spec.edges[i + 1]) + "\t" + detail::format_double(c.spec.edges[j]) + "\t" +
                detail::format_double(c.spec.edges[j + 1]) + "\t" + stat_cells(c.cells[i][j], '\t') + "\n";
  detail::write_file(dir / "confusion.tsv", conf);

  std::string fails = "entry_id,stage,code,message\n";
  for (const auto& f : report.failures)
    fails += csv_field(f.entry_id) + "," + csv_field(f.stage) + "," + csv_field(f.code) + "," + csv_field(f.message) + "\n";
  detail::write_file(dir / "failures.csv", fails);
}

MetricReport read_report(const std::filesystem::path& report_json) {
  return report_from_json(detail::read_file(report_json));
}

}  // namespace thbench::report
