#include "thbench/features.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "text_util.hpp"

namespace thbench {

FeatureVector::FeatureVector(std::vector<double> values, std::string source)
    : values_(std::move(values)), source_(std::move(source)) {
  require(!values_.empty(), ErrorCode::kInvalidArgument, "feature vector has zero dimensions");
  double sq = 0.0;
  for (double v : values_) {
    require(std::isfinite(v), ErrorCode::kInvalidArgument, "feature vector has non-finite entries");
    sq += v * v;
  }
  norm_ = std::sqrt(sq);
}

void write_features_csv(const std::filesystem::path& path, std::span<const FeatureRecord> records) {
  std::ostringstream out;
  const std::size_t d = records.empty() ? 0 : records.front().feature.dim();
  bool shared_source = !records.empty() && !records.front().feature.source().empty();
  for (const auto& r : records) {
    require(r.feature.dim() == d, ErrorCode::kInvalidArgument, "feature export with mixed dimensions");
    require(r.id.find(',') == std::string::npos && (!r.label || r.label->find(',') == std::string::npos),
            ErrorCode::kInvalidArgument, "feature ids and labels must not contain commas");
    shared_source = shared_source && r.feature.source() == records.front().feature.source();
  }
  if (shared_source) out << "# source=" << records.front().feature.source() << '\n';
  out << "id,label";
  for (std::size_t i = 0; i < d; ++i) out << ",f" << i;
  out << '\n';
  for (const auto& r : records) {
    out << r.id << ',' << r.label.value_or("");
    for (double v : r.feature.values()) out << ',' << detail::format_double(v);
    out << '\n';
  }
  detail::write_file(path, out.str());
}

std::vector<FeatureRecord> read_features_csv(const std::filesystem::path& path) {
  const auto lines = detail::read_lines(path);
  std::vector<FeatureRecord> records;
  std::string source;
  bool header_seen = false;
  for (const auto& line : lines) {
    if (line.rfind("# source=", 0) == 0) {
      source = line.substr(9);
      continue;
    }
    if (detail::trim(line).empty()) continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto f = detail::split(line);
    if (f.size() < 3) fail(ErrorCode::kInvalidInput, path.string() + ": malformed feature row");
    std::vector<double> values;
    values.reserve(f.size() - 2);
    for (std::size_t i = 2; i < f.size(); ++i)
      values.push_back(detail::parse_double_or_throw(f[i], path.string()));
    std::optional<std::string> label;
    if (!f[1].empty()) label = std::string(f[1]);
    records.push_back({std::string(f[0]), std::move(label), FeatureVector(std::move(values), source)});
  }
  return records;
}

Eigen::MatrixXd stack_features(std::span<const FeatureVector> features) {
  require(!features.empty(), ErrorCode::kInvalidArgument, "no features to stack");
  const auto d = static_cast<Eigen::Index>(features.front().dim());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(features.size()), d);
  for (std::size_t i = 0; i < features.size(); ++i) {
    require(static_cast<Eigen::Index>(features[i].dim()) == d, ErrorCode::kInvalidArgument,
            "features differ in dimension");
    m.row(static_cast<Eigen::Index>(i)) = features[i].as_eigen().transpose();
  }
  return m;
}

double compensated_mean(std::span<const double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0, comp = 0.0;
  for (double v : values) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      comp += (sum - t) + v;
    else
      comp += (v - t) + sum;
    sum = t;
  }
  // An infinite term makes the compensation NaN; the plain sum is exact there.
  if (!std::isfinite(sum)) return sum / static_cast<double>(values.size());
  return (sum + comp) / static_cast<double>(values.size());
}

}  // namespace thbench
