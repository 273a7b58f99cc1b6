#include "thbench/landmark_io.hpp"

#include <sstream>

#include <nlohmann/json.hpp>

#include "text_util.hpp"

namespace thbench::geom {

using detail::format_double;
using detail::parse_double;
using detail::parse_double_or_throw;

LandmarkSequence read_landmarks_csv(const std::filesystem::path& path, double frame_rate) {
  const auto lines = detail::read_lines(path);
  std::vector<LandmarkFrame> frames;
  int dims = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const auto fields = detail::split(lines[i]);
    double probe = 0.0;
    if (frames.empty() && dims == 0 && !parse_double(fields.front(), probe)) continue;  // header
    const auto n = static_cast<int>(fields.size());
    const int d = n / kNumLandmarks;
    if (n % kNumLandmarks != 0 || (d != 2 && d != 3))
      fail(ErrorCode::kInvalidInput, path.string() + ":" + std::to_string(i + 1) +
                                         ": expected 136 or 204 values, got " + std::to_string(n));
    if (dims == 0) dims = d;
    if (d != dims)
      fail(ErrorCode::kInvalidInput, path.string() + ": landmark dimensionality changes at line " +
                                         std::to_string(i + 1));
    LandmarkFrame f(kNumLandmarks, d);
    const std::string ctx = path.string() + ":" + std::to_string(i + 1);
    for (int p = 0; p < kNumLandmarks; ++p)
      for (int c = 0; c < d; ++c) f(p, c) = parse_double_or_throw(fields[p * d + c], ctx);
    frames.push_back(std::move(f));
  }
  if (frames.empty()) fail(ErrorCode::kInvalidInput, path.string() + ": no landmark frames");
  return LandmarkSequence(std::move(frames), frame_rate);
}

void write_landmarks_csv(const std::filesystem::path& path, const LandmarkSequence& lms) {
  std::ostringstream out;
  for (const auto& f : lms.frames()) {
    for (int p = 0; p < kNumLandmarks; ++p)
      for (int c = 0; c < f.cols(); ++c) {
        if (p || c) out << ',';
        out << format_double(f(p, c));
      }
    out << '\n';
  }
  detail::write_file(path, out.str());
}

LandmarkSequence read_landmarks_json(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(detail::read_file(path));
    std::vector<LandmarkFrame> frames;
    for (const auto& jf : doc.at("frames")) {
      if (jf.size() != kNumLandmarks)
        fail(ErrorCode::kInvalidInput, path.string() + ": frame without 68 points");
      const auto d = static_cast<int>(jf.at(0).size());
      LandmarkFrame f(kNumLandmarks, d);
      for (int p = 0; p < kNumLandmarks; ++p) {
        if (static_cast<int>(jf[p].size()) != d)
          fail(ErrorCode::kInvalidInput, path.string() + ": ragged landmark point");
        for (int c = 0; c < d; ++c) f(p, c) = jf[p][c].get<double>();
      }
      frames.push_back(std::move(f));
    }
    if (frames.empty()) fail(ErrorCode::kInvalidInput, path.string() + ": no landmark frames");
    return LandmarkSequence(std::move(frames), doc.value("frame_rate", 25.0));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidInput, path.string() + ": " + e.what());
  }
}

void write_landmarks_json(const std::filesystem::path& path, const LandmarkSequence& lms) {
  nlohmann::json doc;
  doc["frame_rate"] = lms.frame_rate();
  auto& frames = doc["frames"] = nlohmann::json::array();
  for (const auto& f : lms.frames()) {
    nlohmann::json jf = nlohmann::json::array();
    for (int p = 0; p < kNumLandmarks; ++p) {
      nlohmann::json pt = nlohmann::json::array();
      for (int c = 0; c < f.cols(); ++c) pt.push_back(f(p, c));
      jf.push_back(std::move(pt));
    }
    frames.push_back(std::move(jf));
  }
  detail::write_file(path, doc.dump());
}

LandmarkSequence read_landmarks(const std::filesystem::path& path, double frame_rate) {
  if (path.extension() == ".json") return read_landmarks_json(path);
  return read_landmarks_csv(path, frame_rate);
}

void write_crop_rects_csv(const std::filesystem::path& path, std::span<const CropRect> rects) {
  std::ostringstream out;
  out << "frame,x,y,side\n";
  for (std::size_t t = 0; t < rects.size(); ++t)
    out << t << ',' << rects[t].x << ',' << rects[t].y << ',' << rects[t].side << '\n';
  detail::write_file(path, out.str());
}

std::vector<CropRect> read_crop_rects_csv(const std::filesystem::path& path) {
  std::vector<CropRect> rects;
  const auto lines = detail::read_lines(path);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const auto f = detail::split(lines[i]);
    if (f.size() != 4) fail(ErrorCode::kInvalidInput, path.string() + ": malformed crop row");
    const std::string ctx = path.string();
    rects.push_back({static_cast<int>(parse_double_or_throw(f[1], ctx)),
                     static_cast<int>(parse_double_or_throw(f[2], ctx)),
                     static_cast<int>(parse_double_or_throw(f[3], ctx))});
  }
  return rects;
}

void write_pose_trace_csv(const std::filesystem::path& path, const PoseTrace& trace) {
  std::ostringstream out;
  out << "frame,pitch,yaw,roll,residual\n";
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const auto i = static_cast<Eigen::Index>(t);
    out << t << ',' << format_double(trace.angles()(i, 0)) << ','
        << format_double(trace.angles()(i, 1)) << ',' << format_double(trace.angles()(i, 2)) << ','
        << format_double(trace.residuals()[t]) << '\n';
  }
  detail::write_file(path, out.str());
}

PoseTrace read_pose_trace_csv(const std::filesystem::path& path) {
  const auto lines = detail::read_lines(path);
  std::vector<std::array<double, 3>> rows;
  std::vector<double> residuals;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const auto f = detail::split(lines[i]);
    if (f.size() != 5) fail(ErrorCode::kInvalidInput, path.string() + ": malformed pose row");
    const std::string ctx = path.string();
    rows.push_back({parse_double_or_throw(f[1], ctx), parse_double_or_throw(f[2], ctx),
                    parse_double_or_throw(f[3], ctx)});
    residuals.push_back(parse_double_or_throw(f[4], ctx));
  }
  Eigen::MatrixX3d angles(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (int c = 0; c < 3; ++c) angles(static_cast<Eigen::Index>(t), c) = rows[t][c];
  return PoseTrace(std::move(angles), std::move(residuals));
}

}  // namespace thbench::geom
