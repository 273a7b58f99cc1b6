#include <cstdio>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "text_util.hpp"
#include "thbench/bench.hpp"
#include "thbench/error.hpp"
#include "thbench/hash.hpp"
#include "thbench/landmark_io.hpp"

namespace thbench::bench {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(EntryState s) {
  switch (s) {
    case EntryState::kProcessed: return "processed";
    case EntryState::kSkipped: return "skipped";
    case EntryState::kFailed: return "failed";
  }
  return "?";
}

namespace {

constexpr const char* kStampFile = ".stamp";

std::string source_fingerprint(const fs::path& source) {
  if (!fs::is_directory(source)) return file_fingerprint(source);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(source))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  Fnv1a h;
  for (const auto& f : files) {
    h.update(f.filename().string());
    h.update(file_fingerprint(f));
  }
  return h.hex();
}

std::string entry_stamp(const ManifestEntry& e, const BenchConfig& cfg) {
  const json j = {{"version", 1},
                  {"source", source_fingerprint(e.source)},
                  {"landmarks", file_fingerprint(e.landmarks)},
                  {"window", cfg.smoothing.window_size},
                  {"boundary", static_cast<int>(cfg.smoothing.boundary)},
                  {"crop", {cfg.crop.r1, cfg.crop.r2, cfg.crop.side_factor, cfg.crop.output_size}}};
  return fnv1a_hex(j.dump());
}

std::string frame_name(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05zu.png", t);
  return buf;
}

EntryStatus preprocess_entry(const ManifestEntry& e, const BenchConfig& cfg, const OutputLayout& out) {
  const fs::path dir = out.crops / e.id;
  const fs::path stamp_path = dir / kStampFile;
  const std::string stamp = entry_stamp(e, cfg);
  if (fs::exists(stamp_path) && detail::read_file(stamp_path) == stamp) return {e.id, EntryState::kSkipped, ""};

  fs::remove_all(dir);
  fs::remove(out.poses / (e.id + ".pose.csv"));
  fs::remove(out.poses / (e.id + ".landmarks.csv"));

  const auto frames = read_frames(e.source);
  const auto lms = geom::read_landmarks(e.landmarks);
  require(frames.size() == lms.size(), ErrorCode::kInvalidInput,
          e.id + ": " + std::to_string(frames.size()) + " frames but " + std::to_string(lms.size()) +
              " landmark frames");
  const auto clip = geom::track_and_crop(frames, lms, cfg.crop, cfg.smoothing);

  fs::create_directories(dir);
  for (std::size_t t = 0; t < clip.frames.size(); ++t) {
    const auto path = dir / frame_name(t);
    require(cv::imwrite(path.string(), clip.frames[t]), ErrorCode::kIo, "cannot write " + path.string());
  }
  geom::write_crop_rects_csv(dir / "rects.csv", clip.plan.rects);

  // Landmarks in crop coordinates, for eye crops taken after preprocessing.
  std::vector<geom::LandmarkFrame> local;
  local.reserve(lms.size());
  for (std::size_t t = 0; t < lms.size(); ++t) {
    const auto& r = clip.plan.rects[t];
    const double s = cfg.crop.output_size > 0 ? static_cast<double>(cfg.crop.output_size) / r.side : 1.0;
    geom::LandmarkFrame f = lms[t].leftCols(2);
    f.col(0) = (f.col(0).array() - r.x) * s;
    f.col(1) = (f.col(1).array() - r.y) * s;
    local.push_back(std::move(f));
  }
  geom::write_landmarks_csv(out.poses / (e.id + ".landmarks.csv"), geom::LandmarkSequence(local, lms.frame_rate()));
  if (lms.dims() == 3)
    geom::write_pose_trace_csv(out.poses / (e.id + ".pose.csv"),
                               geom::estimate_pose_trace(lms, geom::CanonicalFace::standard()));

  detail::write_file(stamp_path, stamp);
  return {e.id, EntryState::kProcessed, std::to_string(clip.frames.size()) + " frames"};
}

}  // namespace

PreprocessSummary run_preprocess(const DatasetManifest& manifest, const BenchConfig& cfg) {
  cfg.validate();
  const OutputLayout out(cfg.output_dir);
  out.create();
  PreprocessSummary summary;
  summary.entries.resize(manifest.entries.size());
  parallel_for(manifest.entries.size(), cfg.workers, [&](std::size_t i, int) {
    const auto& e = manifest.entries[i];
    try {
      summary.entries[i] = preprocess_entry(e, cfg, out);
    } catch (const Error& err) {
      summary.entries[i] = {e.id, EntryState::kFailed, std::string(to_string(err.code())) + ": " + err.what()};
    } catch (const std::exception& err) {
      summary.entries[i] = {e.id, EntryState::kFailed, std::string("exception: ") + err.what()};
    }
  });

  std::string log;
  for (const auto& s : summary.entries) {
    log += json{{"id", s.id}, {"state", to_string(s.state)}, {"message", s.message}}.dump() + "\n";
    switch (s.state) {
      case EntryState::kProcessed: ++summary.processed; break;
      case EntryState::kSkipped: ++summary.skipped; break;
      case EntryState::kFailed: ++summary.failed; break;
    }
  }
  detail::write_file(out.crops / "preprocess_log.jsonl", log);
  return summary;
}

PreparedClip load_prepared(const OutputLayout& out, const std::string& id) {
  const fs::path dir = out.crops / id;
  require(fs::exists(dir / kStampFile), ErrorCode::kIo, id + ": no preprocessed crops (run preprocess first)");
  PreparedClip clip;
  clip.frames = read_frames(dir);
  clip.landmarks = geom::read_landmarks_csv(out.poses / (id + ".landmarks.csv")).frames();
  require(clip.landmarks.size() == clip.frames.size(), ErrorCode::kIo, id + ": crop and landmark counts differ");
  if (const auto pose = out.poses / (id + ".pose.csv"); fs::exists(pose)) clip.pose = geom::read_pose_trace_csv(pose);
  return clip;
}

}  // namespace thbench::bench
