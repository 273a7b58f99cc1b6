#pragma once

#include <filesystem>
#include <span>

#include "thbench/geom.hpp"

namespace thbench::geom {

/// CSV landmarks: one line per frame holding x0,y0[,z0],x1,y1[,z1],... for the
/// 68 points. A leading non-numeric header line is skipped. CSV carries no
/// frame rate, so the caller supplies it.
LandmarkSequence read_landmarks_csv(const std::filesystem::path& path, double frame_rate = 25.0);
void write_landmarks_csv(const std::filesystem::path& path, const LandmarkSequence& lms);

/// JSON landmarks: {"frame_rate": 25, "frames": [[[x, y(, z)], ... 68], ...]}.
LandmarkSequence read_landmarks_json(const std::filesystem::path& path);
void write_landmarks_json(const std::filesystem::path& path, const LandmarkSequence& lms);

/// Dispatches on the extension (.json, otherwise CSV).
LandmarkSequence read_landmarks(const std::filesystem::path& path, double frame_rate = 25.0);

/// frame,x,y,side per line with a header row.
void write_crop_rects_csv(const std::filesystem::path& path, std::span<const CropRect> rects);
std::vector<CropRect> read_crop_rects_csv(const std::filesystem::path& path);

/// frame,pitch,yaw,roll,residual per line with a header row.
void write_pose_trace_csv(const std::filesystem::path& path, const PoseTrace& trace);
PoseTrace read_pose_trace_csv(const std::filesystem::path& path);

}  // namespace thbench::geom
