#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "thbench/bench.hpp"

namespace thbench::synthetic {

/// Rendered talking-face fixture: real clips of a drawn face turning its head,
/// speaking one word (mouth rhythm) with one emotion (mouth corners, brows)
/// and blinking, plus generated counterparts per method.
struct DatasetSpec {
  std::string dataset_id = "synthetic";
  int clips_per_split = 4;
  std::vector<std::string> splits{"test"};
  int frames = 24;
  int width = 128;
  int height = 128;
  double fps = 25.0;
  double yaw_amplitude = 25.0;  // degrees
  // "copy" (pixel identical), "noisy" (additive noise) or "blur".
  std::vector<std::string> methods{"copy", "noisy"};
  std::vector<std::string> words{"about", "bring", "change"};
  std::vector<std::string> emotions{"neutral", "happy", "sad"};
  int blinks_per_clip = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Writes frames (PNG directories), 3D landmark CSVs and manifest.json under
/// `dir` and returns the manifest.
bench::DatasetManifest write_dataset(const std::filesystem::path& dir, const DatasetSpec& spec);

/// Overwrites one frame of the entry's source with bytes that no decoder
/// accepts.
void corrupt_entry(const bench::ManifestEntry& entry);

}  // namespace thbench::synthetic
