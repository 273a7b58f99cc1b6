#include "thbench/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "text_util.hpp"
#include "thbench/error.hpp"
#include "thbench/landmark_io.hpp"

namespace thbench::synthetic {

namespace fs = std::filesystem;

void DatasetSpec::validate() const {
  auto check = [](bool ok, const std::string& msg) { require(ok, ErrorCode::kConfiguration, "synthetic: " + msg); };
  check(clips_per_split > 0, "clips_per_split must be positive");
  check(!splits.empty(), "at least one split is required");
  check(frames >= 2, "frames must be at least 2");
  check(width >= 32 && height >= 32, "frames must be at least 32 x 32");
  check(fps > 0, "fps must be positive");
  check(!words.empty() && !emotions.empty(), "words and emotions must be non-empty");
  check(blinks_per_clip >= 0, "blinks_per_clip must be non-negative");
  for (const auto& m : methods) check(m == "copy" || m == "noisy" || m == "blur", "unknown method '" + m + "'");
}

namespace {

constexpr int kShift = 4;
constexpr double kSub = 1 << kShift;

struct ClipStyle {
  cv::Scalar background, skin, brow;
  cv::Mat texture;                         // static background noise
  std::vector<std::array<int, 3>> marks;   // freckles as landmark barycentres
  double phase = 0.0;
  double drift = 0.0;
};

struct ClipScript {
  int word = 0;
  int emotion = 0;
  std::vector<bool> closed;
};

cv::Point px(double x, double y) {
  return {static_cast<int>(std::lround(x * kSub)), static_cast<int>(std::lround(y * kSub))};
}

std::vector<cv::Point> poly(const Eigen::MatrixXd& p, int first, int last) {
  std::vector<cv::Point> out;
  for (int i = first; i <= last; ++i) out.push_back(px(p(i, 0), p(i, 1)));
  return out;
}

// Canonical shape deformed by speech, expression and eyelids.
Eigen::MatrixXd expressive_shape(const ClipScript& s, int t, int frames, int num_words) {
  Eigen::MatrixXd p = geom::CanonicalFace::standard().points();
  const double cycles = 1.0 + s.word * 3.0 / std::max(1, num_words - 1) + 0.5 * s.word;
  const double open = 14.0 * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * cycles * t / frames));
  for (int i : {55, 56, 57, 58, 59, 65, 66, 67}) p(i, 1) += open;
  for (int i : {6, 7, 8, 9, 10}) p(i, 1) += 0.5 * open;
  const double corner = s.emotion == 1 ? -7.0 : s.emotion == 2 ? 6.0 : 0.0;
  for (int i : {48, 54, 60, 64}) p(i, 1) += corner;
  if (s.emotion == 2)
    for (int i : {20, 21, 22, 23}) p(i, 1) -= 6.0;
  if (s.closed[static_cast<std::size_t>(t)]) {
    for (auto [corner_a, corner_b, lids] :
         {std::tuple{36, 39, std::array{37, 38, 40, 41}}, std::tuple{42, 45, std::array{43, 44, 46, 47}}}) {
      const double y = 0.5 * (p(corner_a, 1) + p(corner_b, 1));
      for (int i : lids) p(i, 1) = y + (i == lids[0] || i == lids[1] ? -0.4 : 0.4);
    }
  }
  return p;
}

cv::Mat render(const Eigen::MatrixXd& lm, const ClipStyle& style, const DatasetSpec& spec, bool closed) {
  cv::Mat img(spec.height, spec.width, CV_8UC3, style.background);
  cv::add(img, style.texture, img);
  std::vector<cv::Point> outline;
  {
    std::vector<cv::Point> pts = poly(lm, 0, 26), hull;
    cv::convexHull(pts, hull);
    outline = hull;
  }
  cv::fillConvexPoly(img, outline, style.skin, cv::LINE_AA, kShift);
  const double unit = std::max(1.0, (lm.col(0).maxCoeff() - lm.col(0).minCoeff()) / 60.0);
  for (const auto& m : style.marks) {
    const Eigen::RowVectorXd c = (lm.row(m[0]) + lm.row(m[1]) + lm.row(m[2])) / 3.0;
    cv::circle(img, px(c(0), c(1)), static_cast<int>(unit * kSub), style.skin * 0.7, cv::FILLED, cv::LINE_AA, kShift);
  }
  const int thick = std::max(1, static_cast<int>(unit));
  cv::polylines(img, std::vector{poly(lm, 17, 21), poly(lm, 22, 26)}, false, style.brow, 2 * thick, cv::LINE_AA, kShift);
  cv::polylines(img, std::vector{poly(lm, 27, 30), poly(lm, 31, 35)}, false, style.skin * 0.6, thick, cv::LINE_AA,
                kShift);
  for (int first : {36, 42}) {
    const auto eye = poly(lm, first, first + 5);
    if (closed) {
      cv::polylines(img, std::vector{eye}, true, cv::Scalar(40, 40, 40), thick, cv::LINE_AA, kShift);
      continue;
    }
    cv::fillPoly(img, std::vector{eye}, cv::Scalar(235, 235, 235), cv::LINE_AA, kShift);
    const Eigen::RowVectorXd c = lm.middleRows(first, 6).colwise().mean();
    const double r = 0.3 * (lm(first + 3, 0) - lm(first, 0));
    cv::circle(img, px(c(0), c(1)), static_cast<int>(std::abs(r) * kSub), cv::Scalar(60, 40, 20), cv::FILLED,
               cv::LINE_AA, kShift);
  }
  cv::fillPoly(img, std::vector{poly(lm, 48, 59)}, cv::Scalar(60, 50, 150), cv::LINE_AA, kShift);
  cv::fillPoly(img, std::vector{poly(lm, 60, 67)}, cv::Scalar(30, 20, 50), cv::LINE_AA, kShift);
  return img;
}

ClipStyle random_style(std::mt19937_64& rng, const DatasetSpec& spec) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ClipStyle s;
  s.background = cv::Scalar(60 + 120 * u(rng), 60 + 120 * u(rng), 60 + 120 * u(rng));
  s.skin = cv::Scalar(90 + 60 * u(rng), 130 + 50 * u(rng), 170 + 60 * u(rng));
  s.brow = cv::Scalar(30 + 40 * u(rng), 30 + 30 * u(rng), 30 + 30 * u(rng));
  s.texture = cv::Mat(spec.height, spec.width, CV_8UC3);
  cv::RNG(rng()).fill(s.texture, cv::RNG::UNIFORM, cv::Scalar::all(0), cv::Scalar::all(24));
  std::uniform_int_distribution<int> lm(0, geom::kNumLandmarks - 1);
  for (int i = 0; i < 6; ++i) s.marks.push_back({lm(rng), lm(rng), lm(rng)});
  s.phase = 2.0 * std::numbers::pi * u(rng);
  s.drift = u(rng) - 0.5;
  return s;
}

ClipScript random_script(std::mt19937_64& rng, const DatasetSpec& spec, int index) {
  ClipScript s;
  s.word = index % static_cast<int>(spec.words.size());
  s.emotion = (index / static_cast<int>(spec.words.size())) % static_cast<int>(spec.emotions.size());
  s.closed.assign(static_cast<std::size_t>(spec.frames), false);
  constexpr int kBlinkLength = 3;
  std::uniform_int_distribution<int> start(0, std::max(0, spec.frames - kBlinkLength));
  for (int b = 0; b < spec.blinks_per_clip; ++b) {
    const int s0 = start(rng);
    for (int t = s0; t < std::min(spec.frames, s0 + kBlinkLength); ++t) s.closed[static_cast<std::size_t>(t)] = true;
  }
  return s;
}

std::string frame_file(int t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05d.png", t);
  return buf;
}

void write_png(const fs::path& path, const cv::Mat& img) {
  require(cv::imwrite(path.string(), img), ErrorCode::kIo, "cannot write " + path.string());
}

}  // namespace

bench::DatasetManifest write_dataset(const fs::path& dir, const DatasetSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  bench::DatasetManifest manifest;
  manifest.dataset_id = spec.dataset_id;
  const double scale = 0.42 * std::min(spec.width, spec.height) / 140.0;

  int clip_index = 0;
  for (const auto& split : spec.splits) {
    for (int c = 0; c < spec.clips_per_split; ++c, ++clip_index) {
      char id[64];
      std::snprintf(id, sizeof(id), "%s_real_%03d", split.c_str(), c);
      const ClipStyle style = random_style(rng, spec);
      const ClipScript script = random_script(rng, spec, clip_index);
      const fs::path frames_rel = fs::path("frames") / id;
      const fs::path lms_rel = fs::path("landmarks") / (std::string(id) + ".csv");
      fs::create_directories(dir / frames_rel);

      std::vector<geom::LandmarkFrame> observed;
      std::vector<cv::Mat> images;
      for (int t = 0; t < spec.frames; ++t) {
        const double w = 2.0 * std::numbers::pi * t / spec.frames + style.phase;
        const geom::EulerAngles angles{4.0 * std::sin(2 * w), spec.yaw_amplitude * std::sin(w), 3.0 * std::cos(w)};
        const Eigen::Matrix3d r = geom::rotation_from_euler(angles);
        const Eigen::RowVector3d centre(spec.width / 2.0 + 4.0 * style.drift * std::sin(w), spec.height / 2.0, 0.0);
        Eigen::MatrixXd lm = (scale * expressive_shape(script, t, spec.frames, static_cast<int>(spec.words.size())) *
                              r.transpose()).rowwise() + centre;
        images.push_back(render(lm, style, spec, script.closed[static_cast<std::size_t>(t)]));
        write_png(dir / frames_rel / frame_file(t), images.back());
        observed.push_back(std::move(lm));
      }
      geom::write_landmarks_csv(dir / lms_rel, geom::LandmarkSequence(observed, spec.fps));
      const std::map<std::string, std::string> labels{
          {"word", spec.words[static_cast<std::size_t>(script.word)]},
          {"emotion", spec.emotions[static_cast<std::size_t>(script.emotion)]}};
      manifest.entries.push_back({id, frames_rel, lms_rel, split, "", "", labels});

      for (const auto& method : spec.methods) {
        char fid[96];
        std::snprintf(fid, sizeof(fid), "%s_%s_%03d", split.c_str(), method.c_str(), c);
        const fs::path fake_rel = fs::path("frames") / fid;
        fs::create_directories(dir / fake_rel);
        std::mt19937_64 noise_rng(spec.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(clip_index + 1)));
        std::normal_distribution<double> noise(0.0, 8.0);
        for (int t = 0; t < spec.frames; ++t) {
          const auto& src = images[static_cast<std::size_t>(t)];
          const fs::path dst = dir / fake_rel / frame_file(t);
          if (method == "copy") {
            fs::copy_file(dir / frames_rel / frame_file(t), dst, fs::copy_options::overwrite_existing);
            continue;
          }
          cv::Mat out;
          if (method == "blur") {
            cv::GaussianBlur(src, out, cv::Size(), 1.5);
          } else {
            cv::Mat n(src.size(), CV_64FC3);
            for (auto it = n.begin<cv::Vec3d>(); it != n.end<cv::Vec3d>(); ++it)
              *it = cv::Vec3d(noise(noise_rng), noise(noise_rng), noise(noise_rng));
            cv::Mat f;
            src.convertTo(f, CV_64FC3);
            cv::Mat sum = f + n;
            sum.convertTo(out, CV_8UC3);
          }
          write_png(dst, out);
        }
        manifest.entries.push_back({fid, fake_rel, lms_rel, split, method, id, labels});
      }
    }
  }
  const fs::path path = dir / "manifest.json";
  bench::save_manifest(path, manifest);
  return bench::load_manifest(path);
}

void corrupt_entry(const bench::ManifestEntry& entry) {
  fs::path target = entry.source;
  if (fs::is_directory(target)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(target))
      if (e.is_regular_file()) files.push_back(e.path());
    require(!files.empty(), ErrorCode::kIo, "corrupt_entry: " + target.string() + " is empty");
    std::sort(files.begin(), files.end());
    target = files.front();
  }
  detail::write_file(target, "not an image\n");
}

}  // namespace thbench::synthetic
