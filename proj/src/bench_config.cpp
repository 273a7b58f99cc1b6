#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/videoio.hpp>

#include "stnet_json.hpp"
#include "text_util.hpp"
#include "thbench/bench.hpp"
#include "thbench/error.hpp"
#include "thbench/hash.hpp"

namespace thbench::bench {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Manifest

const ManifestEntry* DatasetManifest::find(const std::string& id) const {
  const auto it = std::find_if(entries.begin(), entries.end(), [&](const ManifestEntry& e) { return e.id == id; });
  return it == entries.end() ? nullptr : &*it;
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& e : entries) {
    require(!e.id.empty(), ErrorCode::kInvalidInput, "manifest entry without id");
    require(ids.insert(e.id).second, ErrorCode::kInvalidInput, "duplicate manifest id '" + e.id + "'");
    require(fs::exists(e.source), ErrorCode::kInvalidInput, e.id + ": source " + e.source.string() + " not found");
    require(fs::exists(e.landmarks), ErrorCode::kInvalidInput,
            e.id + ": landmarks " + e.landmarks.string() + " not found");
  }
  // (method, split, real id) -> generated clip; a second clip for the same key
  // would break the bijection.
  std::map<std::tuple<std::string, std::string, std::string>, std::string> paired;
  for (const auto& e : entries) {
    if (e.is_real()) {
      require(e.real_id.empty(), ErrorCode::kInvalidInput, e.id + ": real clips cannot name a real_id");
      continue;
    }
    const ManifestEntry* real = find(e.real_id);
    require(real != nullptr, ErrorCode::kPairing, e.id + ": paired real clip '" + e.real_id + "' not in manifest");
    require(real->is_real(), ErrorCode::kPairing, e.id + ": pairs with generated clip '" + e.real_id + "'");
    require(real->split == e.split, ErrorCode::kPairing, e.id + ": paired clip '" + e.real_id + "' is in another split");
    const auto [it, fresh] = paired.emplace(std::make_tuple(e.method, e.split, e.real_id), e.id);
    require(fresh, ErrorCode::kPairing,
            "method '" + e.method + "' pairs both '" + it->second + "' and '" + e.id + "' with '" + e.real_id + "'");
  }
}

DatasetManifest load_manifest(const fs::path& path) {
  DatasetManifest m;
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  try {
    const json j = json::parse(detail::read_file(path));
    m.dataset_id = j.value("dataset_id", path.stem().string());
    for (const auto& e : j.at("entries")) {
      ManifestEntry me;
      me.id = e.at("id").get<std::string>();
      me.source = resolve(e.at("source").get<std::string>());
      me.landmarks = resolve(e.at("landmarks").get<std::string>());
      me.split = e.value("split", std::string("test"));
      me.method = e.value("method", std::string());
      me.real_id = e.value("real_id", std::string());
      me.labels = e.value("labels", std::map<std::string, std::string>{});
      m.entries.push_back(std::move(me));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidInput, path.string() + ": malformed manifest: " + e.what());
  }
  m.validate();
  return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    json j = {{"id", e.id}, {"source", e.source.string()}, {"landmarks", e.landmarks.string()}, {"split", e.split}};
    if (!e.method.empty()) j["method"] = e.method;
    if (!e.real_id.empty()) j["real_id"] = e.real_id;
    if (!e.labels.empty()) j["labels"] = e.labels;
    entries.push_back(std::move(j));
  }
  detail::write_file(path, json{{"dataset_id", manifest.dataset_id}, {"entries", entries}}.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Config

std::string to_string(Target t) {
  switch (t) {
    case Target::kLipreading: return "lipreading";
    case Target::kEmotion: return "emotion";
    case Target::kBlink: return "blink";
  }
  return "?";
}

Target target_from_string(const std::string& s) {
  for (Target t : {Target::kLipreading, Target::kEmotion, Target::kBlink})
    if (to_string(t) == s) return t;
  fail(ErrorCode::kConfiguration, "unknown training target '" + s + "'");
}

BenchConfig BenchConfig::defaults() {
  BenchConfig c;
  c.crop.output_size = 128;
  c.identity_provider = {"stub-identity", embed::Modality::kFaceIdentity, 4, "stub"};
  c.inception_provider = {"stub-inception", embed::Modality::kImageInception, 4, "stub"};
  for (Target t : {Target::kLipreading, Target::kEmotion, Target::kBlink})
    c.checkpoints[t] = "checkpoints/" + to_string(t) + ".bin";
  return c;
}

void BenchConfig::validate() const {
  require(smoothing.window_size >= 1, ErrorCode::kConfiguration, "smoothing window must be >= 1");
  require(crop.r1 > 0 && crop.r2 > 0 && crop.side_factor > 0 && crop.output_size >= 0, ErrorCode::kConfiguration,
          "crop ratios must be positive");
  pose_bins.validate();
  motion_bins.validate();
  blink.validate();
  train.network.validate();
  require(train.epochs >= 1, ErrorCode::kConfiguration, "train.epochs must be >= 1");
  require(train.optimizer.batch_size >= 1, ErrorCode::kConfiguration, "train.batch_size must be >= 1");
  require(lexicon_size >= 2, ErrorCode::kConfiguration, "lexicon_size must be >= 2");
  require(bsd_slices >= 1, ErrorCode::kConfiguration, "bsd_slices must be >= 1");
  require(fid_half_window >= 1, ErrorCode::kConfiguration, "fid_half_window must be >= 1");
  require(workers >= 0, ErrorCode::kConfiguration, "workers must be >= 0");
}

namespace {

json provider_json(const embed::ProviderConfig& p) {
  return {{"name", p.name}, {"modality", embed::to_string(p.modality)}, {"dim", p.dim}, {"model_source", p.model_source}};
}

void provider_from(const json& j, embed::ProviderConfig& p) {
  p.name = j.value("name", p.name);
  if (j.contains("modality")) p.modality = embed::modality_from_string(j.at("modality").get<std::string>());
  p.dim = j.value("dim", p.dim);
  p.model_source = j.value("model_source", p.model_source);
}

json bins_json(const report::BinSpec& s) { return {{"axis", report::to_string(s.axis)}, {"edges", s.edges}}; }

void bins_from(const json& j, report::BinSpec& s) {
  if (j.contains("axis")) s.axis = report::bin_axis_from_string(j.at("axis").get<std::string>());
  if (j.contains("edges")) s.edges = j.at("edges").get<std::vector<double>>();
}

json result_json(const BenchConfig& c) {
  const auto& m = c.metrics;
  json checkpoints = json::object();
  for (const auto& [t, p] : c.checkpoints) checkpoints[to_string(t)] = p;
  return {
      {"smoothing",
       {{"window_size", c.smoothing.window_size},
        {"boundary", c.smoothing.boundary == geom::BoundaryPolicy::kReflect ? "reflect" : "clamp"}}},
      {"crop",
       {{"r1", c.crop.r1}, {"r2", c.crop.r2}, {"side_factor", c.crop.side_factor}, {"output_size", c.crop.output_size}}},
      {"bins", {{"pose", bins_json(c.pose_bins)}, {"motion", bins_json(c.motion_bins)}}},
      {"providers", {{"identity", provider_json(c.identity_provider)}, {"inception", provider_json(c.inception_provider)}}},
      {"checkpoints", checkpoints},
      {"blink",
       {{"slice_length", c.blink.slice_length},
        {"policy", blink::to_string(c.blink.policy)},
        {"threshold", c.blink.threshold},
        {"stride", c.blink.stride},
        {"crop_margin", c.blink.crop_margin},
        {"crop_width", c.blink.crop_width},
        {"crop_height", c.blink.crop_height}}},
      {"metrics",
       {{"ssim", m.ssim}, {"psnr", m.psnr}, {"cpbd", m.cpbd}, {"fid", m.fid}, {"arcsim", m.arcsim},
        {"lrsd", m.lrsd}, {"esd", m.esd}, {"bsd", m.bsd}}},
      {"train",
       {{"network", c.train.network},
        {"epochs", c.train.epochs},
        {"learning_rate", c.train.optimizer.learning_rate},
        {"beta1", c.train.optimizer.beta1},
        {"beta2", c.train.optimizer.beta2},
        {"epsilon", c.train.optimizer.epsilon},
        {"weight_decay", c.train.optimizer.weight_decay},
        {"batch_size", c.train.optimizer.batch_size},
        {"head", stnet::to_string(c.train.head)},
        {"arc_scale", c.train.arc_scale},
        {"arc_margin", c.train.arc_margin},
        {"warm_start", c.train.warm_start},
        {"balance_blink", c.train.balance_blink},
        {"train_split", c.train.train_split},
        {"validation_split", c.train.validation_split}}},
      {"lexicon_size", c.lexicon_size},
      {"bsd_slices", c.bsd_slices},
      {"fid_half_window", c.fid_half_window},
      {"eval_split", c.eval_split},
      {"seed", c.seed}};
}

}  // namespace

std::string config_to_json(const BenchConfig& cfg) {
  json j = result_json(cfg);
  j["workers"] = cfg.workers;
  j["output_dir"] = cfg.output_dir.string();
  j["model_cache"] = cfg.model_cache;
  return j.dump(2) + "\n";
}

BenchConfig config_from_json(const std::string& text) {
  BenchConfig c = BenchConfig::defaults();
  try {
    const json j = json::parse(text);
    if (const auto it = j.find("smoothing"); it != j.end()) {
      c.smoothing.window_size = it->value("window_size", c.smoothing.window_size);
      const auto b = it->value("boundary", std::string("reflect"));
      require(b == "reflect" || b == "clamp", ErrorCode::kConfiguration, "unknown boundary policy '" + b + "'");
      c.smoothing.boundary = b == "reflect" ? geom::BoundaryPolicy::kReflect : geom::BoundaryPolicy::kClamp;
    }
    if (const auto it = j.find("crop"); it != j.end()) {
      c.crop.r1 = it->value("r1", c.crop.r1);
      c.crop.r2 = it->value("r2", c.crop.r2);
      c.crop.side_factor = it->value("side_factor", c.crop.side_factor);
      c.crop.output_size = it->value("output_size", c.crop.output_size);
    }
    if (const auto it = j.find("bins"); it != j.end()) {
      if (it->contains("pose")) bins_from(it->at("pose"), c.pose_bins);
      if (it->contains("motion")) bins_from(it->at("motion"), c.motion_bins);
    }
    if (const auto it = j.find("providers"); it != j.end()) {
      if (it->contains("identity")) provider_from(it->at("identity"), c.identity_provider);
      if (it->contains("inception")) provider_from(it->at("inception"), c.inception_provider);
    }
    if (const auto it = j.find("checkpoints"); it != j.end())
      for (const auto& [k, v] : it->items()) c.checkpoints[target_from_string(k)] = v.get<std::string>();
    if (const auto it = j.find("blink"); it != j.end()) {
      auto& b = c.blink;
      b.slice_length = it->value("slice_length", b.slice_length);
      if (it->contains("policy")) b.policy = blink::threshold_policy_from_string(it->at("policy").get<std::string>());
      b.threshold = it->value("threshold", b.threshold);
      b.stride = it->value("stride", b.stride);
      b.crop_margin = it->value("crop_margin", b.crop_margin);
      b.crop_width = it->value("crop_width", b.crop_width);
      b.crop_height = it->value("crop_height", b.crop_height);
    }
    if (const auto it = j.find("metrics"); it != j.end()) {
      auto& m = c.metrics;
      for (auto [name, flag] : {std::pair{"ssim", &m.ssim}, {"psnr", &m.psnr}, {"cpbd", &m.cpbd}, {"fid", &m.fid},
                                {"arcsim", &m.arcsim}, {"lrsd", &m.lrsd}, {"esd", &m.esd}, {"bsd", &m.bsd}})
        *flag = it->value(name, *flag);
    }
    if (const auto it = j.find("train"); it != j.end()) {
      auto& t = c.train;
      if (it->contains("network")) t.network = it->at("network").get<stnet::STNetConfig>();
      t.epochs = it->value("epochs", t.epochs);
      t.optimizer.learning_rate = it->value("learning_rate", t.optimizer.learning_rate);
      t.optimizer.beta1 = it->value("beta1", t.optimizer.beta1);
      t.optimizer.beta2 = it->value("beta2", t.optimizer.beta2);
      t.optimizer.epsilon = it->value("epsilon", t.optimizer.epsilon);
      t.optimizer.weight_decay = it->value("weight_decay", t.optimizer.weight_decay);
      t.optimizer.batch_size = it->value("batch_size", t.optimizer.batch_size);
      if (it->contains("head")) t.head = stnet::head_from_string(it->at("head").get<std::string>());
      t.arc_scale = it->value("arc_scale", t.arc_scale);
      t.arc_margin = it->value("arc_margin", t.arc_margin);
      t.warm_start = it->value("warm_start", t.warm_start);
      t.balance_blink = it->value("balance_blink", t.balance_blink);
      t.train_split = it->value("train_split", t.train_split);
      t.validation_split = it->value("validation_split", t.validation_split);
    }
    c.lexicon_size = j.value("lexicon_size", c.lexicon_size);
    c.bsd_slices = j.value("bsd_slices", c.bsd_slices);
    c.fid_half_window = j.value("fid_half_window", c.fid_half_window);
    c.eval_split = j.value("eval_split", c.eval_split);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.output_dir = j.value("output_dir", c.output_dir.string());
    c.model_cache = j.value("model_cache", c.model_cache);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfiguration, std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

BenchConfig load_config(const fs::path& path) { return config_from_json(detail::read_file(path)); }

std::string config_hash(const BenchConfig& cfg) { return fnv1a_hex(result_json(cfg).dump()); }

fs::path model_cache_dir(const BenchConfig& cfg) {
  if (const char* env = std::getenv(kModelCacheEnv); env && *env) return env;
  return cfg.model_cache;
}

fs::path resolve_checkpoint(const BenchConfig& cfg, Target target) {
  const auto it = cfg.checkpoints.find(target);
  const fs::path p = it == cfg.checkpoints.end() ? fs::path("checkpoints") / (to_string(target) + ".bin")
                                                 : fs::path(it->second);
  if (p.is_absolute()) return p;
  if (const fs::path cache = model_cache_dir(cfg); !cache.empty() && fs::exists(cache / p)) return cache / p;
  return cfg.output_dir / p;
}

OutputLayout::OutputLayout(const fs::path& r)
    : root(r), crops(r / "crops"), poses(r / "poses"), features(r / "features"), checkpoints(r / "checkpoints"),
      reports(r / "reports") {}

void OutputLayout::create() const {
  for (const auto* d : {&crops, &poses, &features, &checkpoints, &reports}) fs::create_directories(*d);
}

// ---------------------------------------------------------------------------
// Work queue and frame IO

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t, int)>& fn) {
  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&](int w) {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i, w);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

std::vector<cv::Mat> read_frames(const fs::path& source) {
  std::vector<cv::Mat> frames;
  if (fs::is_directory(source)) {
    static const std::set<std::string> kImage{".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".ppm", ".tif", ".tiff"};
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(source)) {
      std::string ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
      if (e.is_regular_file() && kImage.count(ext)) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      cv::Mat img = cv::imread(f.string(), cv::IMREAD_COLOR);
      require(!img.empty(), ErrorCode::kIo, "cannot decode frame " + f.string());
      frames.push_back(std::move(img));
    }
  } else {
    cv::VideoCapture cap(source.string());
    require(cap.isOpened(), ErrorCode::kIo, "cannot open video " + source.string());
    cv::Mat img;
    while (cap.read(img)) frames.push_back(img.clone());
  }
  require(!frames.empty(), ErrorCode::kIo, "no frames in " + source.string());
  return frames;
}

std::vector<cv::Mat> resample_frames(const std::vector<cv::Mat>& frames, int n) {
  require(!frames.empty() && n >= 1, ErrorCode::kInvalidArgument, "resample_frames: empty input");
  std::vector<cv::Mat> out;
  out.reserve(static_cast<std::size_t>(n));
  const double last = static_cast<double>(frames.size() - 1);
  for (int i = 0; i < n; ++i) {
    const double pos = n == 1 ? 0.0 : last * i / (n - 1);
    out.push_back(frames[static_cast<std::size_t>(std::lround(pos))]);
  }
  return out;
}

}  // namespace thbench::bench
