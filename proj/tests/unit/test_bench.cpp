#include <cstdlib>
#include <fstream>

#include <doctest.h>

#include "synth.hpp"
#include "thbench/bench.hpp"
#include "thbench/error.hpp"
#include "thbench/features.hpp"
#include "thbench/synthetic.hpp"

using namespace thbench;
using namespace thbench::bench;
namespace fs = std::filesystem;

namespace {

synthetic::DatasetSpec small_spec() {
  synthetic::DatasetSpec s;
  s.clips_per_split = 3;
  s.frames = 16;
  s.width = 96;
  s.height = 96;
  return s;
}

BenchConfig small_config(const fs::path& out) {
  BenchConfig c = BenchConfig::defaults();
  c.output_dir = out;
  c.crop.output_size = 64;
  c.smoothing.window_size = 5;
  c.metrics.lrsd = c.metrics.esd = c.metrics.bsd = false;
  c.train.network = stnet::STNetConfig::toy(3);
  c.train.epochs = 2;
  c.blink.crop_width = c.blink.crop_height = 16;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

const report::VideoRecord& record(const report::MetricReport& r, const std::string& id) {
  for (const auto& rec : r.records)
    if (rec.video_id == id) return rec;
  FAIL("no record " << id);
  return r.records.front();
}

struct EnvGuard {
  explicit EnvGuard(const std::string& value) { setenv(kModelCacheEnv, value.c_str(), 1); }
  ~EnvGuard() { unsetenv(kModelCacheEnv); }
};

}  // namespace

TEST_CASE("defaults carry the published constants") {
  const auto c = BenchConfig::defaults();
  CHECK(c.smoothing.window_size == 11);
  CHECK(c.crop.r1 == doctest::Approx(10.0 / 9.0).epsilon(1e-15));
  CHECK(c.crop.r2 == doctest::Approx(8.0 / 9.0).epsilon(1e-15));
  CHECK(c.crop.side_factor == doctest::Approx(41.0 / 18.0).epsilon(1e-15));
  CHECK(c.lexicon_size == 300);
  CHECK(c.pose_bins.bins() == 18);
  CHECK(c.train.arc_scale == 64.0);
  CHECK(c.train.arc_margin == 0.5);
  CHECK(c.metrics.ssim);
  CHECK(c.metrics.bsd);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config json round trip and hash scope") {
  auto c = BenchConfig::defaults();
  c.seed = 7;
  c.metrics.cpbd = false;
  c.crop.output_size = 64;
  c.workers = 3;
  const auto back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(config_hash(back) == config_hash(c));

  auto d = c;
  d.workers = 1;
  d.output_dir = "elsewhere";
  CHECK(config_hash(d) == config_hash(c));
  d.seed = 8;
  CHECK(config_hash(d) != config_hash(c));

  CHECK(config_from_json("{}").lexicon_size == 300);
  CHECK(code_of([] { config_from_json("{\"lexicon_size\": 1}"); }) == ErrorCode::kConfiguration);
  CHECK(code_of([] { config_from_json("{not json"); }) == ErrorCode::kConfiguration);
  CHECK(code_of([] { target_from_string("gait"); }) == ErrorCode::kConfiguration);
}

TEST_CASE("manifest validation") {
  testing::TempDir tmp;
  auto m = synthetic::write_dataset(tmp.path(), small_spec());
  CHECK_NOTHROW(m.validate());
  CHECK(m.entries.size() == 9);
  CHECK(load_manifest(tmp.path() / "manifest.json").entries.size() == 9);

  SUBCASE("duplicate id") {
    m.entries.push_back(m.entries.front());
    CHECK(code_of([&] { m.validate(); }) == ErrorCode::kInvalidInput);
  }
  SUBCASE("missing source") {
    m.entries[0].source = tmp.path() / "nowhere";
    CHECK(code_of([&] { m.validate(); }) == ErrorCode::kInvalidInput);
  }
  SUBCASE("unknown pair") {
    m.entries[1].real_id = "ghost";
    CHECK(code_of([&] { m.validate(); }) == ErrorCode::kPairing);
  }
  SUBCASE("pair with a generated clip") {
    m.entries[2].real_id = m.entries[1].id;
    CHECK(code_of([&] { m.validate(); }) == ErrorCode::kPairing);
  }
  SUBCASE("not a bijection") {
    m.entries[4].real_id = m.entries[0].id;  // second "copy" clip on the first real clip
    CHECK(code_of([&] { m.validate(); }) == ErrorCode::kPairing);
  }
  SUBCASE("cross split") {
    m.entries[1].split = "train";
    CHECK(code_of([&] { m.validate(); }) == ErrorCode::kPairing);
  }
}

TEST_CASE("resample_frames picks nearest indices") {
  std::vector<cv::Mat> frames;
  for (int i = 0; i < 10; ++i) frames.emplace_back(1, 1, CV_8UC1, cv::Scalar(i));
  const auto r = resample_frames(frames, 4);
  REQUIRE(r.size() == 4);
  CHECK(r[0].at<uchar>(0) == 0);
  CHECK(r[1].at<uchar>(0) == 3);
  CHECK(r[2].at<uchar>(0) == 6);
  CHECK(r[3].at<uchar>(0) == 9);
  CHECK(resample_frames(frames, 1)[0].at<uchar>(0) == 0);
  CHECK(resample_frames(frames, 19).size() == 19);
}

TEST_CASE("parallel_for covers every index and rethrows") {
  for (int workers : {1, 2, 4}) {
    std::vector<int> hits(100, 0);
    parallel_for(hits.size(), workers, [&](std::size_t i, int) { ++hits[i]; });
    CHECK(std::count(hits.begin(), hits.end(), 1) == 100);
  }
  CHECK_THROWS_AS(parallel_for(10, 2, [](std::size_t i, int) {
                    if (i == 5) fail(ErrorCode::kIo, "boom");
                  }),
                  Error);
}

TEST_CASE("model cache resolution") {
  testing::TempDir tmp;
  auto c = BenchConfig::defaults();
  c.output_dir = tmp.path() / "out";
  CHECK(resolve_checkpoint(c, Target::kBlink) == c.output_dir / "checkpoints/blink.bin");

  const fs::path cache = tmp.path() / "cache";
  fs::create_directories(cache / "checkpoints");
  std::ofstream(cache / "checkpoints/blink.bin") << "x";
  {
    EnvGuard env(cache.string());
    CHECK(model_cache_dir(c) == cache);
    CHECK(resolve_checkpoint(c, Target::kBlink) == cache / "checkpoints/blink.bin");
    // Absent from the cache: fall back to the output directory.
    CHECK(resolve_checkpoint(c, Target::kEmotion) == c.output_dir / "checkpoints/emotion.bin");
  }
  CHECK(resolve_checkpoint(c, Target::kBlink) == c.output_dir / "checkpoints/blink.bin");
  c.model_cache = cache.string();
  CHECK(resolve_checkpoint(c, Target::kBlink) == cache / "checkpoints/blink.bin");
}

TEST_CASE("empty manifest") {
  testing::TempDir tmp;
  const auto cfg = small_config(tmp.path());
  const DatasetManifest m;
  const auto s = run_preprocess(m, cfg);
  CHECK(s.entries.empty());
  const auto rep = run_eval(m, cfg);
  CHECK(rep.records.empty());
  CHECK(rep.failures.empty());
  CHECK(fs::exists(tmp.path() / "reports/report.json"));
}

TEST_CASE("preprocess, eval and report on the synthetic fixture") {
  testing::TempDir tmp;
  const auto m = synthetic::write_dataset(tmp.path() / "data", small_spec());
  auto cfg = small_config(tmp.path() / "out");

  const auto first = run_preprocess(m, cfg);
  CHECK(first.processed == 9);
  CHECK(first.failed == 0);
  for (const char* d : {"crops", "poses", "features", "checkpoints", "reports"}) CHECK(fs::is_directory(cfg.output_dir / d));
  CHECK(fs::exists(cfg.output_dir / "poses/test_real_000.pose.csv"));
  const auto prepared = load_prepared(OutputLayout(cfg.output_dir), "test_real_000");
  CHECK(prepared.frames.size() == 16);
  CHECK(prepared.frames.front().rows == 64);
  REQUIRE(prepared.pose);
  CHECK(prepared.pose->size() == 16);

  const auto again = run_preprocess(m, cfg);
  CHECK(again.skipped == 9);
  CHECK(again.processed == 0);
  auto changed = cfg;
  changed.crop.output_size = 40;
  CHECK(run_preprocess(m, changed).processed == 9);
  CHECK(run_preprocess(m, cfg).processed == 9);

  const auto rep = run_eval(m, cfg);
  CHECK(rep.records.size() == 6);
  for (const auto& f : rep.failures) FAIL_CHECK(f.entry_id << ": " << f.message);
  CHECK(report::self_consistent(rep));

  const auto& copy = record(rep, "test_copy_001");
  CHECK(copy.metrics.at("ssim") == 1.0);
  CHECK(std::isinf(copy.metrics.at("psnr")));
  CHECK(copy.metrics.at("arcsim") == doctest::Approx(1.0).epsilon(1e-12));
  const auto& noisy = record(rep, "test_noisy_001");
  CHECK(noisy.metrics.at("ssim") < 1.0);
  CHECK(std::isfinite(noisy.metrics.at("psnr")));
  CHECK(noisy.metrics.at("cpbd") >= 0.0);
  for (const char* absent : {"lrsd", "l2", "esd", "bsd"}) CHECK(noisy.metrics.count(absent) == 0);
  CHECK(noisy.stats.count("yaw") == 1);
  CHECK(noisy.stats.at("motion") > 10.0);

  for (const auto& agg : rep.methods) {
    REQUIRE(agg.set_metrics.count("fid") == 1);
    if (agg.method == "copy") CHECK(std::abs(agg.set_metrics.at("fid")) < 1e-6);
    if (agg.method == "noisy") CHECK(agg.set_metrics.at("fid") >= 0.0);
  }
  REQUIRE(rep.confusion.size() == 1);
  CHECK(fs::exists(cfg.output_dir / "reports/trends/noisy/test_noisy_000.tsv"));
  CHECK(slurp(cfg.output_dir / "reports/records.csv").find("lrsd") == std::string::npos);

  const auto body = report::report_body(rep);
  auto parallel = cfg;
  parallel.workers = 2;
  CHECK(report::report_body(run_eval(m, parallel)) == body);
  CHECK(report::report_body(run_eval(m, cfg)) == body);
  CHECK(report::report_body(run_report(cfg)) == body);
}

TEST_CASE("enabled semantic metrics need checkpoints") {
  testing::TempDir tmp;
  const auto m = synthetic::write_dataset(tmp.path() / "data", small_spec());
  auto cfg = small_config(tmp.path() / "out");
  cfg.metrics.esd = true;
  CHECK(code_of([&] { run_eval(m, cfg); }) == ErrorCode::kConfiguration);
  CHECK_FALSE(fs::exists(cfg.output_dir / "reports/report.json"));
  CHECK(code_of([&] { run_features(m, cfg, Target::kEmotion); }) == ErrorCode::kConfiguration);
}

TEST_CASE("fault-injected entry fails alone") {
  testing::TempDir tmp;
  auto spec = small_spec();
  spec.clips_per_split = 5;
  const auto m = synthetic::write_dataset(tmp.path() / "data", spec);
  synthetic::corrupt_entry(*m.find("test_noisy_002"));
  const auto cfg = small_config(tmp.path() / "out");

  const auto pre = run_preprocess(m, cfg);
  CHECK(pre.failed == 1);
  CHECK(pre.processed == 14);
  const auto rep = run_eval(m, cfg);
  CHECK(rep.records.size() == 9);
  REQUIRE(rep.failures.size() == 1);
  CHECK(rep.failures[0].entry_id == "test_noisy_002");
  CHECK(rep.failures[0].code == "io");
  CHECK(slurp(cfg.output_dir / "crops/preprocess_log.jsonl").find("\"failed\"") != std::string::npos);
}

TEST_CASE("training targets") {
  testing::TempDir tmp;
  auto spec = small_spec();
  spec.splits = {"train", "test"};
  auto m = synthetic::write_dataset(tmp.path() / "data", spec);
  auto cfg = small_config(tmp.path() / "out");
  run_preprocess(m, cfg);

  SUBCASE("lipreading checkpoint feeds eval and features") {
    const auto res = run_train(m, cfg, Target::kLipreading);
    CHECK(fs::exists(res.checkpoint));
    CHECK(res.labels.size() == 3);
    CHECK(res.train_examples == 3);
    CHECK(res.log.size() == 2);
    cfg.metrics.lrsd = true;
    const auto rep = run_eval(m, cfg);
    CHECK(record(rep, "test_copy_000").metrics.at("lrsd") == 0.0);
    CHECK(record(rep, "test_noisy_000").metrics.at("l2") >= 0.0);
    CHECK(rep.provenance.fingerprints.count("lipreading") == 1);

    const auto csv = run_features(m, cfg, Target::kLipreading);
    const auto feats = read_features_csv(csv);
    CHECK(feats.size() == m.entries.size());
    CHECK(feats.front().label.value() == m.entries.front().labels.at("word"));
  }
  SUBCASE("emotion labels are required") {
    m.entries[0].labels.erase("emotion");
    CHECK(code_of([&] { run_train(m, cfg, Target::kEmotion); }) == ErrorCode::kPrecondition);
  }
  SUBCASE("no training split") {
    cfg.train.train_split = "nope";
    CHECK(code_of([&] { run_train(m, cfg, Target::kLipreading); }) == ErrorCode::kPrecondition);
  }
  SUBCASE("blink target writes and consumes its slice manifest") {
    cfg.blink.slice_length = 6;
    cfg.train.network = stnet::STNetConfig::toy(2);
    const auto res = run_train(m, cfg, Target::kBlink);
    const auto slices = blink::read_slice_manifest(cfg.output_dir / "features/blink_slices.jsonl");
    CHECK(res.train_examples == slices.size());
    CHECK(res.labels == std::vector<std::string>{"non-blink", "blink"});
    const auto blinks = std::count_if(slices.begin(), slices.end(), [](const auto& s) { return s.label == 1; });
    CHECK(blinks > 0);
    CHECK(2 * static_cast<std::size_t>(blinks) == slices.size());

    cfg.metrics.bsd = true;
    const auto rep = run_eval(m, cfg);
    const double bsd = record(rep, "test_copy_000").metrics.at("bsd");
    CHECK(bsd == doctest::Approx(1.0).epsilon(1e-9));
  }
}
