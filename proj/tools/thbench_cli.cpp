#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "thbench/bench.hpp"
#include "thbench/error.hpp"
#include "thbench/synthetic.hpp"

namespace fs = std::filesystem;
using namespace thbench;

namespace {

// Flags shared by every subcommand; unset ones keep the config file's values.
struct Overrides {
  std::string config;
  std::string manifest;
  std::optional<std::string> output;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> model_cache;
  std::optional<int> window;
  std::optional<int> crop_size;
  std::optional<std::string> eval_split;
  std::optional<int> lexicon_size;
  std::optional<int> bsd_slices;
  std::vector<std::string> disable, enable;
  // train
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<int> batch_size;
  std::optional<std::string> head;
  std::optional<std::string> warm_start;
  std::string target = "lipreading";
  bool strict = false;
};

bool& toggle(bench::MetricToggles& m, const std::string& name) {
  if (name == "ssim") return m.ssim;
  if (name == "psnr") return m.psnr;
  if (name == "cpbd") return m.cpbd;
  if (name == "fid") return m.fid;
  if (name == "arcsim") return m.arcsim;
  if (name == "lrsd") return m.lrsd;
  if (name == "esd") return m.esd;
  return m.bsd;
}

const std::vector<std::string> kMetricNames{"ssim", "psnr", "cpbd", "fid", "arcsim", "lrsd", "esd", "bsd"};

bench::BenchConfig effective_config(const Overrides& o) {
  auto cfg = o.config.empty() ? bench::BenchConfig::defaults() : bench::load_config(o.config);
  if (o.output) cfg.output_dir = *o.output;
  if (o.workers) cfg.workers = *o.workers;
  if (o.seed) cfg.seed = *o.seed;
  if (o.model_cache) {
    cfg.model_cache = *o.model_cache;
    setenv(bench::kModelCacheEnv, o.model_cache->c_str(), 1);  // the flag beats the environment
  }
  if (o.window) cfg.smoothing.window_size = *o.window;
  if (o.crop_size) cfg.crop.output_size = *o.crop_size;
  if (o.eval_split) cfg.eval_split = *o.eval_split;
  if (o.lexicon_size) cfg.lexicon_size = *o.lexicon_size;
  if (o.bsd_slices) cfg.bsd_slices = *o.bsd_slices;
  for (const auto& m : o.disable) toggle(cfg.metrics, m) = false;
  for (const auto& m : o.enable) toggle(cfg.metrics, m) = true;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.lr) cfg.train.optimizer.learning_rate = *o.lr;
  if (o.batch_size) cfg.train.optimizer.batch_size = *o.batch_size;
  if (o.head) cfg.train.head = stnet::head_from_string(*o.head);
  if (o.warm_start) cfg.train.warm_start = *o.warm_start;
  cfg.validate();
  return cfg;
}

bench::DatasetManifest manifest_of(const Overrides& o) {
  require(!o.manifest.empty(), ErrorCode::kConfiguration, "--manifest is required");
  return bench::load_manifest(o.manifest);
}

std::string num(double v) {
  if (std::isnan(v)) return "-";
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

void print_report(const report::MetricReport& rep) {
  for (const auto& m : rep.methods) {
    std::cout << m.method;
    for (const auto& [k, v] : m.metrics) std::cout << "  " << k << "=" << num(v.mean);
    for (const auto& [k, v] : m.set_metrics) std::cout << "  " << k << "=" << num(v);
    std::cout << "\n";
  }
  std::cout << rep.records.size() << " pairs evaluated, " << rep.failures.size() << " failed\n";
  for (const auto& f : rep.failures) std::cout << "  " << f.entry_id << " [" << f.stage << "] " << f.code << ": " << f.message << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"Talking-head video evaluation benchmark"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("-c,--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("-m,--manifest", o.manifest, "dataset manifest (JSON)");
  app.add_option("-o,--output", o.output, "output directory");
  app.add_option("-j,--workers", o.workers, "worker threads (0 = all cores)");
  app.add_option("--seed", o.seed, "random seed");
  app.add_option("--model-cache", o.model_cache, std::string("model artifact cache (overrides ") + bench::kModelCacheEnv + ")");
  app.add_option("--window", o.window, "landmark smoothing window");
  app.add_option("--crop-size", o.crop_size, "crop output size in pixels (0 keeps native)");
  app.add_option("--eval-split", o.eval_split, "split evaluated by eval (empty = all)");
  app.add_option("--lexicon-size", o.lexicon_size, "lipreading vocabulary size");
  app.add_option("--bsd-slices", o.bsd_slices, "eye slices per pair for bsd");

  auto* pre = app.add_subcommand("preprocess", "crop clips and estimate head poses");
  pre->add_flag("--strict", o.strict, "exit non-zero when any entry fails");

  auto* train = app.add_subcommand("train", "train a lipreading, emotion or blink network");
  train->add_option("-t,--target", o.target, "network to train")->check(CLI::IsMember({"lipreading", "emotion", "blink"}));
  train->add_option("--epochs", o.epochs, "training epochs");
  train->add_option("--lr", o.lr, "learning rate");
  train->add_option("--batch-size", o.batch_size, "batch size");
  train->add_option("--head", o.head, "classifier head")->check(CLI::IsMember({"softmax", "arcloss"}));
  train->add_option("--warm-start", o.warm_start, "initialise from this checkpoint");

  auto* eval = app.add_subcommand("eval", "score generated clips against their real pairs");
  eval->add_option("--disable", o.disable, "metrics to skip")->check(CLI::IsMember(kMetricNames));
  eval->add_option("--enable", o.enable, "metrics to compute")->check(CLI::IsMember(kMetricNames));
  eval->add_flag("--strict", o.strict, "exit non-zero when any pair fails");

  app.add_subcommand("report", "re-aggregate reports/report.json with the configured bins");

  auto* features = app.add_subcommand("features", "export network features to features/<target>.csv");
  features->add_option("-t,--target", o.target, "network")->check(CLI::IsMember({"lipreading", "emotion", "blink"}));

  synthetic::DatasetSpec synth;
  std::string synth_dir;
  auto* sy = app.add_subcommand("synth", "write a rendered synthetic dataset");
  sy->add_option("dir", synth_dir, "destination directory")->required();
  sy->add_option("--clips", synth.clips_per_split, "real clips per split");
  sy->add_option("--frames", synth.frames, "frames per clip");
  sy->add_option("--size", synth.width, "frame width and height");
  sy->add_option("--splits", synth.splits, "splits")->delimiter(',');
  sy->add_option("--methods", synth.methods, "generated methods (copy, noisy, blur)")->delimiter(',');

  app.add_subcommand("config", "print the effective configuration");

  CLI11_PARSE(app, argc, argv);

  if (sy->parsed()) {
    synth.height = synth.width;
    if (o.seed) synth.seed = *o.seed;
    const auto m = synthetic::write_dataset(synth_dir, synth);
    std::cout << "wrote " << m.entries.size() << " entries to " << (fs::path(synth_dir) / "manifest.json").string() << "\n";
    return 0;
  }
  const auto cfg = effective_config(o);
  if (app.got_subcommand("config")) {
    std::cout << bench::config_to_json(cfg) << "\n";
    return 0;
  }
  if (pre->parsed()) {
    const auto s = bench::run_preprocess(manifest_of(o), cfg);
    for (const auto& e : s.entries)
      if (e.state == bench::EntryState::kFailed) std::cerr << e.id << ": " << e.message << "\n";
    std::cout << s.processed << " processed, " << s.skipped << " unchanged, " << s.failed << " failed\n";
    return o.strict && s.failed > 0 ? 3 : 0;
  }
  if (train->parsed()) {
    const auto r = bench::run_train(manifest_of(o), cfg, bench::target_from_string(o.target));
    for (const auto& e : r.log)
      std::cout << "epoch " << e.epoch << "  loss=" << num(e.loss) << "  train=" << num(e.train_accuracy)
                << "  val=" << num(e.validation_accuracy) << "\n";
    std::cout << r.train_examples << " examples, " << r.labels.size() << " classes -> " << r.checkpoint.string() << "\n";
    return 0;
  }
  if (eval->parsed()) {
    const auto rep = bench::run_eval(manifest_of(o), cfg);
    print_report(rep);
    return o.strict && !rep.failures.empty() ? 3 : 0;
  }
  if (app.got_subcommand("report")) {
    print_report(bench::run_report(cfg));
    return 0;
  }
  if (features->parsed()) {
    std::cout << bench::run_features(manifest_of(o), cfg, bench::target_from_string(o.target)).string() << "\n";
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "thbench: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "thbench: " << e.what() << "\n";
    return 1;
  }
}
