#include <algorithm>
#include <set>

#include "thbench/bench.hpp"
#include "thbench/error.hpp"

namespace thbench::bench {

namespace fs = std::filesystem;

namespace {

const char* label_key(Target t) { return t == Target::kLipreading ? "word" : "emotion"; }

// Training writes next to the output, never into the shared model cache.
fs::path checkpoint_output(const BenchConfig& cfg, Target target) {
  const auto it = cfg.checkpoints.find(target);
  const fs::path p = it == cfg.checkpoints.end() ? fs::path("checkpoints") / (to_string(target) + ".bin")
                                                 : fs::path(it->second);
  return p.is_absolute() ? p : cfg.output_dir / p;
}

std::vector<const ManifestEntry*> real_entries(const DatasetManifest& m, const std::string& split) {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : m.entries)
    if (e.is_real() && e.split == split) out.push_back(&e);
  return out;
}

stnet::Example clip_example(const std::string& id, int label, const std::vector<cv::Mat>& frames,
                            const stnet::STNetConfig& net) {
  return {id, label, stnet::clip_from_frames(resample_frames(frames, net.frames), net)};
}

std::vector<double> open_rates(const PreparedClip& clip) {
  std::vector<double> rates;
  rates.reserve(clip.landmarks.size());
  for (const auto& f : clip.landmarks) rates.push_back(geom::eye_open_rate(f));
  return rates;
}

struct BlinkCorpus {
  std::map<std::string, PreparedClip> clips;
  std::map<std::string, std::vector<double>> rates;
  std::vector<double> all_rates;
};

BlinkCorpus blink_corpus(const std::vector<const ManifestEntry*>& entries, const OutputLayout& out) {
  BlinkCorpus c;
  for (const auto* e : entries) {
    auto clip = load_prepared(out, e->id);
    auto r = open_rates(clip);
    c.all_rates.insert(c.all_rates.end(), r.begin(), r.end());
    c.rates.emplace(e->id, std::move(r));
    c.clips.emplace(e->id, std::move(clip));
  }
  return c;
}

std::vector<blink::SliceSpec> corpus_slices(const BlinkCorpus& c, const std::vector<const ManifestEntry*>& entries,
                                            double threshold, const blink::BlinkSliceConfig& cfg) {
  std::vector<blink::SliceSpec> slices;
  for (const auto* e : entries) {
    const auto states = blink::label_frames_with_threshold(c.rates.at(e->id), threshold);
    auto s = blink::sample_slices(e->id, states, cfg);
    slices.insert(slices.end(), s.slices.begin(), s.slices.end());
  }
  return slices;
}

std::vector<stnet::Example> slice_examples(const std::vector<blink::SliceSpec>& slices, const BlinkCorpus& c,
                                           const blink::BlinkSliceConfig& bcfg, const stnet::STNetConfig& net) {
  std::vector<stnet::Example> out;
  out.reserve(slices.size());
  for (const auto& s : slices) {
    const auto& clip = c.clips.at(s.video_id);
    auto crop = blink::crop_slice(s, clip.frames, clip.landmarks, bcfg);
    out.push_back({s.video_id + "@" + std::to_string(s.start), s.label, stnet::clip_from_frames(crop.crops, net)});
  }
  return out;
}

const std::vector<std::string> kBlinkLabels{"non-blink", "blink"};

}  // namespace

TrainResult run_train(const DatasetManifest& manifest, const BenchConfig& cfg, Target target) {
  cfg.validate();
  const OutputLayout out(cfg.output_dir);
  out.create();
  const auto train_entries = real_entries(manifest, cfg.train.train_split);
  require(!train_entries.empty(), ErrorCode::kPrecondition,
          "no real clips in training split '" + cfg.train.train_split + "'");
  const auto val_entries = real_entries(manifest, cfg.train.validation_split);

  stnet::STNetConfig net = cfg.train.network;
  std::vector<stnet::Example> train, val;
  std::vector<std::string> labels;

  if (target == Target::kBlink) {
    net.frames = cfg.blink.slice_length;
    net.num_classes = 2;
    labels = kBlinkLabels;
    const auto tc = blink_corpus(train_entries, out);
    const double thr = blink::open_threshold(tc.all_rates, cfg.blink);
    auto slices = corpus_slices(tc, train_entries, thr, cfg.blink);
    if (cfg.train.balance_blink) slices = blink::balance_slices(slices, cfg.seed);
    const fs::path slice_manifest = out.features / "blink_slices.jsonl";
    blink::write_slice_manifest(slice_manifest, slices);
    train = slice_examples(blink::read_slice_manifest(slice_manifest), tc, cfg.blink, net);
    if (!val_entries.empty()) {
      // Validation clips are labelled with the training corpus threshold.
      const auto vc = blink_corpus(val_entries, out);
      val = slice_examples(corpus_slices(vc, val_entries, thr, cfg.blink), vc, cfg.blink, net);
    }
  } else {
    const std::string key = label_key(target);
    std::vector<std::string> words;
    for (const auto* e : train_entries) {
      const auto it = e->labels.find(key);
      require(it != e->labels.end(), ErrorCode::kPrecondition,
              e->id + ": missing '" + key + "' label required for " + to_string(target) + " training");
      words.push_back(it->second);
    }
    const std::size_t size = target == Target::kLipreading
                                 ? static_cast<std::size_t>(cfg.lexicon_size)
                                 : std::set<std::string>(words.begin(), words.end()).size();
    labels = stnet::build_lexicon(words, size).words;
    net.num_classes = static_cast<int>(labels.size());
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < labels.size(); ++i) index[labels[i]] = static_cast<int>(i);
    auto collect = [&](const std::vector<const ManifestEntry*>& entries, std::vector<stnet::Example>& dst) {
      for (const auto* e : entries) {
        const auto it = e->labels.find(key);
        if (it == e->labels.end()) continue;
        const auto cls = index.find(it->second);
        if (cls == index.end()) continue;  // outside the lexicon
        dst.push_back(clip_example(e->id, cls->second, load_prepared(out, e->id).frames, net));
      }
    };
    collect(train_entries, train);
    collect(val_entries, val);
  }

  stnet::TrainRun run;
  run.dataset_id = manifest.dataset_id;
  run.labels = labels;
  run.epochs = cfg.train.epochs;
  run.optimizer = cfg.train.optimizer;
  run.seed = cfg.seed;
  run.checkpoint_path = checkpoint_output(cfg, target);
  run.warm_start = cfg.train.warm_start;
  run.arc_scale = cfg.train.arc_scale;
  run.arc_margin = cfg.train.arc_margin;
  stnet::train_classifier(net, train, val, cfg.train.head, run);

  TrainResult res;
  res.checkpoint = run.checkpoint_path;
  res.labels = labels;
  res.log = run.log;
  res.train_accuracy = run.final_train_accuracy;
  res.validation_accuracy = run.final_validation_accuracy;
  res.train_examples = train.size();
  return res;
}

fs::path run_features(const DatasetManifest& manifest, const BenchConfig& cfg, Target target) {
  cfg.validate();
  const OutputLayout out(cfg.output_dir);
  out.create();
  const fs::path ckpt_path = resolve_checkpoint(cfg, target);
  require(fs::exists(ckpt_path), ErrorCode::kConfiguration,
          "checkpoint " + ckpt_path.string() + " for " + to_string(target) + " does not exist");
  const auto ckpt = stnet::load_checkpoint(ckpt_path);
  const auto& net = ckpt.net.config();

  std::vector<const ManifestEntry*> entries;
  for (const auto& e : manifest.entries) entries.push_back(&e);
  std::vector<stnet::Example> examples;
  std::vector<std::optional<std::string>> names;

  if (target == Target::kBlink) {
    const auto corpus = blink_corpus(entries, out);
    blink::BlinkSliceConfig bcfg = cfg.blink;
    bcfg.slice_length = net.frames;
    const double thr = blink::open_threshold(corpus.all_rates, bcfg);
    const auto slices = corpus_slices(corpus, entries, thr, bcfg);
    examples = slice_examples(slices, corpus, bcfg, net);
    for (const auto& s : slices) names.emplace_back(kBlinkLabels[static_cast<std::size_t>(s.label)]);
  } else {
    const std::string key = label_key(target);
    for (const auto* e : entries) {
      examples.push_back(clip_example(e->id, -1, load_prepared(out, e->id).frames, net));
      const auto it = e->labels.find(key);
      names.push_back(it == e->labels.end() ? std::nullopt : std::optional<std::string>(it->second));
    }
  }

  auto records = stnet::extract_features(ckpt.net, examples);
  for (std::size_t i = 0; i < records.size(); ++i) records[i].label = names[i];
  const fs::path path = out.features / (to_string(target) + ".csv");
  write_features_csv(path, records);
  return path;
}

}  // namespace thbench::bench
