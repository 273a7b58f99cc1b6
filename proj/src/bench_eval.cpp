#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <thread>

#include <opencv2/imgproc.hpp>

#include "thbench/bench.hpp"
#include "thbench/error.hpp"
#include "thbench/imgq.hpp"
#include "thbench/semmet.hpp"

namespace thbench::bench {

namespace fs = std::filesystem;

namespace {

struct Networks {
  std::optional<stnet::Checkpoint> lipreading, emotion, blink;
};

struct Providers {
  std::vector<std::unique_ptr<embed::EmbeddingProvider>> identity, inception;

  const embed::EmbeddingProvider& id_for(int worker) const {
    return *identity[identity.size() == 1 ? 0 : static_cast<std::size_t>(worker)];
  }
  const embed::EmbeddingProvider& inc_for(int worker) const {
    return *inception[inception.size() == 1 ? 0 : static_cast<std::size_t>(worker)];
  }
};

struct PairOutcome {
  std::optional<report::VideoRecord> record;
  std::optional<report::FailureRecord> failure;
  Eigen::MatrixXd real_inception, fake_inception;
  std::vector<report::PosePairSample> pose_samples;
  std::optional<report::TrendTrace> trend;
};

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string path_safe(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return s;
}

std::optional<stnet::Checkpoint> load_if(bool enabled, const BenchConfig& cfg, Target target, const char* metric) {
  if (!enabled) return std::nullopt;
  const fs::path p = resolve_checkpoint(cfg, target);
  require(fs::exists(p), ErrorCode::kConfiguration,
          std::string("metric '") + metric + "' is enabled but the " + to_string(target) + " checkpoint " +
              p.string() + " does not exist");
  return stnet::load_checkpoint(p);
}

Providers make_providers(const BenchConfig& cfg, int workers) {
  Providers p;
  const fs::path cache = model_cache_dir(cfg);
  auto build = [&](const embed::ProviderConfig& pc, auto& slot) {
    slot.push_back(embed::make_provider(pc, cache));
    if (slot.front()->sharing() == embed::Sharing::kPerWorker)
      for (int w = 1; w < workers; ++w) slot.push_back(embed::make_provider(pc, cache));
  };
  if (cfg.metrics.arcsim) build(cfg.identity_provider, p.identity);
  if (cfg.metrics.fid) build(cfg.inception_provider, p.inception);
  return p;
}

FeatureVector clip_feature(const stnet::STNet& net, const std::vector<cv::Mat>& frames) {
  const auto& nc = net.config();
  const std::vector<stnet::ClipTensor> clips{stnet::clip_from_frames(resample_frames(frames, nc.frames), nc)};
  const auto out = net.forward(clips);
  std::vector<double> v(static_cast<std::size_t>(out.features.cols()));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = out.features(0, static_cast<Eigen::Index>(i));
  return FeatureVector(std::move(v), net.fingerprint());
}

Eigen::MatrixXd embed_frames(const std::vector<cv::Mat>& frames, const embed::EmbeddingProvider& p) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(frames.size()), p.dimensionality());
  for (std::size_t i = 0; i < frames.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = p.embed(frames[i]).as_eigen();
  return m;
}

// Up to `count` evenly spread slice starts over a clip of `frames` frames.
std::vector<int> slice_starts(std::size_t frames, int t, int count) {
  std::vector<int> starts;
  if (frames < static_cast<std::size_t>(t)) return starts;
  const int last = static_cast<int>(frames) - t;
  for (int i = 0; i < count; ++i) {
    const int s = count == 1 ? 0 : static_cast<int>(std::lround(static_cast<double>(last) * i / (count - 1)));
    if (starts.empty() || starts.back() != s) starts.push_back(s);
  }
  return starts;
}

PairOutcome evaluate_pair(const ManifestEntry& fake, const ManifestEntry& real, const BenchConfig& cfg,
                          const OutputLayout& out, const Networks& nets, const Providers& providers, int worker) {
  PairOutcome res;
  auto r = load_prepared(out, real.id);
  auto f = load_prepared(out, fake.id);
  const std::size_t n = std::min(r.frames.size(), f.frames.size());
  r.frames.resize(n);
  f.frames.resize(n);
  r.landmarks.resize(n);
  f.landmarks.resize(n);
  // Crops of the pair are compared pixel for pixel at the real clip's size.
  std::vector<cv::Mat> f_aligned = f.frames;
  for (auto& img : f_aligned)
    if (img.size() != r.frames.front().size()) cv::resize(img, img, r.frames.front().size(), 0, 0, cv::INTER_AREA);

  report::VideoRecord rec{fake.method, fake.id, real.id, {}, {}};
  const auto& m = cfg.metrics;
  std::vector<std::pair<std::string, std::vector<double>>> per_frame;
  if (m.ssim || m.psnr) {
    std::vector<double> s, p;
    for (std::size_t t = 0; t < n; ++t) {
      if (m.ssim) s.push_back(imgq::ssim(r.frames[t], f_aligned[t]));
      if (m.psnr) p.push_back(imgq::psnr(r.frames[t], f_aligned[t]));
    }
    if (m.ssim) {
      rec.metrics["ssim"] = compensated_mean(s);
      per_frame.emplace_back("ssim", std::move(s));
    }
    if (m.psnr) rec.metrics["psnr"] = compensated_mean(p);
  }
  if (m.cpbd) {
    std::vector<double> c;
    for (const auto& img : f.frames) c.push_back(imgq::cpbd(img).score);
    rec.metrics["cpbd"] = compensated_mean(c);
  }
  if (m.arcsim) {
    auto sim = embed::video_arcsim(r.frames, f.frames, providers.id_for(worker));
    rec.metrics["arcsim"] = sim.mean;
    if (r.pose) {
      const auto yaw = r.pose->axis(geom::Axis::kYaw);
      for (std::size_t t = 0; t < n; ++t) res.pose_samples.push_back({yaw[0], yaw[t], sim.per_frame[t]});
    }
    per_frame.emplace(per_frame.begin(), "arcsim", std::move(sim.per_frame));
  }
  if (m.fid) {
    res.real_inception = embed_frames(r.frames, providers.inc_for(worker));
    res.fake_inception = embed_frames(f.frames, providers.inc_for(worker));
    if (static_cast<int>(n) > 2 * cfg.fid_half_window)
      per_frame.emplace_back("fid_windowed",
                             imgq::windowed_frechet_distance(res.real_inception, res.fake_inception, cfg.fid_half_window));
  }
  if (nets.lipreading) {
    const auto& net = nets.lipreading->net;
    const double d = semmet::lrsd(clip_feature(net, r.frames), clip_feature(net, f.frames));
    rec.metrics["lrsd"] = d;
    rec.metrics["l2"] = std::sqrt(d);
  }
  if (nets.emotion) {
    const auto& net = nets.emotion->net;
    rec.metrics["esd"] = semmet::esd(clip_feature(net, r.frames), clip_feature(net, f.frames));
  }
  if (nets.blink) {
    const auto& net = nets.blink->net;
    const int t = net.config().frames;
    std::vector<FeatureVector> rs, fs_;
    for (int s : slice_starts(n, t, cfg.bsd_slices)) {
      const blink::SliceSpec spec{real.id, s, t, 0};
      rs.push_back(clip_feature(net, blink::crop_slice(spec, r.frames, r.landmarks, cfg.blink).crops));
      fs_.push_back(clip_feature(net, blink::crop_slice(spec, f.frames, f.landmarks, cfg.blink).crops));
    }
    if (!rs.empty()) rec.metrics["bsd"] = semmet::bsd(rs, fs_);
  }

  if (r.pose) {
    geom::PoseTrace pose(r.pose->angles().topRows(static_cast<Eigen::Index>(n)),
                         std::vector<double>(r.pose->residuals().begin(), r.pose->residuals().begin() + static_cast<std::ptrdiff_t>(n)));
    const Eigen::RowVector3d mean = pose.angles().colwise().mean();
    rec.stats["pitch"] = mean(0);
    rec.stats["yaw"] = mean(1);
    rec.stats["roll"] = mean(2);
    rec.stats["motion"] = geom::head_motion_score(pose, geom::Axis::kYaw);
    rec.stats["reference_yaw"] = pose.angles()(0, 1);
    res.trend = report::trend_trace(pose, per_frame);
  }
  res.record = std::move(rec);
  return res;
}

}  // namespace

report::MetricReport run_eval(const DatasetManifest& manifest, const BenchConfig& cfg) {
  cfg.validate();
  const auto& m = cfg.metrics;
  // Configuration problems surface before any pair is touched.
  Networks nets;
  nets.lipreading = load_if(m.lrsd, cfg, Target::kLipreading, "lrsd");
  nets.emotion = load_if(m.esd, cfg, Target::kEmotion, "esd");
  nets.blink = load_if(m.bsd, cfg, Target::kBlink, "bsd");
  const int workers = cfg.workers > 0 ? cfg.workers : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const Providers providers = make_providers(cfg, workers);

  const OutputLayout out(cfg.output_dir);
  out.create();
  std::vector<const ManifestEntry*> fakes;
  for (const auto& e : manifest.entries)
    if (!e.is_real() && (cfg.eval_split.empty() || e.split == cfg.eval_split)) fakes.push_back(&e);

  std::vector<PairOutcome> outcomes(fakes.size());
  parallel_for(fakes.size(), workers, [&](std::size_t i, int w) {
    const auto& fake = *fakes[i];
    try {
      const ManifestEntry* real = manifest.find(fake.real_id);
      require(real != nullptr, ErrorCode::kPairing, fake.id + ": paired clip '" + fake.real_id + "' missing");
      outcomes[i] = evaluate_pair(fake, *real, cfg, out, nets, providers, w);
    } catch (const Error& err) {
      outcomes[i].failure = report::FailureRecord{fake.id, "eval", std::string(to_string(err.code())), err.what()};
    } catch (const std::exception& err) {
      outcomes[i].failure = report::FailureRecord{fake.id, "eval", "exception", err.what()};
    }
  });

  std::vector<report::VideoRecord> records;
  std::vector<report::FailureRecord> failures;
  std::vector<report::PosePairSample> samples;
  std::map<std::string, std::pair<std::vector<const Eigen::MatrixXd*>, std::vector<const Eigen::MatrixXd*>>> fid_sets;
  for (const auto& o : outcomes) {
    if (o.failure) failures.push_back(*o.failure);
    if (!o.record) continue;
    records.push_back(*o.record);
    samples.insert(samples.end(), o.pose_samples.begin(), o.pose_samples.end());
    if (m.fid) {
      fid_sets[o.record->method].first.push_back(&o.real_inception);
      fid_sets[o.record->method].second.push_back(&o.fake_inception);
    }
  }

  const std::vector<report::BinSpec> specs{cfg.pose_bins, cfg.motion_bins};
  report::MetricReport rep = report::aggregate(std::move(records), specs);
  auto stack = [](const std::vector<const Eigen::MatrixXd*>& parts) {
    Eigen::Index rows = 0;
    for (const auto* p : parts) rows += p->rows();
    Eigen::MatrixXd all(rows, parts.front()->cols());
    Eigen::Index at = 0;
    for (const auto* p : parts) {
      all.middleRows(at, p->rows()) = *p;
      at += p->rows();
    }
    return all;
  };
  for (auto& agg : rep.methods) {
    const auto it = fid_sets.find(agg.method);
    if (it == fid_sets.end()) continue;
    try {
      agg.set_metrics["fid"] = imgq::frechet_distance(imgq::gaussian_stats(stack(it->second.first)),
                                                      imgq::gaussian_stats(stack(it->second.second)));
    } catch (const Error& err) {
      failures.push_back({agg.method, "fid", std::string(to_string(err.code())), err.what()});
    }
  }
  if (m.arcsim && !samples.empty()) rep.confusion.push_back(report::pose_confusion_matrix(samples, cfg.pose_bins, "arcsim"));
  std::sort(failures.begin(), failures.end(),
            [](const auto& a, const auto& b) { return std::tie(a.entry_id, a.stage) < std::tie(b.entry_id, b.stage); });
  rep.failures = std::move(failures);

  rep.provenance.config_hash = config_hash(cfg);
  if (!providers.identity.empty()) rep.provenance.fingerprints["identity_provider"] = providers.identity.front()->fingerprint();
  if (!providers.inception.empty()) rep.provenance.fingerprints["inception_provider"] = providers.inception.front()->fingerprint();
  if (nets.lipreading) rep.provenance.fingerprints["lipreading"] = nets.lipreading->net.fingerprint();
  if (nets.emotion) rep.provenance.fingerprints["emotion"] = nets.emotion->net.fingerprint();
  if (nets.blink) rep.provenance.fingerprints["blink"] = nets.blink->net.fingerprint();
  rep.provenance.created_at = utc_timestamp();

  report::write_report(out.reports, rep);
  fs::remove_all(out.reports / "trends");
  for (std::size_t i = 0; i < outcomes.size(); ++i)
    if (outcomes[i].trend)
      report::write_trend_tsv(out.reports / "trends" / path_safe(fakes[i]->method) / (path_safe(fakes[i]->id) + ".tsv"),
                              *outcomes[i].trend);
  return rep;
}

report::MetricReport run_report(const BenchConfig& cfg) {
  const OutputLayout out(cfg.output_dir);
  const auto old = report::read_report(out.reports / "report.json");
  const std::vector<report::BinSpec> specs{cfg.pose_bins, cfg.motion_bins};
  report::MetricReport rep = report::aggregate(old.records, specs);
  for (auto& agg : rep.methods)
    for (const auto& prev : old.methods)
      if (prev.method == agg.method) agg.set_metrics = prev.set_metrics;
  rep.confusion = old.confusion;
  rep.failures = old.failures;
  rep.provenance = old.provenance;
  report::write_report(out.reports, rep);
  return rep;
}

}  // namespace thbench::bench
