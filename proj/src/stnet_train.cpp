#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "stnet_json.hpp"
#include "thbench/error.hpp"
#include "thbench/stnet.hpp"

namespace thbench::stnet {
namespace {

struct Adam {
  explicit Adam(const std::vector<Parameter>& params, const OptimizerSettings& s) : settings(s) {
    for (const auto& p : params) {
      m.emplace_back(p.value.size(), 0.0f);
      v.emplace_back(p.value.size(), 0.0f);
    }
  }

  void step(std::vector<Parameter>& params) {
    ++t;
    // Parameters added after construction (the ArcLoss head) get fresh moments.
    while (m.size() < params.size()) {
      m.emplace_back(params[m.size()].value.size(), 0.0f);
      v.emplace_back(params[v.size()].value.size(), 0.0f);
    }
    const double c1 = 1.0 - std::pow(settings.beta1, t);
    const double c2 = 1.0 - std::pow(settings.beta2, t);
    const auto b1 = static_cast<float>(settings.beta1), b2 = static_cast<float>(settings.beta2);
    const auto lr = static_cast<float>(settings.learning_rate / c1);
    const auto wd = static_cast<float>(settings.weight_decay);
    const auto inv_c2 = static_cast<float>(1.0 / c2);
    const auto eps = static_cast<float>(settings.epsilon);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const float g = p.grad.data[i] + wd * p.value.data[i];
        m[k][i] = b1 * m[k][i] + (1 - b1) * g;
        v[k][i] = b2 * v[k][i] + (1 - b2) * g * g;
        p.value.data[i] -= lr * m[k][i] / (std::sqrt(v[k][i] * inv_c2) + eps);
      }
    }
  }

  OptimizerSettings settings;
  std::vector<std::vector<float>> m, v;
  int t = 0;
};

std::vector<ClipTensor> gather(std::span<const Example> data, std::span<const std::size_t> idx) {
  std::vector<ClipTensor> clips;
  clips.reserve(idx.size());
  for (std::size_t i : idx) clips.push_back(data[i].clip);
  return clips;
}

int argmax_row(const Eigen::MatrixXf& m, Eigen::Index r) {
  Eigen::Index best = 0;
  m.row(r).maxCoeff(&best);
  return static_cast<int>(best);
}

Eigen::MatrixXd class_mean_directions(const STNet& net, std::span<const Example> train,
                                      std::mt19937_64& rng) {
  const auto& cfg = net.config();
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(cfg.feature_dim, cfg.num_classes);
  std::vector<int> counts(static_cast<std::size_t>(cfg.num_classes), 0);
  constexpr std::size_t kBatch = 32;
  for (std::size_t start = 0; start < train.size(); start += kBatch) {
    std::vector<ClipTensor> clips;
    const std::size_t end = std::min(train.size(), start + kBatch);
    for (std::size_t i = start; i < end; ++i) clips.push_back(train[i].clip);
    const auto out = net.forward(clips);
    for (std::size_t i = start; i < end; ++i) {
      const Eigen::VectorXd f = out.features.row(static_cast<Eigen::Index>(i - start)).cast<double>().transpose();
      const double n = f.norm();
      if (n > 0) sums.col(train[i].label) += f / n;
      ++counts[static_cast<std::size_t>(train[i].label)];
    }
  }
  std::normal_distribution<double> g;
  for (int c = 0; c < cfg.num_classes; ++c)
    if (counts[static_cast<std::size_t>(c)] == 0 || sums.col(c).norm() == 0.0)
      for (int r = 0; r < cfg.feature_dim; ++r) sums(r, c) = g(rng);
  return sums.colwise().normalized();
}

nlohmann::json run_manifest(const TrainRun& run, Head head, int epoch) {
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : run.log) {
    nlohmann::json row = {{"epoch", e.epoch}, {"loss", e.loss}, {"train_accuracy", e.train_accuracy}};
    if (std::isfinite(e.validation_accuracy)) row["validation_accuracy"] = e.validation_accuracy;
    log.push_back(row);
  }
  return {{"dataset_id", run.dataset_id},
          {"head", to_string(head)},
          {"epochs_completed", epoch},
          {"epochs", run.epochs},
          {"seed", run.seed},
          {"optimizer",
           {{"name", "adam"},
            {"learning_rate", run.optimizer.learning_rate},
            {"beta1", run.optimizer.beta1},
            {"beta2", run.optimizer.beta2},
            {"weight_decay", run.optimizer.weight_decay},
            {"batch_size", run.optimizer.batch_size}}},
          {"arc_scale", run.arc_scale},
          {"arc_margin", run.arc_margin},
          {"warm_start", run.warm_start.string()},
          {"log", log}};
}

}  // namespace

STNet train_classifier(const STNetConfig& cfg, std::span<const Example> train,
                       std::span<const Example> validation, Head head, TrainRun& run) {
  cfg.validate();
  require(!train.empty(), ErrorCode::kInvalidArgument, "training set is empty");
  require(run.epochs >= 1 && run.optimizer.batch_size >= 1, ErrorCode::kConfiguration,
          "epochs and batch size must be positive");
  require(run.labels.empty() || static_cast<int>(run.labels.size()) == cfg.num_classes,
          ErrorCode::kConfiguration, "label set size differs from num_classes");
  std::set<int> present;
  for (const auto& e : train) {
    require(e.label >= 0 && e.label < cfg.num_classes, ErrorCode::kInvalidArgument,
            "example " + e.id + " has label outside [0, num_classes)");
    present.insert(e.label);
  }
  require(present.size() >= 2, ErrorCode::kInvalidArgument, "training needs >= 2 classes present");
  std::set<std::string> train_ids;
  for (const auto& e : train) train_ids.insert(e.id);
  for (const auto& e : validation) {
    require(!train_ids.count(e.id), ErrorCode::kInvalidArgument,
            "example " + e.id + " appears in both train and validation splits");
    require(e.label >= 0 && e.label < cfg.num_classes, ErrorCode::kInvalidArgument,
            "example " + e.id + " has label outside [0, num_classes)");
  }

  std::mt19937_64 rng(run.seed);
  STNet net(cfg, run.seed);
  if (!run.warm_start.empty()) {
    const Checkpoint ck = load_checkpoint(run.warm_start);
    require(ck.net.config() == cfg, ErrorCode::kConfiguration,
            "warm-start checkpoint was trained with a different network configuration");
    for (const auto& p : ck.net.parameters()) {
      if (p.name == "arc.weight") continue;
      net.parameter(p.name).value = p.value;
    }
    if (head == Head::kArcLoss && ck.net.has_arc_head()) net.attach_arc_head(ck.net.arc_weight());
  }
  if (head == Head::kArcLoss && !net.has_arc_head())
    net.attach_arc_head(class_mean_directions(net, train, rng));

  Adam adam(net.parameters(), run.optimizer);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::string last_checkpoint;
  run.log.clear();

  for (int epoch = 1; epoch <= run.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    const auto bs = static_cast<std::size_t>(run.optimizer.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(bs, order.size() - start));
      const auto clips = gather(train, idx);
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(train[i].label);

      net.zero_grad();
      STNet::Tape tape;
      const ForwardOutput out = net.forward(clips, tape);
      double loss = 0.0;
      if (head == Head::kSoftmax) {
        const auto ce = softmax_cross_entropy(out.logits.cast<double>(), labels);
        loss = ce.loss;
        if (std::isfinite(loss)) net.backward(tape, Eigen::MatrixXf(), ce.grad_logits.cast<float>());
      } else {
        if (!out.features.allFinite())
          throw TrainingFault("non-finite features at epoch " + std::to_string(epoch), last_checkpoint);
        ArcLossParams ap{net.arc_weight(), run.arc_scale, run.arc_margin};
        const auto al = arcloss(out.features.cast<double>(), labels, ap);
        loss = al.loss;
        if (std::isfinite(loss)) {
          net.backward(tape, al.grad_features.cast<float>(), Eigen::MatrixXf());
          auto& g = net.parameter("arc.weight").grad;
          for (Eigen::Index r = 0; r < al.grad_weight.rows(); ++r)
            for (Eigen::Index c = 0; c < al.grad_weight.cols(); ++c)
              g.data[static_cast<std::size_t>(r * al.grad_weight.cols() + c)] += static_cast<float>(al.grad_weight(r, c));
        }
      }
      if (!std::isfinite(loss))
        throw TrainingFault("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(start / bs),
                            last_checkpoint);
      adam.step(net.parameters());

      loss_sum += loss * static_cast<double>(idx.size());
      const Eigen::MatrixXf sc = net.scores(out, head);
      for (std::size_t i = 0; i < idx.size(); ++i)
        if (argmax_row(sc, static_cast<Eigen::Index>(i)) == labels[i]) ++correct;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = loss_sum / static_cast<double>(train.size());
    entry.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    entry.validation_accuracy = validation.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                   : evaluate_accuracy(net, head, validation);
    run.log.push_back(entry);
    if (run.on_epoch) run.on_epoch(entry);
    if (!run.checkpoint_path.empty()) {
      save_checkpoint(run.checkpoint_path, net, head, run.labels, run_manifest(run, head, epoch).dump());
      last_checkpoint = run.checkpoint_path.string();
    }
  }
  run.final_train_accuracy = evaluate_accuracy(net, head, train);
  run.final_validation_accuracy = run.log.back().validation_accuracy;
  return net;
}

double evaluate_accuracy(const STNet& net, Head head, std::span<const Example> examples, int batch_size) {
  require(!examples.empty(), ErrorCode::kInvalidArgument, "no examples to evaluate");
  std::size_t correct = 0;
  const auto bs = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t start = 0; start < examples.size(); start += bs) {
    const std::size_t end = std::min(examples.size(), start + bs);
    std::vector<ClipTensor> clips;
    for (std::size_t i = start; i < end; ++i) clips.push_back(examples[i].clip);
    const Eigen::MatrixXf sc = net.scores(net.forward(clips), head);
    for (std::size_t i = start; i < end; ++i)
      if (argmax_row(sc, static_cast<Eigen::Index>(i - start)) == examples[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

std::vector<FeatureRecord> extract_features(const STNet& net, std::span<const Example> examples,
                                            std::span<const std::string> labels, int batch_size) {
  const std::string source = net.fingerprint();
  std::vector<FeatureRecord> out;
  out.reserve(examples.size());
  const auto bs = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t start = 0; start < examples.size(); start += bs) {
    const std::size_t end = std::min(examples.size(), start + bs);
    std::vector<ClipTensor> clips;
    for (std::size_t i = start; i < end; ++i) clips.push_back(examples[i].clip);
    const auto fwd = net.forward(clips);
    for (std::size_t i = start; i < end; ++i) {
      const auto row = fwd.features.row(static_cast<Eigen::Index>(i - start));
      std::vector<double> v(static_cast<std::size_t>(row.size()));
      for (Eigen::Index k = 0; k < row.size(); ++k) v[static_cast<std::size_t>(k)] = row(k);
      std::optional<std::string> name;
      const int y = examples[i].label;
      if (y >= 0)
        name = static_cast<std::size_t>(y) < labels.size() ? labels[static_cast<std::size_t>(y)]
                                                           : std::to_string(y);
      out.push_back({examples[i].id, name, FeatureVector(std::move(v), source)});
    }
  }
  return out;
}

Lexicon build_lexicon(std::span<const std::string> words, std::size_t size) {
  require(!words.empty(), ErrorCode::kInvalidArgument, "lexicon: transcripts are empty");
  std::map<std::string, std::size_t> counts;
  for (const auto& w : words)
    if (!w.empty()) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Lexicon lex;
  lex.short_lexicon = ranked.size() < size;
  for (std::size_t i = 0; i < std::min(size, ranked.size()); ++i) lex.words.push_back(ranked[i].first);
  return lex;
}

std::vector<Example> moving_pattern_clips(int count, int num_classes, const STNetConfig& cfg,
                                          std::uint64_t seed) {
  require(count >= 1, ErrorCode::kInvalidArgument, "clip count must be positive");
  require(num_classes >= 2 && num_classes <= 4, ErrorCode::kInvalidArgument,
          "moving patterns support 2 to 4 classes");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.05);
  const int h = cfg.height, w = cfg.width, t_len = cfg.frames;
  const int side = std::max(2, std::min(h, w) / 4);
  const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};

  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Example ex;
    ex.label = i % num_classes;
    ex.id = "pattern-" + std::to_string(seed) + "-" + std::to_string(i);
    ex.clip = ClipTensor({cfg.channels, t_len, h, w});
    const double bg = 0.3 * u01(rng);
    const double fg = 0.6 + 0.4 * u01(rng);
    const int speed = 1 + static_cast<int>(u01(rng) * 2.0);
    const int x0 = static_cast<int>(u01(rng) * w), y0 = static_cast<int>(u01(rng) * h);
    for (int t = 0; t < t_len; ++t) {
      const int px = x0 + dx[ex.label] * speed * t, py = y0 + dy[ex.label] * speed * t;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int rx = ((x - px) % w + w) % w, ry = ((y - py) % h + h) % h;
          const double base = (rx < side && ry < side) ? fg : bg;
          const float val = static_cast<float>(std::clamp(base + noise(rng), 0.0, 1.0));
          for (int c = 0; c < cfg.channels; ++c)
            ex.clip.data[((static_cast<std::size_t>(c) * t_len + t) * h + y) * w + x] = val;
        }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace thbench::stnet
