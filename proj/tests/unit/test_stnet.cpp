#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "../support/synth.hpp"
#include "thbench/error.hpp"
#include "thbench/stnet.hpp"

using namespace thbench;
using namespace thbench::stnet;

namespace {

// Elementwise evaluation of the margin loss straight from its definition.
double naive_arcloss(const Eigen::MatrixXd& f, const std::vector<int>& y, const Eigen::MatrixXd& w,
                     double s, double m) {
  double total = 0;
  for (int i = 0; i < f.rows(); ++i) {
    double fn = 0;
    for (int k = 0; k < f.cols(); ++k) fn += f(i, k) * f(i, k);
    fn = std::sqrt(fn);
    double denom = 0, numer = 0;
    for (int j = 0; j < w.cols(); ++j) {
      double wn = 0, d = 0;
      for (int k = 0; k < w.rows(); ++k) {
        wn += w(k, j) * w(k, j);
        d += f(i, k) * w(k, j);
      }
      const double c = d / (fn * std::sqrt(wn));
      if (j == y[static_cast<std::size_t>(i)]) {
        const double theta = std::acos(std::clamp(c, -1.0, 1.0));
        numer = std::exp(s * std::cos(std::min(theta + m, std::numbers::pi)));
        denom += numer;
      } else {
        denom += std::exp(s * c);
      }
    }
    total += -std::log(numer / denom);
  }
  return total / f.rows();
}

double naive_cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& y) {
  double total = 0;
  for (int i = 0; i < logits.rows(); ++i) {
    double denom = 0;
    for (int j = 0; j < logits.cols(); ++j) denom += std::exp(logits(i, j));
    total += std::log(denom) - logits(i, y[static_cast<std::size_t>(i)]);
  }
  return total / logits.rows();
}

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int r, int c) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

std::vector<int> random_labels(std::mt19937_64& rng, int n, int v) {
  std::uniform_int_distribution<int> u(0, v - 1);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int& l : y) l = u(rng);
  return y;
}

double max_rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

STNetConfig tiny_config() {
  STNetConfig c = STNetConfig::toy(3);
  c.frames = 4;
  c.height = c.width = 8;
  c.st_stage = {{4, {3, 3, 3}, {1, 1, 1}}};
  c.refine_widths = {4, 8};
  c.refine_blocks = {1, 1};
  c.feature_dim = 6;
  c.mlp_hidden = {5};
  return c;
}

}  // namespace

TEST_CASE("arcloss with zero margin is cross-entropy over s cos") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const auto f = random_matrix(rng, 6, 8);
    const auto w = random_matrix(rng, 8, 4);
    const auto y = random_labels(rng, 6, 4);
    for (double s : {1.0, 16.0, 64.0}) {
      const double loss = arcloss(f, y, {w, s, 0.0}).loss;
      Eigen::MatrixXd logits = f.rowwise().normalized() * w.colwise().normalized();
      logits *= s;
      CHECK(std::abs(loss - naive_cross_entropy(logits, y)) < 1e-6);
      CHECK(std::abs(loss - softmax_cross_entropy(logits, y).loss) < 1e-6);
    }
  }
}

TEST_CASE("arcloss scalar example") {
  const double phi = 1.0;
  Eigen::MatrixXd w(2, 2);
  w << 1.0, std::cos(phi), 0.0, std::sin(phi);
  Eigen::MatrixXd f(1, 2);
  f << 3.0, 0.0;  // aligned with class 0, theta = 0
  const std::vector<int> y{0};
  const double a = std::exp(64 * std::cos(0.5)), b = std::exp(64 * std::cos(phi));
  CHECK(arcloss(f, y, {w, 64.0, 0.5}).loss == doctest::Approx(-std::log(a / (a + b))).epsilon(1e-12));
}

TEST_CASE("arcloss agrees with the naive loop") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = random_matrix(rng, 8, 16);
    const auto w = random_matrix(rng, 16, 5);
    const auto y = random_labels(rng, 8, 5);
    CHECK(std::abs(arcloss(f, y, {w, 64.0, 0.5}).loss - naive_arcloss(f, y, w, 64.0, 0.5)) < 1e-6);
    CHECK(std::abs(arcloss(f, y, {w, 30.0, 1.2}).loss - naive_arcloss(f, y, w, 30.0, 1.2)) < 1e-6);
  }
}

TEST_CASE("arcloss gradients match central differences") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 6; ++trial) {
    Eigen::MatrixXd f = random_matrix(rng, 4, 6);
    Eigen::MatrixXd w = random_matrix(rng, 6, 5);
    const auto y = random_labels(rng, 4, 5);
    const double s = trial % 2 ? 64.0 : 8.0;
    const auto res = arcloss(f, y, {w, s, 0.5});
    const double h = 1e-6;
    Eigen::MatrixXd nf(f.rows(), f.cols()), nw(w.rows(), w.cols());
    for (int i = 0; i < f.rows(); ++i)
      for (int j = 0; j < f.cols(); ++j) {
        const double keep = f(i, j);
        f(i, j) = keep + h;
        const double up = arcloss(f, y, {w, s, 0.5}, false).loss;
        f(i, j) = keep - h;
        const double down = arcloss(f, y, {w, s, 0.5}, false).loss;
        f(i, j) = keep;
        nf(i, j) = (up - down) / (2 * h);
      }
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) {
        const double keep = w(i, j);
        w(i, j) = keep + h;
        const double up = arcloss(f, y, {w, s, 0.5}, false).loss;
        w(i, j) = keep - h;
        const double down = arcloss(f, y, {w, s, 0.5}, false).loss;
        w(i, j) = keep;
        nw(i, j) = (up - down) / (2 * h);
      }
    CHECK(max_rel_error(res.grad_features, nf) <= 1e-4);
    CHECK(max_rel_error(res.grad_weight, nw) <= 1e-4);
  }
}

TEST_CASE("arcloss is invariant to feature row scale") {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> u(0.01, 50.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = random_matrix(rng, 5, 7);
    const auto w = random_matrix(rng, 7, 3);
    const auto y = random_labels(rng, 5, 3);
    Eigen::MatrixXd g = f;
    for (int i = 0; i < g.rows(); ++i) g.row(i) *= u(rng);
    CHECK(std::abs(arcloss(f, y, {w}).loss - arcloss(g, y, {w}).loss) < 1e-6);
  }
}

TEST_CASE("margin strictly increases the loss of correctly classified samples") {
  std::mt19937_64 rng(35);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto f = random_matrix(rng, 1, 6);
    const auto w = random_matrix(rng, 6, 4);
    Eigen::Index best = 0;
    (f.rowwise().normalized() * w.colwise().normalized()).row(0).maxCoeff(&best);
    const std::vector<int> y{static_cast<int>(best)};
    for (double s : {4.0, 16.0}) {
      CHECK(arcloss(f, y, {w, s, 0.3}).loss > arcloss(f, y, {w, s, 0.0}).loss);
      ++checked;
    }
  }
  CHECK(checked == 400);
}

TEST_CASE("arcloss errors") {
  Eigen::MatrixXd f = Eigen::MatrixXd::Ones(2, 3);
  Eigen::MatrixXd w = Eigen::MatrixXd::Identity(3, 2);
  const std::vector<int> y{0, 1};
  f.row(1).setZero();
  try {
    arcloss(f, y, {w});
    FAIL("expected degenerate feature");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerateFeature);
  }
  f.row(1).setOnes();
  CHECK_THROWS_AS(arcloss(f, std::vector<int>{0, 2}, {w}), Error);
  CHECK_THROWS_AS(arcloss(f, y, {w, 64.0, 2.0}), Error);
  CHECK_THROWS_AS(arcloss(f, y, {w, -1.0, 0.5}), Error);
}

TEST_CASE("target angle is clamped at pi") {
  // Feature opposite its class: theta = pi, so the margin cannot push further.
  Eigen::MatrixXd w(2, 2);
  w << 1, 0, 0, 1;
  Eigen::MatrixXd f(1, 2);
  f << -1.0, 0.0;
  const std::vector<int> y{0};
  const double clamped = arcloss(f, y, {w, 4.0, 0.5}).loss;
  const double a = std::exp(-4.0), b = std::exp(0.0);
  CHECK(clamped == doctest::Approx(-std::log(a / (a + b))));
  CHECK(arcloss(f, y, {w, 4.0, 0.5}).grad_features.allFinite());
}

TEST_CASE("forward shapes, determinism and batch independence") {
  const auto cfg = tiny_config();
  const STNet net(cfg, 7);
  const auto clips = moving_pattern_clips(3, 3, cfg, 1);
  std::vector<ClipTensor> batch{clips[0].clip, clips[1].clip, clips[0].clip, clips[2].clip};
  const auto out = net.forward(batch);
  CHECK(out.features.rows() == 4);
  CHECK(out.features.cols() == cfg.feature_dim);
  CHECK(out.logits.cols() == cfg.num_classes);
  CHECK(out.features.row(0) == out.features.row(2));
  CHECK(out.logits.row(0) == out.logits.row(2));

  const std::vector<ClipTensor> alone{clips[2].clip};
  const auto single = net.forward(alone);
  CHECK(single.features.row(0) == out.features.row(3));
  CHECK(single.logits.row(0) == out.logits.row(3));

  const std::vector<ClipTensor> zero{ClipTensor({1, cfg.frames, cfg.height, cfg.width})};
  const auto z = net.forward(zero);
  CHECK(z.features.allFinite());
  CHECK(z.logits.allFinite());

  const std::vector<ClipTensor> bad{ClipTensor({1, cfg.frames + 1, cfg.height, cfg.width})};
  try {
    net.forward(bad);
    FAIL("expected invalid input");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidInput);
  }
}

TEST_CASE("network gradient agrees with a directional difference") {
  const auto cfg = tiny_config();
  STNet net(cfg, 8);
  // Perturb the zero-initialised convs and biases so every path carries gradient.
  std::mt19937_64 rng(9);
  std::normal_distribution<float> g(0.0f, 0.1f);
  for (auto& p : net.parameters())
    if (p.name.find("conv2") != std::string::npos || p.name.ends_with(".bias"))
      for (float& v : p.value.data) v = g(rng);
  const auto clips = moving_pattern_clips(3, 3, cfg, 2);
  std::vector<ClipTensor> batch;
  std::vector<int> labels;
  for (const auto& c : clips) {
    batch.push_back(c.clip);
    labels.push_back(c.label);
  }
  auto loss_of = [&](const STNet& n) {
    return softmax_cross_entropy(n.forward(batch).logits.cast<double>(), labels).loss;
  };

  net.zero_grad();
  STNet::Tape tape;
  const auto out = net.forward(batch, tape);
  net.backward(tape, Eigen::MatrixXf(), softmax_cross_entropy(out.logits.cast<double>(), labels).grad_logits.cast<float>());

  // Per parameter: directional derivative along a random unit direction.
  int compared = 0;
  for (std::size_t k = 0; k < net.parameters().size(); ++k) {
    auto& p = net.parameters()[k];
    std::vector<float> dir(p.value.size());
    double norm = 0;
    for (float& d : dir) {
      d = g(rng);
      norm += double(d) * d;
    }
    norm = std::sqrt(norm);
    double analytic = 0;
    for (std::size_t i = 0; i < dir.size(); ++i) {
      dir[i] = static_cast<float>(dir[i] / norm);
      analytic += double(dir[i]) * p.grad.data[i];
    }
    const auto keep = p.value.data;
    const float h = 1e-3f;
    for (std::size_t i = 0; i < dir.size(); ++i) p.value.data[i] = keep[i] + h * dir[i];
    const double up = loss_of(net);
    for (std::size_t i = 0; i < dir.size(); ++i) p.value.data[i] = keep[i] - h * dir[i];
    const double down = loss_of(net);
    p.value.data = keep;
    const double numeric = (up - down) / (2 * h);
    CAPTURE(p.name);
    // Float forward plus ReLU kinks crossed by a shifted bias: exact agreement
    // is checked per op in double, this guards the wiring.
    CHECK(std::abs(numeric - analytic) <= 0.1 * std::abs(analytic) + 5e-4);
    ++compared;
  }
  CHECK(compared == static_cast<int>(net.parameters().size()));
}

TEST_CASE("checkpoint round trip") {
  testing::TempDir dir;
  const auto cfg = tiny_config();
  STNet net(cfg, 8);
  std::mt19937_64 rng(10);
  net.attach_arc_head(random_matrix(rng, cfg.feature_dim, cfg.num_classes));
  const std::vector<std::string> labels{"right", "left", "down"};
  save_checkpoint(dir.path() / "ck" / "net.bin", net, Head::kArcLoss, labels, R"({"dataset_id":"toy"})");
  const auto ck = load_checkpoint(dir.path() / "ck" / "net.bin");
  CHECK(ck.head == Head::kArcLoss);
  CHECK(ck.labels == labels);
  CHECK(ck.manifest_json == R"({"dataset_id":"toy"})");
  CHECK(ck.net.config() == cfg);
  CHECK(ck.net.fingerprint() == net.fingerprint());
  CHECK(ck.net.has_arc_head());

  const auto clips = moving_pattern_clips(2, 3, cfg, 3);
  const std::vector<ClipTensor> batch{clips[0].clip, clips[1].clip};
  CHECK(ck.net.forward(batch).features == net.forward(batch).features);

  // Flip a data byte: the fingerprint check must catch it.
  const auto path = dir.path() / "ck" / "net.bin";
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(-3, std::ios::end);
  f.put('\x7f');
  f.close();
  try {
    load_checkpoint(path);
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
  std::ofstream(dir.path() / "junk.bin") << "not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "junk.bin"), Error);
}

TEST_CASE("config validation and json") {
  auto cfg = STNetConfig{};
  cfg.validate();
  CHECK(stnet_config_from_json(to_json(cfg)) == cfg);
  const auto toy = STNetConfig::toy(3);
  CHECK(stnet_config_from_json(to_json(toy)) == toy);

  auto bad = toy;
  bad.frames = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = toy;
  bad.feature_dim = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = toy;
  bad.num_classes = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = toy;
  bad.st_stage[0].stride[0] = 2;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("clip_from_frames") {
  const auto cfg = STNetConfig::toy(3);
  std::vector<cv::Mat> frames(8, cv::Mat(32, 32, CV_8UC3, cv::Scalar(255, 255, 255)));
  const auto clip = clip_from_frames(frames, cfg);
  CHECK(clip.shape == std::vector<int>{1, 8, 16, 16});
  for (float v : clip.data) CHECK(v == doctest::Approx(1.0f));
  frames.pop_back();
  CHECK_THROWS_AS(clip_from_frames(frames, cfg), Error);
}

TEST_CASE("build_lexicon") {
  const std::vector<std::string> corpus{"a", "b", "a", "c", "a", "b", "a", "b", "a"};
  const auto lex = build_lexicon(corpus, 2);
  CHECK(lex.words == std::vector<std::string>{"a", "b"});
  CHECK_FALSE(lex.short_lexicon);

  const std::vector<std::string> tie{"b", "a", "b", "a"};
  CHECK(build_lexicon(tie, 1).words == std::vector<std::string>{"a"});

  const auto all = build_lexicon(corpus, 10);
  CHECK(all.short_lexicon);
  CHECK(all.words == std::vector<std::string>{"a", "b", "c"});
  CHECK_THROWS_AS(build_lexicon(std::vector<std::string>{}, 3), Error);

  std::vector<std::string> big;
  for (int w = 0; w < 400; ++w)
    for (int k = 0; k <= w % 7; ++k) big.push_back("w" + std::to_string(w));
  CHECK(build_lexicon(big, 300).words.size() == 300);
}

TEST_CASE("single batch overfit") {
  const auto cfg = STNetConfig::toy(3);
  const auto data = moving_pattern_clips(8, 3, cfg, 4);
  TrainRun run;
  run.epochs = 200;
  run.optimizer.batch_size = 8;
  run.seed = 5;
  const STNet net = train_classifier(cfg, data, {}, Head::kSoftmax, run);
  CHECK(run.final_train_accuracy == 1.0);
  CHECK(run.log.size() == 200);
  CHECK(run.log.back().loss < run.log.front().loss);
}

TEST_CASE("training is reproducible and validates its inputs") {
  const auto cfg = tiny_config();
  const auto data = moving_pattern_clips(12, 3, cfg, 6);
  TrainRun a, b;
  a.epochs = b.epochs = 2;
  a.optimizer.batch_size = b.optimizer.batch_size = 4;
  a.seed = b.seed = 11;
  const STNet na = train_classifier(cfg, data, {}, Head::kSoftmax, a);
  const STNet nb = train_classifier(cfg, data, {}, Head::kSoftmax, b);
  CHECK(na.fingerprint() == nb.fingerprint());
  CHECK(a.log.back().loss == b.log.back().loss);

  TrainRun c;
  std::vector<Example> one_class(data.begin(), data.begin() + 1);
  CHECK_THROWS_AS(train_classifier(cfg, one_class, {}, Head::kSoftmax, c), Error);
  CHECK_THROWS_AS(train_classifier(cfg, data, std::span<const Example>(data.data(), 2), Head::kSoftmax, c), Error);
}

TEST_CASE("divergence raises a training fault") {
  testing::TempDir dir;
  const auto cfg = tiny_config();
  const auto data = moving_pattern_clips(8, 3, cfg, 7);
  TrainRun run;
  run.epochs = 50;
  run.optimizer.batch_size = 4;
  run.optimizer.learning_rate = 1e30;
  run.checkpoint_path = dir.path() / "fault.bin";
  try {
    train_classifier(cfg, data, {}, Head::kSoftmax, run);
    FAIL("expected a training fault");
  } catch (const TrainingFault& e) {
    CHECK(e.code() == ErrorCode::kTrainingFault);
    if (!e.last_checkpoint().empty()) CHECK(std::filesystem::exists(e.last_checkpoint()));
  }
}

TEST_CASE("arcloss fine-tune from a warm start") {
  testing::TempDir dir;
  const auto cfg = tiny_config();
  const auto data = moving_pattern_clips(24, 3, cfg, 8);
  TrainRun soft;
  soft.epochs = 3;
  soft.optimizer.batch_size = 8;
  soft.checkpoint_path = dir.path() / "soft.bin";
  soft.labels = {"right", "left", "down"};
  const STNet base = train_classifier(cfg, data, {}, Head::kSoftmax, soft);

  TrainRun arc;
  arc.epochs = 1;
  arc.optimizer.batch_size = 8;
  arc.optimizer.learning_rate = 0.0;  // only check initialisation
  arc.warm_start = soft.checkpoint_path;
  const STNet tuned = train_classifier(cfg, data, {}, Head::kArcLoss, arc);
  CHECK(tuned.has_arc_head());
  CHECK(tuned.parameter("st.0.weight").value.data == base.parameter("st.0.weight").value.data);
  const Eigen::MatrixXd w = tuned.arc_weight();
  for (int c = 0; c < w.cols(); ++c) CHECK(w.col(c).norm() == doctest::Approx(1.0).epsilon(1e-6));

  const auto feats = extract_features(tuned, data, soft.labels);
  REQUIRE(feats.size() == data.size());
  CHECK(feats[0].feature.dim() == static_cast<std::size_t>(cfg.feature_dim));
  CHECK(feats[0].feature.source() == tuned.fingerprint());
  CHECK(feats[1].label == std::optional<std::string>("left"));

  auto other = cfg;
  other.feature_dim = 7;
  TrainRun mismatch;
  mismatch.warm_start = soft.checkpoint_path;
  CHECK_THROWS_AS(train_classifier(other, data, {}, Head::kArcLoss, mismatch), Error);
}
