#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/synth.hpp"
#include "thbench/error.hpp"
#include "thbench/semmet.hpp"

using namespace thbench;
using namespace thbench::semmet;

namespace {

FeatureVector fv(std::vector<double> v, std::string src = "ck") { return FeatureVector(std::move(v), std::move(src)); }

FeatureVector random_fv(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> g;
  std::vector<double> v(d);
  for (double& x : v) x = g(rng);
  return fv(std::move(v));
}

FeatureVector scaled(const FeatureVector& a, double s) {
  std::vector<double> v = a.values();
  for (double& x : v) x *= s;
  return fv(std::move(v), a.source());
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("lrsd examples") {
  const auto a = fv({1, 2, 3});
  CHECK(lrsd(a, a) == 0.0);
  CHECK(lrsd(a, fv({1, 4, 3})) == 4.0);
  CHECK(l2_distance(a, fv({1, 4, 3})) == 2.0);
  CHECK(code_of([&] { lrsd(a, fv({1, 2, 3}, "other")); }) == ErrorCode::kPairing);
  CHECK(code_of([&] { lrsd(a, fv({1, 2})); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("esd and bsd examples") {
  CHECK(esd(fv({1, 2}), fv({1, 2})) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(esd(fv({1, 0}), fv({0, 3})) == 0.0);
  CHECK(bsd(fv({1, 2, 3}), fv({-1, -2, -3})) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(code_of([] { esd(fv({0, 0}), fv({1, 0})); }) == ErrorCode::kDegenerateFeature);
  CHECK(code_of([] { esd(fv({1, 0}), fv({1, 0}, "x")); }) == ErrorCode::kPairing);

  const std::vector<FeatureVector> r{fv({1, 0}), fv({0, 1})};
  const std::vector<FeatureVector> f{fv({1, 0}), fv({1, 0})};
  CHECK(bsd(r, f) == doctest::Approx(0.5));
  CHECK(code_of([&] { bsd(r, std::span<const FeatureVector>(f.data(), 1)); }) == ErrorCode::kPairing);
}

TEST_CASE("metric identities over 1000 random vectors") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(1e-3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t d = 1 + static_cast<std::size_t>(i % 64);
    const auto a = random_fv(rng, d), b = random_fv(rng, d), c = random_fv(rng, d);
    CHECK(lrsd(a, a) == 0.0);
    CHECK(lrsd(a, b) == lrsd(b, a));
    CHECK(lrsd(a, b) >= 0.0);
    CHECK(std::sqrt(lrsd(a, c)) <= std::sqrt(lrsd(a, b)) + std::sqrt(lrsd(b, c)) + 1e-9);
    CHECK(std::abs(esd(a, a) - 1.0) <= 1e-12);
    CHECK(esd(a, b) == esd(b, a));
    CHECK(std::abs(esd(a, b)) <= 1.0);
    const double s1 = u(rng), s2 = u(rng);
    CHECK(std::abs(bsd(scaled(a, s1), scaled(b, s2)) - bsd(a, b)) <= 1e-12);
    CHECK(std::abs(esd(scaled(a, s1), b) - esd(a, b)) <= 1e-12);
  }
}

TEST_CASE("score_pair") {
  PairedClipRecord r;
  r.lipreading = FeaturePair{fv({0, 0, 3}), fv({0, 4, 3})};
  r.blink_slices = {{fv({1, 0}), fv({1, 0})}, {fv({1, 0}), fv({-1, 0})}};
  const auto s = score_pair(r);
  CHECK(s.lrsd == 16.0);
  CHECK(s.l2 == 4.0);
  CHECK_FALSE(s.esd.has_value());
  CHECK(*s.bsd == doctest::Approx(0.0));
}

TEST_CASE("topk accuracy examples") {
  Eigen::MatrixXd perfect = Eigen::MatrixXd::Zero(3, 4);
  perfect(0, 1) = perfect(1, 3) = perfect(2, 0) = 5.0;
  const std::vector<int> y{1, 3, 0};
  for (int k = 1; k <= 4; ++k) CHECK(topk_accuracy(perfect, y, k) == 1.0);

  Eigen::MatrixXd third(1, 6);
  third << 0.9, 0.8, 0.7, 0.1, 0.0, -1.0;
  CHECK(topk_accuracy(third, std::vector<int>{2}, 5) == 1.0);
  CHECK(topk_accuracy(third, std::vector<int>{2}, 2) == 0.0);

  // Ties: the lower index ranks first.
  const Eigen::MatrixXd flat = Eigen::MatrixXd::Zero(1, 3);
  CHECK(topk_accuracy(flat, std::vector<int>{0}, 1) == 1.0);
  CHECK(topk_accuracy(flat, std::vector<int>{1}, 1) == 0.0);
  CHECK(topk_accuracy(flat, std::vector<int>{2}, 2) == 0.0);
  CHECK(topk_accuracy(flat, std::vector<int>{2}, 3) == 1.0);

  CHECK(code_of([&] { topk_accuracy(perfect, std::vector<int>{1, 4, 0}, 1); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { topk_accuracy(perfect, y, 5); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("random logits give chance top-1 and monotone top-k") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> g;
  const int n = 20000, v = 10;
  Eigen::MatrixXd logits(n, v);
  std::vector<int> y(n);
  std::uniform_int_distribution<int> lab(0, v - 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < v; ++j) logits(i, j) = g(rng);
    y[static_cast<std::size_t>(i)] = lab(rng);
  }
  const double sigma = std::sqrt(0.1 * 0.9 / n);
  CHECK(std::abs(topk_accuracy(logits, y, 1) - 0.1) <= 3 * sigma);
  double prev = 0.0;
  for (int k = 1; k <= v; ++k) {
    const double acc = topk_accuracy(logits, y, k);
    CHECK(acc >= prev);
    prev = acc;
  }
  CHECK(prev == 1.0);
}

TEST_CASE("per-word accuracy") {
  const std::vector<std::string> vocab{"ABOUT", "JOB", "POWER"};
  {
    const std::vector<int> labels{0, 1, 0}, preds{0, 1, 0};
    const auto t = per_word_accuracy(preds, labels, vocab);
    REQUIRE(t.size() == 2);
    CHECK(t[0].accuracy == 1.0);
    CHECK(t[1].accuracy == 1.0);
  }
  {
    const std::vector<int> labels{0, 0, 0, 0, 1, 1}, preds{0, 0, 2, 0, 0, 2};
    const auto t = per_word_accuracy(preds, labels, vocab);
    REQUIRE(t.size() == 2);
    CHECK(t[0].word == "ABOUT");
    CHECK(t[0].accuracy == 0.75);
    CHECK(t[1].word == "JOB");
    CHECK(t[1].accuracy == 0.0);
  }
  {
    // Counting oracle over a fixed confusion pattern.
    std::mt19937_64 rng(43);
    std::uniform_int_distribution<int> u(0, 2);
    std::vector<int> labels(300), preds(300);
    std::size_t correct[3] = {}, total[3] = {};
    for (std::size_t i = 0; i < labels.size(); ++i) {
      labels[i] = u(rng);
      preds[i] = u(rng);
      ++total[labels[i]];
      if (preds[i] == labels[i]) ++correct[labels[i]];
    }
    const auto t = per_word_accuracy(preds, labels, vocab);
    REQUIRE(t.size() == 3);
    for (const auto& w : t) {
      const std::size_t k = static_cast<std::size_t>(std::find(vocab.begin(), vocab.end(), w.word) - vocab.begin());
      CHECK(w.correct == correct[k]);
      CHECK(w.total == total[k]);
    }
    CHECK(t[0].accuracy >= t[1].accuracy);
    CHECK(t[1].accuracy >= t[2].accuracy);
  }
}
