#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "thbench/error.hpp"
#include "thbench/nn/ops.hpp"

using namespace thbench;
using namespace thbench::nn;

namespace {

Tensor<double> random_tensor(std::mt19937_64& rng, std::vector<int> shape) {
  std::normal_distribution<double> g;
  Tensor<double> t(std::move(shape));
  for (double& v : t.data) v = g(rng);
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

// Central differences of f with respect to every entry of `t`.
Tensor<double> numeric_grad(Tensor<double>& t, const std::function<double()>& f) {
  Tensor<double> g(t.shape);
  const double h = 1e-6;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double keep = t.data[i];
    t.data[i] = keep + h;
    const double up = f();
    t.data[i] = keep - h;
    const double down = f();
    t.data[i] = keep;
    g.data[i] = (up - down) / (2 * h);
  }
  return g;
}

double rel_error(const Tensor<double>& a, const Tensor<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    den = std::max(den, std::max(a.data[i] * a.data[i], b.data[i] * b.data[i]));
  }
  return std::sqrt(num) / std::max(std::sqrt(den) * std::sqrt(double(a.size())), 1e-12);
}

// Direct nested-loop convolution.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                          const Conv3dSpec& s) {
  const auto out = s.output_extent({x.dim(2), x.dim(3), x.dim(4)});
  Tensor<double> y({x.dim(0), s.out_channels, out[0], out[1], out[2]});
  auto xi = [&](int n, int c, int z, int yy, int xx) {
    if (z < 0 || yy < 0 || xx < 0 || z >= x.dim(2) || yy >= x.dim(3) || xx >= x.dim(4)) return 0.0;
    return x.data[(((static_cast<std::size_t>(n) * x.dim(1) + c) * x.dim(2) + z) * x.dim(3) + yy) * x.dim(4) + xx];
  };
  std::size_t idx = 0;
  for (int n = 0; n < y.dim(0); ++n)
    for (int o = 0; o < y.dim(1); ++o)
      for (int z = 0; z < y.dim(2); ++z)
        for (int yy = 0; yy < y.dim(3); ++yy)
          for (int xx = 0; xx < y.dim(4); ++xx, ++idx) {
            double acc = b.data[static_cast<std::size_t>(o)];
            for (int c = 0; c < s.in_channels; ++c)
              for (int kz = 0; kz < s.kernel[0]; ++kz)
                for (int ky = 0; ky < s.kernel[1]; ++ky)
                  for (int kx = 0; kx < s.kernel[2]; ++kx)
                    acc += w.data[(((static_cast<std::size_t>(o) * s.in_channels + c) * s.kernel[0] + kz) *
                                       s.kernel[1] + ky) * s.kernel[2] + kx] *
                           xi(n, c, z * s.stride[0] - s.padding[0] + kz, yy * s.stride[1] - s.padding[1] + ky,
                              xx * s.stride[2] - s.padding[2] + kx);
            y.data[idx] = acc;
          }
  return y;
}

}  // namespace

TEST_CASE("conv3d matches a direct loop") {
  std::mt19937_64 rng(21);
  const Conv3dSpec specs[] = {
      {2, 3, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}},
      {2, 4, {1, 3, 3}, {1, 2, 2}, {0, 1, 1}},
      {3, 2, {3, 1, 1}, {1, 1, 1}, {1, 0, 0}},
      {1, 2, {5, 3, 3}, {1, 2, 1}, {2, 1, 1}},
  };
  for (const auto& s : specs) {
    const auto x = random_tensor(rng, {2, s.in_channels, 5, 7, 6});
    const auto w = random_tensor(rng, s.weight_shape());
    const auto b = random_tensor(rng, {s.out_channels});
    const auto fast = conv3d_forward(x, w, &b, s);
    const auto slow = naive_conv(x, w, b, s);
    REQUIRE(fast.shape == slow.shape);
    for (std::size_t i = 0; i < fast.size(); ++i) CHECK(fast.data[i] == doctest::Approx(slow.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv3d gradients match finite differences") {
  std::mt19937_64 rng(22);
  const Conv3dSpec specs[] = {
      {2, 3, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}},
      {2, 2, {1, 3, 3}, {1, 2, 2}, {0, 1, 1}},
      {3, 2, {3, 1, 1}, {1, 1, 1}, {1, 0, 0}},
  };
  for (const auto& s : specs) {
    auto x = random_tensor(rng, {2, s.in_channels, 4, 5, 5});
    auto w = random_tensor(rng, s.weight_shape());
    auto b = random_tensor(rng, {s.out_channels});
    const auto probe = random_tensor(rng, conv3d_forward(x, w, &b, s).shape);
    auto loss = [&] { return dot(conv3d_forward(x, w, &b, s), probe); };

    Tensor<double> gw(w.shape), gb(b.shape);
    const auto gx = conv3d_backward(x, w, probe, s, gw, &gb);
    CHECK(rel_error(gx, numeric_grad(x, loss)) < 1e-7);
    CHECK(rel_error(gw, numeric_grad(w, loss)) < 1e-7);
    CHECK(rel_error(gb, numeric_grad(b, loss)) < 1e-7);
  }
}

TEST_CASE("linear, relu, pooling and swap gradients") {
  std::mt19937_64 rng(23);
  auto x = random_tensor(rng, {3, 5});
  auto w = random_tensor(rng, {4, 5});
  auto b = random_tensor(rng, {4});
  const auto probe = random_tensor(rng, {3, 4});
  auto loss = [&] { return dot(relu_forward(linear_forward(x, w, &b)), probe); };
  Tensor<double> gw(w.shape), gb(b.shape);
  const auto y = relu_forward(linear_forward(x, w, &b));
  const auto gx = linear_backward(x, w, relu_backward(y, probe), gw, &gb);
  CHECK(rel_error(gx, numeric_grad(x, loss)) < 1e-7);
  CHECK(rel_error(gw, numeric_grad(w, loss)) < 1e-7);
  CHECK(rel_error(gb, numeric_grad(b, loss)) < 1e-7);

  auto t = random_tensor(rng, {2, 3, 4, 2, 2});
  const auto p2 = random_tensor(rng, {2, 4, 3, 1, 1});
  auto pool_loss = [&] { return dot(mean_inner(swap_axes_12(t), 4, {2, 4, 3, 1, 1}), p2); };
  const auto g_pool = swap_axes_12(mean_inner_backward(p2, 4, {2, 4, 3, 2, 2}));
  CHECK(rel_error(g_pool, numeric_grad(t, pool_loss)) < 1e-7);
}

TEST_CASE("swap_axes_12 is an involution") {
  std::mt19937_64 rng(24);
  const auto t = random_tensor(rng, {2, 3, 5, 2, 1});
  const auto s = swap_axes_12(t);
  CHECK(s.shape == std::vector<int>{2, 5, 3, 2, 1});
  CHECK(swap_axes_12(s).data == t.data);
}

TEST_CASE("shape errors") {
  Tensor<float> x({1, 2, 3, 4, 4});
  Tensor<float> w({3, 1, 1, 3, 3});
  const Conv3dSpec s{1, 3, {1, 3, 3}, {1, 1, 1}, {0, 1, 1}};
  CHECK_THROWS_AS(conv3d_forward(x, w, static_cast<const Tensor<float>*>(nullptr), s), Error);
  Tensor<float> small({1, 1, 1, 2, 2});
  const Conv3dSpec big{1, 3, {1, 3, 3}, {1, 1, 1}, {0, 0, 0}};
  CHECK_THROWS_AS(conv3d_forward(small, w, static_cast<const Tensor<float>*>(nullptr), big), Error);
  CHECK_THROWS_AS(Tensor<float>({2, 3}).reshaped({4}), Error);
}
