#include "thbench/nn/ops.hpp"

#include <algorithm>

#include <Eigen/Core>

namespace thbench::nn {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstRowMap = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  int n, ci, d, h, w;
  int co, od, oh, ow;
  int k;  // ci * kd * kh * kw
  int p;  // od * oh * ow
};

template <class T>
ConvGeometry geometry(const Tensor<T>& x, const Tensor<T>& w, const Conv3dSpec& spec) {
  require(x.rank() == 5, ErrorCode::kInvalidInput,
          "conv3d expects (N, C, D, H, W), got " + shape_string(x.shape));
  require(w.shape == spec.weight_shape(), ErrorCode::kInvalidArgument,
          "conv3d weight shape " + shape_string(w.shape) + " does not match spec");
  require(x.dim(1) == spec.in_channels, ErrorCode::kInvalidInput,
          "conv3d expects " + std::to_string(spec.in_channels) + " input channels, got " +
              std::to_string(x.dim(1)));
  ConvGeometry g{};
  g.n = x.dim(0);
  g.ci = x.dim(1);
  g.d = x.dim(2);
  g.h = x.dim(3);
  g.w = x.dim(4);
  g.co = spec.out_channels;
  const auto out = spec.output_extent({g.d, g.h, g.w});
  g.od = out[0];
  g.oh = out[1];
  g.ow = out[2];
  g.k = g.ci * spec.kernel[0] * spec.kernel[1] * spec.kernel[2];
  g.p = g.od * g.oh * g.ow;
  return g;
}

// Column (k, p) holds the input sample feeding kernel tap k at output p.
template <class T>
void im2col(const T* x, const ConvGeometry& g, const Conv3dSpec& s, T* cols) {
  int row = 0;
  for (int c = 0; c < g.ci; ++c)
    for (int kz = 0; kz < s.kernel[0]; ++kz)
      for (int ky = 0; ky < s.kernel[1]; ++ky)
        for (int kx = 0; kx < s.kernel[2]; ++kx, ++row) {
          T* dst = cols + static_cast<std::size_t>(row) * g.p;
          for (int oz = 0; oz < g.od; ++oz) {
            const int iz = oz * s.stride[0] - s.padding[0] + kz;
            for (int oy = 0; oy < g.oh; ++oy) {
              const int iy = oy * s.stride[1] - s.padding[1] + ky;
              const bool inside = iz >= 0 && iz < g.d && iy >= 0 && iy < g.h;
              const T* src = inside ? x + ((static_cast<std::size_t>(c) * g.d + iz) * g.h + iy) * g.w
                                    : nullptr;
              for (int ox = 0; ox < g.ow; ++ox) {
                const int ix = ox * s.stride[2] - s.padding[2] + kx;
                *dst++ = (inside && ix >= 0 && ix < g.w) ? src[ix] : T(0);
              }
            }
          }
        }
}

template <class T>
void col2im(const T* cols, const ConvGeometry& g, const Conv3dSpec& s, T* gx) {
  int row = 0;
  for (int c = 0; c < g.ci; ++c)
    for (int kz = 0; kz < s.kernel[0]; ++kz)
      for (int ky = 0; ky < s.kernel[1]; ++ky)
        for (int kx = 0; kx < s.kernel[2]; ++kx, ++row) {
          const T* src = cols + static_cast<std::size_t>(row) * g.p;
          for (int oz = 0; oz < g.od; ++oz) {
            const int iz = oz * s.stride[0] - s.padding[0] + kz;
            for (int oy = 0; oy < g.oh; ++oy, src += g.ow) {
              const int iy = oy * s.stride[1] - s.padding[1] + ky;
              if (iz < 0 || iz >= g.d || iy < 0 || iy >= g.h) continue;
              T* dst = gx + ((static_cast<std::size_t>(c) * g.d + iz) * g.h + iy) * g.w;
              for (int ox = 0; ox < g.ow; ++ox) {
                const int ix = ox * s.stride[2] - s.padding[2] + kx;
                if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
              }
            }
          }
        }
}

}  // namespace

std::array<int, 3> Conv3dSpec::output_extent(const std::array<int, 3>& in) const {
  std::array<int, 3> out{};
  for (int i = 0; i < 3; ++i) {
    require(kernel[i] >= 1 && stride[i] >= 1 && padding[i] >= 0, ErrorCode::kInvalidArgument,
            "conv3d: bad kernel/stride/padding");
    const int span = in[i] + 2 * padding[i] - kernel[i];
    require(span >= 0, ErrorCode::kInvalidInput, "conv3d: input smaller than kernel");
    out[i] = span / stride[i] + 1;
  }
  return out;
}

template <class T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                         const Conv3dSpec& spec) {
  const ConvGeometry g = geometry(x, w, spec);
  Tensor<T> y({g.n, g.co, g.od, g.oh, g.ow});
  std::vector<T> cols(static_cast<std::size_t>(g.k) * g.p);
  const ConstRowMap<T> wm(w.ptr(), g.co, g.k);
  const ConstRowMap<T> cm(cols.data(), g.k, g.p);
  const std::size_t in_stride = static_cast<std::size_t>(g.ci) * g.d * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(g.co) * g.p;
  for (int n = 0; n < g.n; ++n) {
    im2col(x.ptr() + n * in_stride, g, spec, cols.data());
    RowMap<T> ym(y.ptr() + n * out_stride, g.co, g.p);
    ym.noalias() = wm * cm;
    if (bias)
      for (int o = 0; o < g.co; ++o) ym.row(o).array() += bias->data[static_cast<std::size_t>(o)];
  }
  return y;
}

template <class T>
Tensor<T> conv3d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                          const Conv3dSpec& spec, Tensor<T>& gw, Tensor<T>* gbias) {
  const ConvGeometry g = geometry(x, w, spec);
  require(gy.shape == std::vector<int>{g.n, g.co, g.od, g.oh, g.ow}, ErrorCode::kInvalidArgument,
          "conv3d backward: gradient shape mismatch");
  Tensor<T> gx(x.shape);
  std::vector<T> cols(static_cast<std::size_t>(g.k) * g.p);
  std::vector<T> gcols(cols.size());
  const ConstRowMap<T> wm(w.ptr(), g.co, g.k);
  RowMap<T> gwm(gw.ptr(), g.co, g.k);
  const ConstRowMap<T> cm(cols.data(), g.k, g.p);
  RowMap<T> gcm(gcols.data(), g.k, g.p);
  const std::size_t in_stride = static_cast<std::size_t>(g.ci) * g.d * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(g.co) * g.p;
  for (int n = 0; n < g.n; ++n) {
    im2col(x.ptr() + n * in_stride, g, spec, cols.data());
    const ConstRowMap<T> gym(gy.ptr() + n * out_stride, g.co, g.p);
    gwm.noalias() += gym * cm.transpose();
    if (gbias)
      for (int o = 0; o < g.co; ++o) gbias->data[static_cast<std::size_t>(o)] += gym.row(o).sum();
    gcm.noalias() = wm.transpose() * gym;
    col2im(gcols.data(), g, spec, gx.ptr() + n * in_stride);
  }
  return gx;
}

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.data) v = std::max(v, T(0));
  return y;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& gy) {
  require(y.shape == gy.shape, ErrorCode::kInvalidArgument, "relu backward: shape mismatch");
  Tensor<T> gx = gy;
  for (std::size_t i = 0; i < gx.size(); ++i)
    if (y.data[i] <= T(0)) gx.data[i] = T(0);
  return gx;
}

template <class T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias) {
  require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(1), ErrorCode::kInvalidInput,
          "linear: input " + shape_string(x.shape) + " vs weight " + shape_string(w.shape));
  const int n = x.dim(0), in = x.dim(1), out = w.dim(0);
  Tensor<T> y({n, out});
  const ConstRowMap<T> wm(w.ptr(), out, in);
  for (int i = 0; i < n; ++i) {
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xi(x.ptr() + static_cast<std::size_t>(i) * in, in);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> yi(y.ptr() + static_cast<std::size_t>(i) * out, out);
    yi.noalias() = wm * xi;
    if (bias) yi += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias->ptr(), out);
  }
  return y;
}

template <class T>
Tensor<T> linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                          Tensor<T>& gw, Tensor<T>* gbias) {
  const int n = x.dim(0), in = x.dim(1), out = w.dim(0);
  require(gy.shape == std::vector<int>{n, out}, ErrorCode::kInvalidArgument,
          "linear backward: gradient shape mismatch");
  const ConstRowMap<T> xm(x.ptr(), n, in);
  const ConstRowMap<T> wm(w.ptr(), out, in);
  const ConstRowMap<T> gym(gy.ptr(), n, out);
  RowMap<T>(gw.ptr(), out, in).noalias() += gym.transpose() * xm;
  if (gbias)
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gbias->ptr(), out) += gym.colwise().sum();
  Tensor<T> gx(x.shape);
  RowMap<T>(gx.ptr(), n, in).noalias() = gym * wm;
  return gx;
}

template <class T>
Tensor<T> mean_inner(const Tensor<T>& x, std::size_t inner, std::vector<int> out_shape) {
  require(inner > 0 && x.size() % inner == 0, ErrorCode::kInvalidArgument, "mean_inner: bad split");
  Tensor<T> y(std::move(out_shape));
  require(y.size() * inner == x.size(), ErrorCode::kInvalidArgument, "mean_inner: bad output shape");
  for (std::size_t o = 0; o < y.size(); ++o) {
    T acc = T(0);
    for (std::size_t i = 0; i < inner; ++i) acc += x.data[o * inner + i];
    y.data[o] = acc / static_cast<T>(inner);
  }
  return y;
}

template <class T>
Tensor<T> mean_inner_backward(const Tensor<T>& gy, std::size_t inner, std::vector<int> in_shape) {
  Tensor<T> gx(std::move(in_shape));
  require(gx.size() == gy.size() * inner, ErrorCode::kInvalidArgument,
          "mean_inner backward: bad shape");
  for (std::size_t o = 0; o < gy.size(); ++o) {
    const T g = gy.data[o] / static_cast<T>(inner);
    std::fill_n(gx.data.begin() + static_cast<std::ptrdiff_t>(o * inner), inner, g);
  }
  return gx;
}

template <class T>
Tensor<T> swap_axes_12(const Tensor<T>& x) {
  require(x.rank() == 5, ErrorCode::kInvalidArgument, "swap_axes_12 expects a rank-5 tensor");
  const int n = x.dim(0), a = x.dim(1), b = x.dim(2);
  const std::size_t inner = static_cast<std::size_t>(x.dim(3)) * x.dim(4);
  Tensor<T> y({n, b, a, x.dim(3), x.dim(4)});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < a; ++j)
      for (int k = 0; k < b; ++k) {
        const T* src = x.ptr() + ((static_cast<std::size_t>(i) * a + j) * b + k) * inner;
        T* dst = y.ptr() + ((static_cast<std::size_t>(i) * b + k) * a + j) * inner;
        std::copy_n(src, inner, dst);
      }
  return y;
}

template <class T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape == b.shape, ErrorCode::kInvalidArgument,
          "add: shape mismatch " + shape_string(a.shape) + " vs " + shape_string(b.shape));
  for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

#define THBENCH_INSTANTIATE(T)                                                                   \
  template Tensor<T> conv3d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,       \
                                    const Conv3dSpec&);                                          \
  template Tensor<T> conv3d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                     const Conv3dSpec&, Tensor<T>&, Tensor<T>*);                 \
  template Tensor<T> relu_forward(const Tensor<T>&);                                             \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> linear_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);       \
  template Tensor<T> linear_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                     Tensor<T>&, Tensor<T>*);                                    \
  template Tensor<T> mean_inner(const Tensor<T>&, std::size_t, std::vector<int>);                \
  template Tensor<T> mean_inner_backward(const Tensor<T>&, std::size_t, std::vector<int>);       \
  template Tensor<T> swap_axes_12(const Tensor<T>&);                                             \
  template void add_inplace(Tensor<T>&, const Tensor<T>&);

THBENCH_INSTANTIATE(float)
THBENCH_INSTANTIATE(double)

#undef THBENCH_INSTANTIATE

}  // namespace thbench::nn
