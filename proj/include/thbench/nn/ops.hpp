#pragma once

// Functional layers. Each forward has a matching backward that takes the
// forward inputs and the output gradient, accumulates parameter gradients into
// the supplied buffers and returns the input gradient. Instantiated for float
// and double.

#include <array>

#include "thbench/nn/tensor.hpp"

namespace thbench::nn {

/// 3D convolution over (N, C, D, H, W) tensors with weights (Co, Ci, kd, kh, kw).
/// A 2D convolution is the kd = 1, D = 1 case; a 1D temporal convolution is
/// kh = kw = 1, H = W = 1.
struct Conv3dSpec {
  int in_channels = 1;
  int out_channels = 1;
  std::array<int, 3> kernel{1, 1, 1};
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> padding{0, 0, 0};

  std::vector<int> weight_shape() const {
    return {out_channels, in_channels, kernel[0], kernel[1], kernel[2]};
  }
  std::array<int, 3> output_extent(const std::array<int, 3>& in) const;
};

template <class T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                         const Conv3dSpec& spec);

template <class T>
Tensor<T> conv3d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                          const Conv3dSpec& spec, Tensor<T>& gw, Tensor<T>* gbias);

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x);

/// Uses the forward output as the mask.
template <class T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& gy);

/// y = x W^T + b with x (N, I), W (O, I), b (O). Rows are computed
/// independently so a sample's output does not depend on its batch.
template <class T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias);

template <class T>
Tensor<T> linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                          Tensor<T>& gw, Tensor<T>* gbias);

/// Mean over the trailing `inner` elements of each row: (outer * inner) -> outer.
template <class T>
Tensor<T> mean_inner(const Tensor<T>& x, std::size_t inner, std::vector<int> out_shape);

template <class T>
Tensor<T> mean_inner_backward(const Tensor<T>& gy, std::size_t inner, std::vector<int> in_shape);

/// (N, A, B, H, W) -> (N, B, A, H, W). Its own inverse up to the swapped extents.
template <class T>
Tensor<T> swap_axes_12(const Tensor<T>& x);

template <class T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b);

}  // namespace thbench::nn
