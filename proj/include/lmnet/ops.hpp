#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lmnet/tensor.hpp"

namespace lmnet {

/// Stride-1 2D convolution geometry.
struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 3;
  int kernel_w = 3;
  int dilation = 1;
  int pad_h = 0;
  int pad_w = 0;

  /// Square kernel with same-padding for the given dilation.
  static ConvSpec same(int in_channels, int out_channels, int kernel, int dilation = 1);

  int extent_h() const noexcept { return kernel_h + (kernel_h - 1) * (dilation - 1); }
  int extent_w() const noexcept { return kernel_w + (kernel_w - 1) * (dilation - 1); }
  int out_height(int in_h) const noexcept { return in_h + 2 * pad_h - extent_h() + 1; }
  int out_width(int in_w) const noexcept { return in_w + 2 * pad_w - extent_w() + 1; }
  Shape weight_shape() const { return {out_channels, in_channels, kernel_h, kernel_w}; }

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

enum class ConvPath {
  Direct,  // loop nest, the reference path
  Im2col,  // column unfolding followed by a matrix multiply
};

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                      const ConvSpec& spec, ConvPath path = ConvPath::Im2col);

template <typename T>
struct ConvGrads {
  BasicTensor<T> grad_input;  // empty when not requested
  BasicTensor<T> grad_weights;
  BasicTensor<T> grad_bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                             const BasicTensor<T>& grad_out, const ConvSpec& spec, bool want_input_grad = true);

/// Argmax bookkeeping of a 2x2 max-pool. Each entry is a flat index into the
/// pooled input tensor ([C, H, W] row-major).
struct PoolIndices {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::uint32_t> argmax;
};

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  PoolIndices indices;
};

/// 2x2 window, stride 2. Ties resolve to the smallest flat index.
template <typename T>
PoolResult<T> maxpool2(const BasicTensor<T>& input);

/// Scatters values to the recorded argmax positions; every other cell is 0.
template <typename T>
BasicTensor<T> maxunpool2(const BasicTensor<T>& input, const PoolIndices& indices, const Shape& out_shape);

/// Gradient of maxpool2 with respect to its input.
template <typename T>
BasicTensor<T> maxpool2_backward(const BasicTensor<T>& grad_out, const PoolIndices& indices);

/// Gradient of maxunpool2 with respect to its input (a gather).
template <typename T>
BasicTensor<T> maxunpool2_backward(const BasicTensor<T>& grad_out, const PoolIndices& indices);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

/// `activation` is relu's output; the derivative is taken as 0 at 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& activation, const BasicTensor<T>& grad_out);

/// Softmax across the channel axis of a [C, H, W] tensor, per pixel.
template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& input);

template <typename T>
struct DropoutResult {
  BasicTensor<T> output;
  BasicTensor<T> mask;  // 1 = kept, 0 = dropped
};

/// Inverted dropout: survivors are scaled by 1/(1-rate) at training time,
/// identity otherwise.
template <typename T>
DropoutResult<T> dropout(const BasicTensor<T>& input, double rate, std::uint64_t seed, bool training);

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& grad_out, const BasicTensor<T>& mask, double rate);

struct FieldExtent {
  int height = 1;
  int width = 1;
  friend bool operator==(const FieldExtent&, const FieldExtent&) = default;
};

/// Receptive field of a stack of stride-1 convolutions:
/// starts at 1 and grows by (k-1)*dilation per layer.
FieldExtent receptive_field(std::span<const ConvSpec> schedule);

/// Global worker cap for the tensor kernels (OpenMP and Eigen).
void set_num_threads(int threads);
int num_threads();

}  // namespace lmnet
