#include "lmnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lmnet {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;

template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

void require_map(const Shape& shape, const char* what) {
  if (shape.size() != 3) {
    fail(ErrorKind::InvalidArgument, std::string(what) + " must be rank 3 [C, H, W], got " + shape_string(shape));
  }
}

template <typename T>
void check_conv_args(const BasicTensor<T>& input, const BasicTensor<T>& weights, const ConvSpec& spec) {
  require_map(input.shape(), "conv2d input");
  if (spec.dilation < 1 || spec.kernel_h < 1 || spec.kernel_w < 1 || spec.pad_h < 0 || spec.pad_w < 0) {
    fail(ErrorKind::InvalidArgument, "conv2d: invalid kernel/dilation/padding in ConvSpec");
  }
  if (input.dim(0) != spec.in_channels) {
    fail(ErrorKind::InvalidArgument, "conv2d: input channel dimension is " + std::to_string(input.dim(0)) +
                                         ", spec expects in_channels = " + std::to_string(spec.in_channels));
  }
  if (weights.shape() != spec.weight_shape()) {
    fail(ErrorKind::InvalidArgument, "conv2d: weights shape " + shape_string(weights.shape()) +
                                         " does not match [out, in, kh, kw] = " + shape_string(spec.weight_shape()));
  }
  if (spec.out_height(input.dim(1)) < 1 || spec.out_width(input.dim(2)) < 1) {
    fail(ErrorKind::InvalidArgument, "conv2d: input height/width " + std::to_string(input.dim(1)) + "x" +
                                         std::to_string(input.dim(2)) + " smaller than dilated kernel extent");
  }
}

// Range [lo, hi) of output columns whose input column ow - pad + offset lies inside [0, width).
inline void valid_range(int out_len, int in_len, int shift, int& lo, int& hi) {
  lo = std::min(out_len, std::max(0, -shift));
  hi = std::min(out_len, in_len - shift);
  if (hi < lo) hi = lo;
}

// Output rows per im2col tile, sized so a tile's column matrix stays cache resident.
int tile_rows(int patch_len, int out_w) {
  constexpr long kTileFloats = 1L << 18;
  return static_cast<int>(std::max(1L, kTileFloats / (static_cast<long>(patch_len) * out_w)));
}

// Column matrix for output rows [oh0, oh1): row = (channel, tap), column = output pixel.
template <typename T>
void im2col(const BasicTensor<T>& input, const ConvSpec& spec, int oh0, int oh1, int out_w, RowMatrix<T>& col) {
  const int channels = input.dim(0);
  const int in_h = input.dim(1);
  const int in_w = input.dim(2);
  const int taps = spec.kernel_h * spec.kernel_w;
  col.resize(static_cast<Eigen::Index>(channels) * taps, static_cast<Eigen::Index>(oh1 - oh0) * out_w);
  for (int row = 0; row < channels * taps; ++row) {
    const int c = row / taps;
    const int ki = (row % taps) / spec.kernel_w;
    const int kj = row % spec.kernel_w;
    const int shift_h = ki * spec.dilation - spec.pad_h;
    const int shift_w = kj * spec.dilation - spec.pad_w;
    int w_lo = 0, w_hi = 0;
    valid_range(out_w, in_w, shift_w, w_lo, w_hi);
    T* dst = col.data() + static_cast<std::size_t>(row) * col.cols();
    const T* src = input.ptr() + static_cast<std::size_t>(c) * in_h * in_w;
    for (int oh = oh0; oh < oh1; ++oh) {
      T* line = dst + static_cast<std::size_t>(oh - oh0) * out_w;
      const int ih = oh + shift_h;
      if (ih < 0 || ih >= in_h) {
        std::fill(line, line + out_w, T{0});
        continue;
      }
      std::fill(line, line + w_lo, T{0});
      const T* in_line = src + static_cast<std::size_t>(ih) * in_w + shift_w;
      std::copy(in_line + w_lo, in_line + w_hi, line + w_lo);
      std::fill(line + w_hi, line + out_w, T{0});
    }
  }
}

// Adjoint of im2col for output rows [oh0, oh1): accumulates onto the input grid.
template <typename T>
void col2im(const RowMatrix<T>& col, const ConvSpec& spec, int oh0, int oh1, int out_w, BasicTensor<T>& grad_input) {
  const int channels = grad_input.dim(0);
  const int in_h = grad_input.dim(1);
  const int in_w = grad_input.dim(2);
  const int taps = spec.kernel_h * spec.kernel_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    T* dst = grad_input.ptr() + static_cast<std::size_t>(c) * in_h * in_w;
    for (int t = 0; t < taps; ++t) {
      const int ki = t / spec.kernel_w;
      const int kj = t % spec.kernel_w;
      const int shift_h = ki * spec.dilation - spec.pad_h;
      const int shift_w = kj * spec.dilation - spec.pad_w;
      int w_lo = 0, w_hi = 0;
      valid_range(out_w, in_w, shift_w, w_lo, w_hi);
      const T* src = col.data() + static_cast<std::size_t>(c * taps + t) * col.cols();
      for (int oh = oh0; oh < oh1; ++oh) {
        const int ih = oh + shift_h;
        if (ih < 0 || ih >= in_h) continue;
        const T* line = src + static_cast<std::size_t>(oh - oh0) * out_w;
        T* in_line = dst + static_cast<std::size_t>(ih) * in_w + shift_w;
        for (int ow = w_lo; ow < w_hi; ++ow) in_line[ow] += line[ow];
      }
    }
  }
}

template <typename T>
void conv_direct(const BasicTensor<T>& input, const BasicTensor<T>& weights, const ConvSpec& spec,
                 BasicTensor<T>& out) {
  const int in_h = input.dim(1);
  const int in_w = input.dim(2);
  const int out_h = out.dim(1);
  const int out_w = out.dim(2);
#pragma omp parallel for schedule(static)
  for (int co = 0; co < spec.out_channels; ++co) {
    T* dst = out.ptr() + static_cast<std::size_t>(co) * out_h * out_w;
    for (int ci = 0; ci < spec.in_channels; ++ci) {
      const T* src = input.ptr() + static_cast<std::size_t>(ci) * in_h * in_w;
      for (int ki = 0; ki < spec.kernel_h; ++ki) {
        const int shift_h = ki * spec.dilation - spec.pad_h;
        for (int kj = 0; kj < spec.kernel_w; ++kj) {
          const int shift_w = kj * spec.dilation - spec.pad_w;
          const T w = weights.at(co, ci, ki, kj);
          int w_lo = 0, w_hi = 0;
          valid_range(out_w, in_w, shift_w, w_lo, w_hi);
          for (int oh = 0; oh < out_h; ++oh) {
            const int ih = oh + shift_h;
            if (ih < 0 || ih >= in_h) continue;
            const T* in_line = src + static_cast<std::size_t>(ih) * in_w + shift_w;
            T* out_line = dst + static_cast<std::size_t>(oh) * out_w;
            for (int ow = w_lo; ow < w_hi; ++ow) out_line[ow] += w * in_line[ow];
          }
        }
      }
    }
  }
}

}  // namespace

ConvSpec ConvSpec::same(int in_channels, int out_channels, int kernel, int dilation) {
  ConvSpec spec;
  spec.in_channels = in_channels;
  spec.out_channels = out_channels;
  spec.kernel_h = kernel;
  spec.kernel_w = kernel;
  spec.dilation = dilation;
  spec.pad_h = spec.extent_h() / 2;
  spec.pad_w = spec.extent_w() / 2;
  return spec;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                      const ConvSpec& spec, ConvPath path) {
  check_conv_args(input, weights, spec);
  if (bias.shape() != Shape{spec.out_channels}) {
    fail(ErrorKind::InvalidArgument, "conv2d: bias shape " + shape_string(bias.shape()) + " expected [" +
                                         std::to_string(spec.out_channels) + "]");
  }
  const int out_h = spec.out_height(input.dim(1));
  const int out_w = spec.out_width(input.dim(2));
  BasicTensor<T> out({spec.out_channels, out_h, out_w});
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;

  if (path == ConvPath::Direct) {
    for (int co = 0; co < spec.out_channels; ++co) {
      std::fill_n(out.ptr() + co * plane, plane, bias[static_cast<std::size_t>(co)]);
    }
    conv_direct(input, weights, spec, out);
    return out;
  }

  const Eigen::Index patch = static_cast<Eigen::Index>(spec.in_channels) * spec.kernel_h * spec.kernel_w;
  ConstMatrixMap<T> w(weights.ptr(), spec.out_channels, patch);
  MatrixMap<T> result(out.ptr(), spec.out_channels, static_cast<Eigen::Index>(plane));
  const int rows = tile_rows(static_cast<int>(patch), out_w);
  const int tiles = (out_h + rows - 1) / rows;
#pragma omp parallel
  {
    RowMatrix<T> col;
#pragma omp for schedule(static)
    for (int tile = 0; tile < tiles; ++tile) {
      const int oh0 = tile * rows;
      const int oh1 = std::min(out_h, oh0 + rows);
      im2col(input, spec, oh0, oh1, out_w, col);
      auto block = result.middleCols(static_cast<Eigen::Index>(oh0) * out_w, col.cols());
      block.noalias() = w * col;
      for (int co = 0; co < spec.out_channels; ++co) {
        block.row(co).array() += bias[static_cast<std::size_t>(co)];
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                             const BasicTensor<T>& grad_out, const ConvSpec& spec, bool want_input_grad) {
  check_conv_args(input, weights, spec);
  const int out_h = spec.out_height(input.dim(1));
  const int out_w = spec.out_width(input.dim(2));
  const Shape expected{spec.out_channels, out_h, out_w};
  if (grad_out.shape() != expected) {
    fail(ErrorKind::InvalidArgument, "conv2d_backward: grad_out shape " + shape_string(grad_out.shape()) +
                                         " differs from forward output " + shape_string(expected));
  }
  const Eigen::Index plane = static_cast<Eigen::Index>(out_h) * out_w;
  const Eigen::Index patch = static_cast<Eigen::Index>(spec.in_channels) * spec.kernel_h * spec.kernel_w;
  ConstMatrixMap<T> g(grad_out.ptr(), spec.out_channels, plane);
  ConstMatrixMap<T> w(weights.ptr(), spec.out_channels, patch);

  ConvGrads<T> grads;
  grads.grad_weights = BasicTensor<T>(spec.weight_shape());
  MatrixMap<T> gw(grads.grad_weights.ptr(), spec.out_channels, patch);
  grads.grad_bias = BasicTensor<T>({spec.out_channels});
  for (int co = 0; co < spec.out_channels; ++co) {
    grads.grad_bias[static_cast<std::size_t>(co)] = g.row(co).sum();
  }
  if (want_input_grad) grads.grad_input = BasicTensor<T>(input.shape());

  // Tiles run in order so every accumulation has a fixed summation order.
  const int rows = tile_rows(static_cast<int>(patch), out_w);
  RowMatrix<T> col;
  RowMatrix<T> grad_col;
  for (int oh0 = 0; oh0 < out_h; oh0 += rows) {
    const int oh1 = std::min(out_h, oh0 + rows);
    im2col(input, spec, oh0, oh1, out_w, col);
    const auto g_tile = g.middleCols(static_cast<Eigen::Index>(oh0) * out_w, col.cols());
    gw.noalias() += g_tile * col.transpose();
    if (want_input_grad) {
      grad_col.noalias() = w.transpose() * g_tile;
      col2im(grad_col, spec, oh0, oh1, out_w, grads.grad_input);
    }
  }
  return grads;
}

template <typename T>
PoolResult<T> maxpool2(const BasicTensor<T>& input) {
  require_map(input.shape(), "maxpool2 input");
  const int channels = input.dim(0);
  const int in_h = input.dim(1);
  const int in_w = input.dim(2);
  if (in_h % 2 != 0 || in_w % 2 != 0) {
    fail(ErrorKind::InvalidArgument,
         "maxpool2: spatial size " + std::to_string(in_h) + "x" + std::to_string(in_w) + " must be even");
  }
  const int out_h = in_h / 2;
  const int out_w = in_w / 2;
  PoolResult<T> result;
  result.output = BasicTensor<T>({channels, out_h, out_w});
  result.indices.input_shape = input.shape();
  result.indices.output_shape = result.output.shape();
  result.indices.argmax.resize(result.output.size());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    for (int oh = 0; oh < out_h; ++oh) {
      for (int ow = 0; ow < out_w; ++ow) {
        // Row-major window scan with strict '>' keeps the smallest flat index on ties.
        std::size_t best = (static_cast<std::size_t>(c) * in_h + 2 * oh) * in_w + 2 * ow;
        T best_value = input[best];
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (static_cast<std::size_t>(c) * in_h + 2 * oh + dy) * in_w + 2 * ow + dx;
            if (input[idx] > best_value) {
              best_value = input[idx];
              best = idx;
            }
          }
        }
        const std::size_t out_idx = (static_cast<std::size_t>(c) * out_h + oh) * out_w + ow;
        result.output[out_idx] = best_value;
        result.indices.argmax[out_idx] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return result;
}

namespace {

void check_indices(const PoolIndices& indices, const Shape& pooled_shape, const Shape& full_shape) {
  if (pooled_shape != indices.output_shape || indices.argmax.size() != shape_volume(pooled_shape)) {
    fail(ErrorKind::InvalidArgument, "pool indices recorded for " + shape_string(indices.output_shape) +
                                         " but tensor has shape " + shape_string(pooled_shape));
  }
  if (full_shape.size() != 3 || pooled_shape.size() != 3 || full_shape[0] != pooled_shape[0] ||
      full_shape[1] != 2 * pooled_shape[1] || full_shape[2] != 2 * pooled_shape[2]) {
    fail(ErrorKind::InvalidArgument, "unpool output shape " + shape_string(full_shape) +
                                         " is not twice the spatial size of " + shape_string(pooled_shape));
  }
  const std::size_t limit = shape_volume(full_shape);
  const int out_w = pooled_shape[2];
  const int out_h = pooled_shape[1];
  const int in_w = full_shape[2];
  for (std::size_t i = 0; i < indices.argmax.size(); ++i) {
    const std::size_t idx = indices.argmax[i];
    if (idx >= limit) {
      fail(ErrorKind::Corruption, "pool index " + std::to_string(idx) + " outside unpool output " +
                                      shape_string(full_shape));
    }
    // The index must fall inside the 2x2 window that produced entry i.
    const std::size_t c = i / (static_cast<std::size_t>(out_h) * out_w);
    const int oh = static_cast<int>((i / out_w) % out_h);
    const int ow = static_cast<int>(i % out_w);
    const std::size_t plane_off = idx - c * static_cast<std::size_t>(full_shape[1]) * in_w;
    const int ih = static_cast<int>(plane_off / in_w);
    const int iw = static_cast<int>(plane_off % in_w);
    if (idx < c * static_cast<std::size_t>(full_shape[1]) * in_w || ih / 2 != oh || iw / 2 != ow) {
      fail(ErrorKind::Corruption, "pool index " + std::to_string(idx) + " lies outside its 2x2 window");
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> maxunpool2(const BasicTensor<T>& input, const PoolIndices& indices, const Shape& out_shape) {
  check_indices(indices, input.shape(), out_shape);
  BasicTensor<T> out(out_shape);
  for (std::size_t i = 0; i < input.size(); ++i) out[indices.argmax[i]] = input[i];
  return out;
}

template <typename T>
BasicTensor<T> maxpool2_backward(const BasicTensor<T>& grad_out, const PoolIndices& indices) {
  return maxunpool2(grad_out, indices, indices.input_shape);
}

template <typename T>
BasicTensor<T> maxunpool2_backward(const BasicTensor<T>& grad_out, const PoolIndices& indices) {
  check_indices(indices, indices.output_shape, grad_out.shape());
  BasicTensor<T> grad(indices.output_shape);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = grad_out[indices.argmax[i]];
  return grad;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  for (T& v : out.values()) v = v > T{0} ? v : T{0};
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& activation, const BasicTensor<T>& grad_out) {
  if (activation.shape() != grad_out.shape()) {
    fail(ErrorKind::InvalidArgument, "relu_backward: shape " + shape_string(grad_out.shape()) + " vs " +
                                         shape_string(activation.shape()));
  }
  BasicTensor<T> grad = grad_out;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(activation[i] > T{0})) grad[i] = T{0};
  }
  return grad;
}

template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& input) {
  require_map(input.shape(), "softmax_channels input");
  const int channels = input.dim(0);
  const std::size_t plane = static_cast<std::size_t>(input.dim(1)) * input.dim(2);
  BasicTensor<T> out(input.shape());
  for (std::size_t p = 0; p < plane; ++p) {
    T peak = -std::numeric_limits<T>::infinity();
    for (int c = 0; c < channels; ++c) peak = std::max(peak, input[c * plane + p]);
    T total = 0;
    for (int c = 0; c < channels; ++c) {
      const T e = std::exp(input[c * plane + p] - peak);
      out[c * plane + p] = e;
      total += e;
    }
    for (int c = 0; c < channels; ++c) out[c * plane + p] /= total;
  }
  return out;
}

template <typename T>
DropoutResult<T> dropout(const BasicTensor<T>& input, double rate, std::uint64_t seed, bool training) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    fail(ErrorKind::InvalidArgument, "dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  DropoutResult<T> result{input, BasicTensor<T>(input.shape(), T{1})};
  if (!training || rate == 0.0) return result;
  std::mt19937_64 rng(seed);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < input.size(); ++i) {
    // 53 random bits mapped to [0, 1); independent of the standard library's distributions.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (u < rate) {
      result.mask[i] = T{0};
      result.output[i] = T{0};
    } else {
      result.output[i] = input[i] * scale;
    }
  }
  return result;
}

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& grad_out, const BasicTensor<T>& mask, double rate) {
  if (grad_out.shape() != mask.shape()) {
    fail(ErrorKind::InvalidArgument, "dropout_backward: mask shape mismatch");
  }
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  BasicTensor<T> grad(grad_out.shape());
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = mask[i] == T{0} ? T{0} : grad_out[i] * scale;
  return grad;
}

FieldExtent receptive_field(std::span<const ConvSpec> schedule) {
  FieldExtent extent;
  for (const ConvSpec& spec : schedule) {
    extent.height += (spec.kernel_h - 1) * spec.dilation;
    extent.width += (spec.kernel_w - 1) * spec.dilation;
  }
  return extent;
}

void set_num_threads(int threads) {
  const int n = std::max(1, threads);
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
  Eigen::setNbThreads(n);
}

int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

#define LMNET_INSTANTIATE_OPS(T)                                                                                \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,         \
                                 const ConvSpec&, ConvPath);                                                   \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,  \
                                        const ConvSpec&, bool);                                                \
  template PoolResult<T> maxpool2(const BasicTensor<T>&);                                                      \
  template BasicTensor<T> maxunpool2(const BasicTensor<T>&, const PoolIndices&, const Shape&);                \
  template BasicTensor<T> maxpool2_backward(const BasicTensor<T>&, const PoolIndices&);                       \
  template BasicTensor<T> maxunpool2_backward(const BasicTensor<T>&, const PoolIndices&);                     \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                         \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                        \
  template BasicTensor<T> softmax_channels(const BasicTensor<T>&);                                             \
  template DropoutResult<T> dropout(const BasicTensor<T>&, double, std::uint64_t, bool);                      \
  template BasicTensor<T> dropout_backward(const BasicTensor<T>&, const BasicTensor<T>&, double);

LMNET_INSTANTIATE_OPS(float)
LMNET_INSTANTIATE_OPS(double)

#undef LMNET_INSTANTIATE_OPS

}  // namespace lmnet
