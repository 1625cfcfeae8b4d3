#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lmnet/classes.hpp"
#include "lmnet/tensor.hpp"

namespace lmnet {

/// Per-pixel supervision for one frame.
///
/// Pixels without a projected point are invalid and take no part in the
/// loss. Valid pixels split into object pixels (class != background) and
/// background pixels.
struct LossTargets {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> valid;       // H*W
  std::vector<std::uint8_t> classes;     // H*W, ObjectClass values
  Tensor corners;                        // [24, H, W], meaningful on object pixels only
  std::vector<float> instance_size;      // H*W, s(p): point count of the pixel's instance
  std::array<double, kNumClasses> class_mean_size{};  // mean instance point count per class

  std::size_t object_pixels() const;
  std::size_t background_pixels() const;
};

/// Point-wise loss weights, H*W each; invalid pixels carry 0.
struct PixelWeights {
  std::vector<double> objectness;  // w_obj = w_bac * w_cor
  std::vector<double> corners;     // w_cor
};

/// Re-weighting of the multi-task loss. Object pixels get the class-mean to
/// instance size ratio; background pixels get m|O|/|O^c|.
/// Throws DegenerateScene when the frame has no valid background pixel.
PixelWeights pointwise_weights(const LossTargets& targets, double background_balance);

/// 0.5 r^2 for |r| < 1, |r| - 0.5 otherwise.
double smooth_l1(double residual) noexcept;
double smooth_l1_grad(double residual) noexcept;

template <typename T>
struct LossResult {
  double total = 0.0;
  double objectness_term = 0.0;
  double corner_term = 0.0;
  BasicTensor<T> grad_logits;   // w.r.t. the softmax input
  BasicTensor<T> grad_corners;  // zero on background and invalid pixels
};

/// Multi-task loss: weighted softmax cross-entropy over valid pixels plus
/// weighted smooth-L1 over the 24 corner channels on object pixels.
/// `logits` are the objectness logits (softmax is fused into the loss).
template <typename T>
LossResult<T> multitask_loss(const BasicTensor<T>& logits, const BasicTensor<T>& corners, const LossTargets& targets,
                             const PixelWeights& weights);

}  // namespace lmnet
