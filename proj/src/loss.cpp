#include "lmnet/loss.hpp"

#include <algorithm>
#include <cmath>

#include "lmnet/network.hpp"

namespace lmnet {

std::size_t LossTargets::object_pixels() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < valid.size(); ++i) n += (valid[i] && classes[i] != 0) ? 1 : 0;
  return n;
}

std::size_t LossTargets::background_pixels() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < valid.size(); ++i) n += (valid[i] && classes[i] == 0) ? 1 : 0;
  return n;
}

namespace {

void check_targets(const LossTargets& t) {
  const std::size_t plane = static_cast<std::size_t>(t.height) * static_cast<std::size_t>(t.width);
  if (t.valid.size() != plane || t.classes.size() != plane || t.instance_size.size() != plane) {
    fail(ErrorKind::InvalidArgument, "loss targets: per-pixel arrays do not match " + std::to_string(t.height) +
                                         "x" + std::to_string(t.width));
  }
  if (t.corners.shape() != Shape{kCornerChannels, t.height, t.width}) {
    fail(ErrorKind::InvalidArgument, "loss targets: corner map shape " + shape_string(t.corners.shape()));
  }
  for (std::size_t i = 0; i < plane; ++i) {
    if (t.classes[i] >= kNumClasses) {
      fail(ErrorKind::InvalidArgument, "loss targets: class id " + std::to_string(t.classes[i]) +
                                           " at pixel " + std::to_string(i) + " outside {0..3}");
    }
  }
}

}  // namespace

PixelWeights pointwise_weights(const LossTargets& targets, double background_balance) {
  check_targets(targets);
  if (!(background_balance > 0.0)) {
    fail(ErrorKind::InvalidArgument, "background balance m must be positive");
  }
  const std::size_t objects = targets.object_pixels();
  const std::size_t background = targets.background_pixels();
  if (background == 0) {
    fail(ErrorKind::DegenerateScene, "frame has no valid background pixel (|O^c| = 0)");
  }
  const double w_bac = background_balance * static_cast<double>(objects) / static_cast<double>(background);
  const std::size_t plane = targets.valid.size();
  PixelWeights w{std::vector<double>(plane, 0.0), std::vector<double>(plane, 0.0)};
  for (std::size_t p = 0; p < plane; ++p) {
    if (!targets.valid[p]) continue;
    if (targets.classes[p] == 0) {
      w.corners[p] = 1.0;
      w.objectness[p] = w_bac;
      continue;
    }
    const double size = targets.instance_size[p];
    if (!(size > 0.0)) {
      fail(ErrorKind::InvalidArgument, "object pixel " + std::to_string(p) + " has non-positive instance size");
    }
    w.corners[p] = targets.class_mean_size[targets.classes[p]] / size;
    w.objectness[p] = w.corners[p];
  }
  return w;
}

double smooth_l1(double r) noexcept {
  const double a = std::abs(r);
  return a < 1.0 ? 0.5 * r * r : a - 0.5;
}

double smooth_l1_grad(double r) noexcept {
  if (r >= 1.0) return 1.0;
  if (r <= -1.0) return -1.0;
  return r;
}

template <typename T>
LossResult<T> multitask_loss(const BasicTensor<T>& logits, const BasicTensor<T>& corners, const LossTargets& targets,
                             const PixelWeights& weights) {
  check_targets(targets);
  const Shape obj_shape{kNumClasses, targets.height, targets.width};
  const Shape cor_shape{kCornerChannels, targets.height, targets.width};
  if (logits.shape() != obj_shape) {
    fail(ErrorKind::InvalidArgument, "loss: objectness shape " + shape_string(logits.shape()) + " expected " +
                                         shape_string(obj_shape));
  }
  if (corners.shape() != cor_shape) {
    fail(ErrorKind::InvalidArgument, "loss: corner shape " + shape_string(corners.shape()) + " expected " +
                                         shape_string(cor_shape));
  }
  const std::size_t plane = targets.valid.size();
  if (weights.objectness.size() != plane || weights.corners.size() != plane) {
    fail(ErrorKind::InvalidArgument, "loss: weight maps do not match the frame");
  }

  LossResult<T> result;
  result.grad_logits = BasicTensor<T>(obj_shape);
  result.grad_corners = BasicTensor<T>(cor_shape);
  for (std::size_t p = 0; p < plane; ++p) {
    if (!targets.valid[p]) continue;
    const int label = targets.classes[p];

    // Fused softmax cross-entropy.
    std::array<double, kNumClasses> z{};
    double peak = -INFINITY;
    for (int c = 0; c < kNumClasses; ++c) {
      z[static_cast<std::size_t>(c)] = static_cast<double>(logits[c * plane + p]);
      peak = std::max(peak, z[static_cast<std::size_t>(c)]);
    }
    double total = 0.0;
    for (double& v : z) {
      v = std::exp(v - peak);
      total += v;
    }
    const double log_total = std::log(total) + peak;
    const double w_obj = weights.objectness[p];
    result.objectness_term += w_obj * (log_total - static_cast<double>(logits[label * plane + p]));
    for (int c = 0; c < kNumClasses; ++c) {
      const double prob = z[static_cast<std::size_t>(c)] / total;
      result.grad_logits[c * plane + p] = static_cast<T>(w_obj * (prob - (c == label ? 1.0 : 0.0)));
    }

    if (label == 0) continue;
    const double w_cor = weights.corners[p];
    for (int k = 0; k < kCornerChannels; ++k) {
      const std::size_t idx = k * plane + p;
      const double r = static_cast<double>(corners[idx]) - static_cast<double>(targets.corners[idx]);
      result.corner_term += w_cor * smooth_l1(r);
      result.grad_corners[idx] = static_cast<T>(w_cor * smooth_l1_grad(r));
    }
  }
  result.total = result.objectness_term + result.corner_term;
  return result;
}

template LossResult<float> multitask_loss(const Tensor&, const Tensor&, const LossTargets&, const PixelWeights&);
template LossResult<double> multitask_loss(const BasicTensor<double>&, const BasicTensor<double>&, const LossTargets&,
                                           const PixelWeights&);

}  // namespace lmnet
