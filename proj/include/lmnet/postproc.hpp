#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lmnet/classes.hpp"
#include "lmnet/dataset.hpp"
#include "lmnet/geom.hpp"
#include "lmnet/tensor.hpp"

namespace lmnet {

/// Decoded box proposal from one object pixel.
struct Candidate {
  Box3D box;
  ObjectClass cls = ObjectClass::Car;
  double confidence = 0.0;  // softmax probability of `cls` at the source pixel
  int score = 0;            // neighbour count, self included; set by score_candidates
  int row = 0;
  int col = 0;
  int width = 0;  // map width, for the flat pixel index

  std::size_t pixel() const { return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col); }
};

struct NmsConfig {
  // Indexed by ObjectClass; the background entry is unused.
  std::array<double, kNumClasses> neighbor_radius{0.0, 1.4, 0.6, 0.6};        // delta_class
  std::array<double, kNumClasses> suppression_threshold{0.0, 0.7, 0.3, 0.3};  // T_class
  int min_score = 5;
  double confidence_threshold = 0.5;
};

void validate(const NmsConfig& config);

/// Corner-distance used by scoring and suppression:
/// |c1_a - c1_b| + |c8_a - c8_b| over the front-top-left and rear-bottom-right corners.
double corner_distance(const Box3D& a, const Box3D& b);

/// One candidate per valid pixel whose argmax class is an object class with
/// probability >= confidence_threshold.
std::vector<Candidate> extract_candidates(const Tensor& objectness, const Tensor& corners, const FrontalViewMap& map,
                                          const NmsConfig& config);

/// Sets every candidate's score to the number of same-class candidates
/// (itself included) within the class neighbour radius (strict).
void score_candidates(std::span<Candidate> candidates, const NmsConfig& config);

/// Drops score < min_score, orders by (score desc, confidence desc, pixel asc)
/// and greedily suppresses same-class candidates closer than T_class.
std::vector<Candidate> nms(std::vector<Candidate> candidates, const NmsConfig& config);

/// Bird's-eye IoU of the two fitted footprints, via convex polygon clipping.
double bev_iou(const Box3D& a, const Box3D& b);

struct Detection {
  Box3D box;
  double confidence = 0.0;
};

struct EvalResult {
  double precision = 0.0;
  double recall = 0.0;
  double ap = 0.0;
  int true_positives = 0;
  int false_positives = 0;
  int ground_truth = 0;
};

/// Greedy confidence-ordered matching at BEV IoU >= threshold, one match per
/// ground truth box, pooled over scenes; AP by 11-point interpolation.
/// `detections[i]` and `ground_truth[i]` belong to scene i.
EvalResult evaluate(std::span<const std::vector<Detection>> detections,
                    std::span<const std::vector<Box3D>> ground_truth, double iou_threshold);

/// Restricts evaluation inputs to one class.
EvalResult evaluate_class(std::span<const std::vector<Detection>> detections,
                          std::span<const std::vector<Box3D>> ground_truth, ObjectClass cls, double iou_threshold);

/// KITTI result lines (16 fields, score = confidence).
std::string format_kitti_results(std::span<const Candidate> detections, const Calibration& calib);
/// One JSON object per line with class, confidence, score, pixel and the 8 corners.
std::string format_json_lines(std::span<const Candidate> detections);

}  // namespace lmnet
