#include "lmnet/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "lmnet/network.hpp"

namespace lmnet {

void validate(const NmsConfig& c) {
  for (ObjectClass cls : kObjectClasses) {
    const auto i = static_cast<std::size_t>(cls);
    if (!(c.neighbor_radius[i] > 0.0) || !(c.suppression_threshold[i] > 0.0)) {
      fail(ErrorKind::InvalidArgument, "NMS radii and thresholds must be positive");
    }
  }
  if (c.min_score < 1) fail(ErrorKind::InvalidArgument, "NMS min_score must be >= 1");
  if (c.confidence_threshold < 0.0 || c.confidence_threshold > 1.0) {
    fail(ErrorKind::InvalidArgument, "confidence threshold must lie in [0, 1]");
  }
}

double corner_distance(const Box3D& a, const Box3D& b) {
  return (a.corners[kFrontTopLeft] - b.corners[kFrontTopLeft]).norm() +
         (a.corners[kRearBottomRight] - b.corners[kRearBottomRight]).norm();
}

std::vector<Candidate> extract_candidates(const Tensor& objectness, const Tensor& corners, const FrontalViewMap& map,
                                          const NmsConfig& config) {
  const int h = map.height();
  const int w = map.width();
  if (objectness.shape() != Shape{kNumClasses, h, w} || corners.shape() != Shape{kCornerChannels, h, w}) {
    fail(ErrorKind::InvalidArgument, "extract_candidates: output maps " + shape_string(objectness.shape()) + " / " +
                                         shape_string(corners.shape()) + " do not match the " + std::to_string(h) +
                                         "x" + std::to_string(w) + " input map");
  }
  const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  std::vector<Candidate> out;
  for (std::size_t pixel = 0; pixel < plane; ++pixel) {
    if (!map.valid[pixel]) continue;
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c) {
      if (objectness[c * plane + pixel] > objectness[static_cast<std::size_t>(best) * plane + pixel]) best = c;
    }
    const double prob = objectness[static_cast<std::size_t>(best) * plane + pixel];
    if (best == 0 || prob < config.confidence_threshold) continue;
    BoxEncoding enc{};
    for (int k = 0; k < kCornerChannels; ++k) enc[static_cast<std::size_t>(k)] = corners[k * plane + pixel];
    Candidate cand;
    cand.cls = static_cast<ObjectClass>(best);
    cand.box = decode_box(map.cell_point(pixel), enc, cand.cls);
    cand.confidence = prob;
    cand.row = static_cast<int>(pixel / static_cast<std::size_t>(w));
    cand.col = static_cast<int>(pixel % static_cast<std::size_t>(w));
    cand.width = w;
    out.push_back(cand);
  }
  return out;
}

void score_candidates(std::span<Candidate> candidates, const NmsConfig& config) {
  const std::size_t n = candidates.size();
  std::vector<int> scores(n, 0);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::size_t i = 0; i < n; ++i) {
    const double radius = config.neighbor_radius[static_cast<std::size_t>(candidates[i].cls)];
    int count = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (candidates[j].cls == candidates[i].cls && corner_distance(candidates[i].box, candidates[j].box) < radius) {
        ++count;
      }
    }
    scores[i] = count;
  }
  for (std::size_t i = 0; i < n; ++i) candidates[i].score = scores[i];
}

std::vector<Candidate> nms(std::vector<Candidate> candidates, const NmsConfig& config) {
  std::erase_if(candidates, [&](const Candidate& c) { return c.score < config.min_score; });
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.pixel() != b.pixel()) return a.pixel() < b.pixel();
    return a.cls < b.cls;
  });
  std::vector<Candidate> kept;
  std::vector<bool> removed(candidates.size(), false);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (removed[i]) continue;
    kept.push_back(candidates[i]);
    const double threshold = config.suppression_threshold[static_cast<std::size_t>(candidates[i].cls)];
    for (std::size_t j = i + 1; j < candidates.size(); ++j) {
      if (!removed[j] && candidates[j].cls == candidates[i].cls &&
          corner_distance(candidates[i].box, candidates[j].box) < threshold) {
        removed[j] = true;
      }
    }
  }
  return kept;
}

// ---- BEV IoU ---------------------------------------------------------------

namespace {

using Vec2 = Eigen::Vector2d;

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double polygon_area(const std::vector<Vec2>& poly) {
  double area = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) area += cross(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * area;
}

// Sutherland-Hodgman clip of `subject` against a convex counter-clockwise `clip`.
std::vector<Vec2> clip_convex(std::vector<Vec2> subject, const std::array<Vec2, 4>& clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % clip.size()];
    const Vec2 edge = b - a;
    auto side = [&](const Vec2& p) { return cross(edge, p - a); };
    std::vector<Vec2> next;
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Vec2& p = subject[i];
      const Vec2& q = subject[(i + 1) % subject.size()];
      const double sp = side(p);
      const double sq = side(q);
      if (sp >= 0) next.push_back(p);
      if ((sp >= 0) != (sq >= 0)) next.push_back(p + (q - p) * (sp / (sp - sq)));
    }
    subject = std::move(next);
  }
  return subject;
}

}  // namespace

double bev_iou(const Box3D& a, const Box3D& b) {
  const auto pa = bev_footprint(a);
  const auto pb = bev_footprint(b);
  const double area_a = std::abs(polygon_area({pa.begin(), pa.end()}));
  const double area_b = std::abs(polygon_area({pb.begin(), pb.end()}));
  if (area_a <= 1e-12 || area_b <= 1e-12) return 0.0;
  const auto inter_poly = clip_convex({pa.begin(), pa.end()}, pb);
  const double inter = inter_poly.size() >= 3 ? std::abs(polygon_area(inter_poly)) : 0.0;
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// ---- evaluation ------------------------------------------------------------

EvalResult evaluate(std::span<const std::vector<Detection>> detections,
                    std::span<const std::vector<Box3D>> ground_truth, double iou_threshold) {
  if (detections.size() != ground_truth.size()) {
    fail(ErrorKind::InvalidArgument, "evaluate: detection and ground-truth scene counts differ");
  }
  struct Entry {
    double confidence;
    std::size_t scene;
    std::size_t index;
  };
  std::vector<Entry> order;
  EvalResult result;
  for (std::size_t s = 0; s < detections.size(); ++s) {
    result.ground_truth += static_cast<int>(ground_truth[s].size());
    for (std::size_t i = 0; i < detections[s].size(); ++i) order.push_back({detections[s][i].confidence, s, i});
  }
  std::sort(order.begin(), order.end(), [](const Entry& a, const Entry& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.scene != b.scene) return a.scene < b.scene;
    return a.index < b.index;
  });

  std::vector<std::vector<bool>> matched;
  for (const auto& gt : ground_truth) matched.emplace_back(gt.size(), false);
  std::vector<double> precision_at;
  std::vector<double> recall_at;
  for (const Entry& e : order) {
    const Box3D& det = detections[e.scene][e.index].box;
    double best = iou_threshold;
    std::ptrdiff_t best_gt = -1;
    for (std::size_t g = 0; g < ground_truth[e.scene].size(); ++g) {
      if (matched[e.scene][g]) continue;
      const double iou = bev_iou(det, ground_truth[e.scene][g]);
      if (iou >= best) {
        best = iou;
        best_gt = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (best_gt >= 0) {
      matched[e.scene][static_cast<std::size_t>(best_gt)] = true;
      ++result.true_positives;
    } else {
      ++result.false_positives;
    }
    precision_at.push_back(static_cast<double>(result.true_positives) /
                           (result.true_positives + result.false_positives));
    recall_at.push_back(result.ground_truth ? static_cast<double>(result.true_positives) / result.ground_truth : 0.0);
  }
  const int predicted = result.true_positives + result.false_positives;
  result.precision = predicted ? static_cast<double>(result.true_positives) / predicted : 0.0;
  result.recall = result.ground_truth ? static_cast<double>(result.true_positives) / result.ground_truth : 0.0;
  if (result.ground_truth > 0) {
    double ap = 0.0;
    for (int k = 0; k <= 10; ++k) {
      const double r = k / 10.0;
      double best = 0.0;
      for (std::size_t i = 0; i < recall_at.size(); ++i) {
        if (recall_at[i] >= r - 1e-12) best = std::max(best, precision_at[i]);
      }
      ap += best / 11.0;
    }
    result.ap = ap;
  }
  return result;
}

EvalResult evaluate_class(std::span<const std::vector<Detection>> detections,
                          std::span<const std::vector<Box3D>> ground_truth, ObjectClass cls, double iou_threshold) {
  std::vector<std::vector<Detection>> dets(detections.size());
  std::vector<std::vector<Box3D>> gts(ground_truth.size());
  for (std::size_t s = 0; s < detections.size(); ++s) {
    for (const Detection& d : detections[s])
      if (d.box.cls == cls) dets[s].push_back(d);
  }
  for (std::size_t s = 0; s < ground_truth.size(); ++s) {
    for (const Box3D& b : ground_truth[s])
      if (b.cls == cls) gts[s].push_back(b);
  }
  return evaluate(dets, gts, iou_threshold);
}

std::string format_kitti_results(std::span<const Candidate> detections, const Calibration& calib) {
  std::string text;
  for (const Candidate& c : detections) {
    Box3D box = c.box;
    box.cls = c.cls;
    text += format_kitti_object(kitti_from_box(box, calib, c.confidence)) + "\n";
  }
  return text;
}

std::string format_json_lines(std::span<const Candidate> detections) {
  std::string text;
  for (const Candidate& c : detections) {
    nlohmann::json corners = nlohmann::json::array();
    for (const Vec3& v : c.box.corners) corners.push_back({v.x(), v.y(), v.z()});
    const nlohmann::json line{{"class", class_name(c.cls)}, {"confidence", c.confidence}, {"score", c.score},
                              {"row", c.row},               {"col", c.col},               {"corners", corners}};
    text += line.dump() + "\n";
  }
  return text;
}

}  // namespace lmnet
