#include <cmath>
#include <limits>
#include <random>

#include "lmnet/dataset.hpp"
#include "lmnet/network.hpp"

namespace lmnet {

void validate_scene(const Scene& scene, double tolerance) {
  if (scene.point_instance.size() != scene.points.size()) {
    fail(ErrorKind::InvalidArgument, "scene: point_instance length differs from point count");
  }
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    const std::int32_t id = scene.point_instance[i];
    if (id == kBackgroundInstance) continue;
    if (id < 0 || static_cast<std::size_t>(id) >= scene.instances.size()) {
      fail(ErrorKind::InvalidArgument, "scene: point " + std::to_string(i) + " references missing instance " +
                                           std::to_string(id));
    }
    if (!box_contains(scene.instances[static_cast<std::size_t>(id)], scene.points[i].position(), tolerance)) {
      fail(ErrorKind::InvalidArgument, "scene: point " + std::to_string(i) + " lies outside instance " +
                                           std::to_string(id));
    }
  }
}

std::vector<std::int32_t> assign_points_to_instances(std::span<const Point3> points, std::span<const Box3D> boxes,
                                                     double tolerance) {
  std::vector<Vec3> centers;
  for (const Box3D& b : boxes) centers.push_back(fit_cuboid(b).center);
  std::vector<std::int32_t> labels(points.size(), kBackgroundInstance);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 p = points[i].position();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      if (!box_contains(boxes[b], p, tolerance)) continue;
      const double d = (centers[b] - p).squaredNorm();
      if (d < best) {
        best = d;
        labels[i] = static_cast<std::int32_t>(b);
      }
    }
  }
  return labels;
}

std::vector<Point3> crop_range(std::span<const Point3> points, const CropBounds& b) {
  std::vector<Point3> kept;
  kept.reserve(points.size());
  for (const Point3& p : points) {
    if (p.x >= b.x_min && p.x <= b.x_max && p.y >= b.y_min && p.y <= b.y_max && p.z >= b.z_min && p.z <= b.z_max) {
      kept.push_back(p);
    }
  }
  return kept;
}

Scene crop_scene(const Scene& scene, const CropBounds& b) {
  Scene out;
  out.instances = scene.instances;
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    const Point3& p = scene.points[i];
    if (p.x >= b.x_min && p.x <= b.x_max && p.y >= b.y_min && p.y <= b.y_max && p.z >= b.z_min && p.z <= b.z_max) {
      out.points.push_back(p);
      out.point_instance.push_back(scene.point_instance[i]);
    }
  }
  return out;
}

TargetMaps rasterize_targets(const Scene& scene, const FrontalViewMap& map) {
  if (scene.point_instance.size() != scene.points.size()) {
    fail(ErrorKind::InvalidArgument, "scene: point_instance length differs from point count");
  }
  TargetMaps t;
  t.height = map.height();
  t.width = map.width();
  const std::size_t plane = static_cast<std::size_t>(t.height) * static_cast<std::size_t>(t.width);
  t.valid = map.valid;
  t.objectness.assign(plane, 0);
  t.corners = Tensor({kCornerChannels, t.height, t.width});
  t.instance_size.assign(plane, 0.0f);
  t.pixel_instance.assign(plane, kBackgroundInstance);
  t.instance_pixels.assign(scene.instances.size(), 0);
  for (const Box3D& b : scene.instances) t.instance_class.push_back(b.cls);

  for (std::size_t pixel = 0; pixel < plane; ++pixel) {
    if (!map.valid[pixel]) continue;
    const auto source = static_cast<std::size_t>(map.source[pixel]);
    const std::int32_t id = scene.point_instance.at(source);
    if (id == kBackgroundInstance) {
      ++t.background_pixels;
      continue;
    }
    const Box3D& box = scene.instances.at(static_cast<std::size_t>(id));
    t.pixel_instance[pixel] = id;
    t.objectness[pixel] = static_cast<std::uint8_t>(box.cls);
    const BoxEncoding enc = encode_box(scene.points[source].position(), box);
    for (int k = 0; k < kCornerChannels; ++k) t.corners[k * plane + pixel] = static_cast<float>(enc[static_cast<std::size_t>(k)]);
    ++t.instance_pixels[static_cast<std::size_t>(id)];
    ++t.object_pixels;
  }
  for (std::size_t pixel = 0; pixel < plane; ++pixel) {
    const std::int32_t id = t.pixel_instance[pixel];
    if (id != kBackgroundInstance) t.instance_size[pixel] = static_cast<float>(t.instance_pixels[static_cast<std::size_t>(id)]);
  }
  for (std::size_t i = 0; i < t.instance_pixels.size(); ++i) {
    if (t.instance_pixels[i] == 0) {
      t.warnings.push_back("instance " + std::to_string(i) + " (" + std::string(class_name(t.instance_class[i])) +
                           ") has no projected points; excluded from class size statistics");
    }
  }
  return t;
}

TargetMaps rasterize_targets(const Scene& scene, const ProjectionConfig& cfg) {
  return rasterize_targets(scene, encode_frontal_view(scene.points, cfg));
}

std::array<double, kNumClasses> class_mean_sizes(std::span<const TargetMaps> maps) {
  std::array<double, kNumClasses> sum{};
  std::array<int, kNumClasses> count{};
  for (const TargetMaps& m : maps) {
    for (std::size_t i = 0; i < m.instance_pixels.size(); ++i) {
      if (m.instance_pixels[i] == 0) continue;
      const int c = class_index(m.instance_class[i]);
      sum[static_cast<std::size_t>(c)] += m.instance_pixels[i];
      ++count[static_cast<std::size_t>(c)];
    }
  }
  std::array<double, kNumClasses> mean{};
  for (std::size_t c = 0; c < mean.size(); ++c) mean[c] = count[c] ? sum[c] / count[c] : 1.0;
  return mean;
}

LossTargets to_loss_targets(const TargetMaps& maps, const std::array<double, kNumClasses>& class_means) {
  LossTargets t;
  t.height = maps.height;
  t.width = maps.width;
  t.valid = maps.valid;
  t.classes = maps.objectness;
  t.corners = maps.corners;
  t.instance_size = maps.instance_size;
  t.class_mean_size = class_means;
  return t;
}

Scene augment_rotate_z(const Scene& scene, double angle) {
  if (std::abs(angle) > M_PI) fail(ErrorKind::InvalidArgument, "rotation angle must satisfy |angle| <= pi");
  Scene out = scene;
  const double c = std::cos(angle), s = std::sin(angle);
  for (Point3& p : out.points) {
    const double x = p.x, y = p.y;
    p.x = static_cast<float>(c * x - s * y);
    p.y = static_cast<float>(s * x + c * y);
  }
  for (Box3D& b : out.instances) b = rotate_box_z(b, angle);
  return out;
}

Scene augment_rotate_objects(const Scene& scene, std::span<const double> angles) {
  if (angles.size() != scene.instances.size()) {
    fail(ErrorKind::InvalidArgument, "one rotation angle per instance is required");
  }
  Scene out = scene;
  std::vector<Vec3> centers;
  for (std::size_t i = 0; i < scene.instances.size(); ++i) {
    const Vec3 center = fit_cuboid(scene.instances[i]).center;
    centers.push_back(center);
    const Mat3 r = rotation_z(angles[i]);
    for (Vec3& v : out.instances[i].corners) v = center + r * (v - center);
  }
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    const std::int32_t id = out.point_instance[i];
    if (id == kBackgroundInstance) continue;
    const Vec3& center = centers[static_cast<std::size_t>(id)];
    const Vec3 q = center + rotation_z(angles[static_cast<std::size_t>(id)]) * (out.points[i].position() - center);
    out.points[i].x = static_cast<float>(q.x());
    out.points[i].y = static_cast<float>(q.y());
    out.points[i].z = static_cast<float>(q.z());
  }
  return out;
}

// ---- training data ---------------------------------------------------------

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

TrainingSample make_sample(const Scene& scene, const ProjectionConfig& projection,
                           const std::array<double, kNumClasses>& means) {
  const FrontalViewMap map = encode_frontal_view(scene.points, projection);
  return {map.channels, to_loss_targets(rasterize_targets(scene, map), means)};
}

}  // namespace

SceneSampleSource::SceneSampleSource(std::vector<Scene> scenes, ProjectionConfig projection, AugmentConfig augment)
    : scenes_(std::move(scenes)), projection_(projection), augment_(augment) {
  validate(projection_);
  if (augment_.replication < 1) fail(ErrorKind::InvalidArgument, "augmentation replication must be >= 1");
  if (augment_.max_angle < 0 || augment_.max_angle > M_PI) {
    fail(ErrorKind::InvalidArgument, "augmentation angle must lie in [0, pi]");
  }
  std::vector<TargetMaps> maps;
  std::vector<FrontalViewMap> encoded;
  for (const Scene& s : scenes_) {
    encoded.push_back(encode_frontal_view(s.points, projection_));
    maps.push_back(rasterize_targets(s, encoded.back()));
  }
  class_means_ = class_mean_sizes(maps);
  for (std::size_t i = 0; i < scenes_.size(); ++i) {
    cached_.push_back({encoded[i].channels, to_loss_targets(maps[i], class_means_)});
  }
}

std::size_t SceneSampleSource::size() const { return scenes_.size() * static_cast<std::size_t>(augment_.replication); }

TrainingSample SceneSampleSource::sample(std::size_t index, int epoch) const {
  const std::size_t scene_index = index % scenes_.size();
  if (!augment_.enabled) return cached_.at(scene_index);
  std::mt19937_64 rng(mix(mix(augment_.seed, index), static_cast<std::uint64_t>(epoch)));
  const Scene& base = scenes_[scene_index];
  Scene rotated;
  if (augment_.per_object) {
    std::vector<double> angles(base.instances.size());
    for (double& a : angles) a = (2.0 * unit(rng) - 1.0) * augment_.max_angle;
    rotated = augment_rotate_objects(base, angles);
  } else {
    rotated = augment_rotate_z(base, (2.0 * unit(rng) - 1.0) * augment_.max_angle);
  }
  return make_sample(crop_scene(rotated), projection_, class_means_);
}

}  // namespace lmnet
