#include "lmnet/geom.hpp"

#include <Eigen/Geometry>
#include <cmath>

namespace lmnet {

double Point3::ground_range() const { return std::hypot(static_cast<double>(x), static_cast<double>(y)); }

void validate(const ProjectionConfig& cfg) {
  if (cfg.width < 2 || cfg.height < 2 || cfg.width % 2 != 0 || cfg.height % 2 != 0) {
    fail(ErrorKind::InvalidArgument, "projection grid must have even width and height >= 2");
  }
  if (!(cfg.azimuth_step > 0.0) || !(cfg.elevation_step > 0.0)) {
    fail(ErrorKind::InvalidArgument, "projection resolutions must be positive");
  }
  if (cfg.azimuth_min < -M_PI || cfg.azimuth_max() > M_PI + 1e-12) {
    fail(ErrorKind::InvalidArgument, "azimuth field of view must lie within [-pi, pi]");
  }
}

namespace {

// Bin index of `value` on a grid starting at `lo` with `count` bins of `step`.
// The upper boundary itself belongs to the last bin.
std::optional<int> bin(double value, double lo, double step, int count) {
  const double pos = (value - lo) / step;
  if (!(pos >= 0.0)) return std::nullopt;
  int index = static_cast<int>(std::floor(pos));
  if (index == count && pos == static_cast<double>(count)) index = count - 1;
  if (index >= count) return std::nullopt;
  return index;
}

}  // namespace

std::optional<PixelCoord> project(const Point3& p, const ProjectionConfig& cfg) {
  const double x = p.x, y = p.y, z = p.z;
  if (x == 0.0 && y == 0.0 && z == 0.0) return std::nullopt;
  const double planar = std::hypot(x, y);
  const auto col = bin(std::atan2(y, x), cfg.azimuth_min, cfg.azimuth_step, cfg.width);
  const auto level = bin(std::atan2(z, planar), cfg.elevation_min, cfg.elevation_step, cfg.height);
  if (!col || !level) return std::nullopt;
  return PixelCoord{cfg.height - 1 - *level, *col};
}

std::size_t FrontalViewMap::valid_count() const {
  std::size_t n = 0;
  for (auto v : valid) n += v ? 1 : 0;
  return n;
}

Vec3 FrontalViewMap::cell_point(std::size_t pixel) const {
  const std::size_t plane = valid.size();
  return {channels[kForward * plane + pixel], channels[kSide * plane + pixel], channels[kHeight * plane + pixel]};
}

FrontalViewMap encode_frontal_view(std::span<const Point3> points, const ProjectionConfig& cfg) {
  validate(cfg);
  const std::size_t plane = static_cast<std::size_t>(cfg.height) * static_cast<std::size_t>(cfg.width);
  FrontalViewMap map;
  map.channels = Tensor({5, cfg.height, cfg.width});
  map.valid.assign(plane, 0);
  map.source.assign(plane, kNoSource);
  std::vector<double> best_range(plane, 0.0);

  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto cell = project(points[i], cfg);
    if (!cell) continue;
    const std::size_t pixel = static_cast<std::size_t>(cell->row) * cfg.width + static_cast<std::size_t>(cell->col);
    const double range = points[i].ground_range();
    if (map.source[pixel] != kNoSource && !(range < best_range[pixel])) continue;
    map.source[pixel] = static_cast<std::int32_t>(i);
    best_range[pixel] = range;
  }
  for (std::size_t pixel = 0; pixel < plane; ++pixel) {
    if (map.source[pixel] == kNoSource) continue;
    const Point3& p = points[static_cast<std::size_t>(map.source[pixel])];
    map.valid[pixel] = 1;
    map.channels[kReflection * plane + pixel] = p.reflectance;
    map.channels[kRange * plane + pixel] = static_cast<float>(best_range[pixel]);
    map.channels[kForward * plane + pixel] = p.x;
    map.channels[kSide * plane + pixel] = p.y;
    map.channels[kHeight * plane + pixel] = p.z;
  }
  return map;
}

ObservationAngles observation_angles(const Vec3& p) {
  if (p.x() == 0.0 && p.y() == 0.0 && p.z() == 0.0) {
    fail(ErrorKind::UndefinedAngle, "observation angles are undefined at the sensor origin");
  }
  return {std::atan2(p.y(), p.x()), std::atan2(p.z(), std::hypot(p.x(), p.y()))};
}

Mat3 rotation_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

Mat3 rotation_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }

Mat3 rotation(double azimuth, double elevation) { return rotation_z(azimuth) * rotation_y(elevation); }

namespace {

// Unit-cube signs per corner: (front/rear, left/right, top/bottom).
constexpr std::array<std::array<int, 3>, 8> kCornerSigns{{
    {+1, +1, +1},
    {+1, -1, +1},
    {+1, +1, -1},
    {+1, -1, -1},
    {-1, +1, +1},
    {-1, -1, +1},
    {-1, +1, -1},
    {-1, -1, -1},
}};

Vec3 mean_of(const Box3D& box, std::initializer_list<int> ids) {
  Vec3 acc = Vec3::Zero();
  for (int i : ids) acc += box.corners[static_cast<std::size_t>(i)];
  return acc / static_cast<double>(ids.size());
}

}  // namespace

Box3D make_box(const Cuboid& c, ObjectClass cls) {
  Box3D box;
  box.cls = cls;
  const Mat3 r = rotation_z(c.yaw);
  for (std::size_t i = 0; i < 8; ++i) {
    const Vec3 local(0.5 * c.length * kCornerSigns[i][0], 0.5 * c.width * kCornerSigns[i][1],
                     0.5 * c.height * kCornerSigns[i][2]);
    box.corners[i] = c.center + r * local;
  }
  return box;
}

Cuboid fit_cuboid(const Box3D& box) {
  Cuboid c;
  for (const Vec3& v : box.corners) c.center += v;
  c.center /= 8.0;
  const Vec3 forward = mean_of(box, {0, 1, 2, 3}) - mean_of(box, {4, 5, 6, 7});
  const Vec3 left = mean_of(box, {0, 2, 4, 6}) - mean_of(box, {1, 3, 5, 7});
  const Vec3 up = mean_of(box, {0, 1, 4, 5}) - mean_of(box, {2, 3, 6, 7});
  c.yaw = std::atan2(forward.y(), forward.x());
  c.length = std::hypot(forward.x(), forward.y());
  c.width = std::hypot(left.x(), left.y());
  c.height = std::abs(up.z());
  return c;
}

std::array<Eigen::Vector2d, 4> bev_footprint(const Box3D& box) {
  const Cuboid c = fit_cuboid(box);
  const double cy = std::cos(c.yaw), sy = std::sin(c.yaw);
  const Eigen::Vector2d f(cy * 0.5 * c.length, sy * 0.5 * c.length);
  const Eigen::Vector2d l(-sy * 0.5 * c.width, cy * 0.5 * c.width);
  const Eigen::Vector2d o(c.center.x(), c.center.y());
  // front-right, front-left, rear-left, rear-right: counter-clockwise about +z.
  return {o + f - l, o + f + l, o - f + l, o - f - l};
}

bool box_contains(const Box3D& box, const Vec3& p, double margin) {
  const Cuboid c = fit_cuboid(box);
  const Vec3 local = rotation_z(-c.yaw) * (p - c.center);
  return std::abs(local.x()) <= 0.5 * c.length + margin && std::abs(local.y()) <= 0.5 * c.width + margin &&
         std::abs(local.z()) <= 0.5 * c.height + margin;
}

Box3D rotate_box_z(const Box3D& box, double angle) {
  const Mat3 r = rotation_z(angle);
  Box3D out = box;
  for (Vec3& v : out.corners) v = r * v;
  return out;
}

BoxEncoding encode_box(const Vec3& p, const Box3D& box) {
  const auto angles = observation_angles(p);
  const Mat3 rt = rotation(angles.azimuth, angles.elevation).transpose();
  BoxEncoding enc{};
  for (std::size_t i = 0; i < 8; ++i) {
    const Vec3 offset = rt * (box.corners[i] - p);
    enc[3 * i] = offset.x();
    enc[3 * i + 1] = offset.y();
    enc[3 * i + 2] = offset.z();
  }
  return enc;
}

Box3D decode_box(const Vec3& p, const BoxEncoding& enc, ObjectClass cls) {
  const auto angles = observation_angles(p);
  const Mat3 r = rotation(angles.azimuth, angles.elevation);
  Box3D box;
  box.cls = cls;
  for (std::size_t i = 0; i < 8; ++i) {
    box.corners[i] = r * Vec3(enc[3 * i], enc[3 * i + 1], enc[3 * i + 2]) + p;
  }
  return box;
}

}  // namespace lmnet
