#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lmnet/classes.hpp"
#include "lmnet/tensor.hpp"

namespace lmnet {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// One LiDAR return in the sensor frame: x forward, y left, z up (meters),
/// reflectance normalised to [0, 1].
struct Point3 {
  float x = 0;
  float y = 0;
  float z = 0;
  float reflectance = 0;

  Vec3 position() const { return {x, y, z}; }
  double ground_range() const;  // sqrt(x^2 + y^2)
  friend bool operator==(const Point3&, const Point3&) = default;
};

/// Cylindrical projection grid. Column 0 sits at azimuth_min, row 0 at the
/// highest elevation.
struct ProjectionConfig {
  int width = 512;
  int height = 64;
  double azimuth_min = -0.78539816339744831;     // -pi/4
  double azimuth_step = 1.5707963267948966 / 512;  // pi/2 over 512 columns
  double elevation_min = -0.43633231299858238;   // -25 deg
  double elevation_step = 0.47123889803846897 / 64;  // 27 deg over 64 rows

  double azimuth_max() const noexcept { return azimuth_min + azimuth_step * width; }
  double elevation_max() const noexcept { return elevation_min + elevation_step * height; }
};

void validate(const ProjectionConfig& cfg);

struct PixelCoord {
  int row = 0;
  int col = 0;
  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

/// Map cell of a point; nullopt when the point falls outside the grid or sits at the origin.
std::optional<PixelCoord> project(const Point3& p, const ProjectionConfig& cfg);

/// Channel order of the encoded map.
enum FrontalChannel : int { kReflection = 0, kRange = 1, kForward = 2, kSide = 3, kHeight = 4 };

inline constexpr std::int32_t kNoSource = -1;

struct FrontalViewMap {
  Tensor channels;                    // [5, H, W]
  std::vector<std::uint8_t> valid;    // H*W
  std::vector<std::int32_t> source;   // H*W, index into the encoded point list or kNoSource

  int height() const { return channels.dim(1); }
  int width() const { return channels.dim(2); }
  std::size_t valid_count() const;
  /// Source point position of a valid cell, read back from the x/y/z channels.
  Vec3 cell_point(std::size_t pixel) const;
};

/// Projects every in-view point; on a cell collision the point with the
/// smaller ground range wins (ties: lower index).
FrontalViewMap encode_frontal_view(std::span<const Point3> points, const ProjectionConfig& cfg);

struct ObservationAngles {
  double azimuth = 0;    // atan2(y, x)
  double elevation = 0;  // atan2(z, sqrt(x^2 + y^2))
};

/// Throws UndefinedAngle for the origin.
ObservationAngles observation_angles(const Vec3& p);

Mat3 rotation_z(double angle);
Mat3 rotation_y(double angle);

/// R = Rz(azimuth) * Ry(elevation).
Mat3 rotation(double azimuth, double elevation);

/// 3D box as eight corners in the sensor frame.
///
/// Corner order (front = heading direction, left = +90 deg from heading, top = +z):
///   0 front-top-left      4 rear-top-left
///   1 front-top-right     5 rear-top-right
///   2 front-bottom-left   6 rear-bottom-left
///   3 front-bottom-right  7 rear-bottom-right
/// Corner 0 and corner 7 are the pair used by the NMS distance.
struct Box3D {
  std::array<Vec3, 8> corners;
  ObjectClass cls = ObjectClass::Car;
};

inline constexpr int kFrontTopLeft = 0;
inline constexpr int kRearBottomRight = 7;

/// Upright oriented cuboid description.
struct Cuboid {
  Vec3 center = Vec3::Zero();  // geometric center
  double length = 0;           // along heading
  double width = 0;
  double height = 0;
  double yaw = 0;  // heading angle about +z, from +x
};

Box3D make_box(const Cuboid& cuboid, ObjectClass cls);

/// Best upright cuboid for an arbitrary set of corners: center is the corner
/// mean, yaw follows the mean rear-to-front edge and extents are mean edge lengths.
Cuboid fit_cuboid(const Box3D& box);

/// Four XY corners of the fitted cuboid footprint, counter-clockwise.
std::array<Eigen::Vector2d, 4> bev_footprint(const Box3D& box);

/// True when p lies inside the (fitted) cuboid grown by `margin` on every side.
bool box_contains(const Box3D& box, const Vec3& p, double margin = 0.0);

Box3D rotate_box_z(const Box3D& box, double angle);

using BoxEncoding = std::array<double, 24>;

/// Corner offsets in the point's observation frame: c'_i = R^T (c_i - p).
BoxEncoding encode_box(const Vec3& p, const Box3D& box);

/// Inverse of encode_box: c_i = R c'_i + p.
Box3D decode_box(const Vec3& p, const BoxEncoding& enc, ObjectClass cls = ObjectClass::Car);

}  // namespace lmnet
