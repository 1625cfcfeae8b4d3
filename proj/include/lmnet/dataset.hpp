#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lmnet/geom.hpp"
#include "lmnet/loss.hpp"
#include "lmnet/train.hpp"

namespace lmnet {

inline constexpr std::int32_t kBackgroundInstance = -1;

/// Labelled point cloud. point_instance[i] indexes `instances` or is
/// kBackgroundInstance.
struct Scene {
  std::vector<Point3> points;
  std::vector<Box3D> instances;
  std::vector<std::int32_t> point_instance;
};

/// Tolerance for a labelled point lying outside its box.
inline constexpr double kContainmentTolerance = 0.05;

/// Throws InvalidArgument when an instance id is dangling or a labelled
/// point is farther than `tolerance` outside its box.
void validate_scene(const Scene& scene, double tolerance = kContainmentTolerance);

/// Labels each point with the box containing it (within `tolerance`); a
/// point inside several boxes takes the one whose center is nearest.
std::vector<std::int32_t> assign_points_to_instances(std::span<const Point3> points, std::span<const Box3D> boxes,
                                                     double tolerance = kContainmentTolerance);

// ---- KITTI velodyne scans -------------------------------------------------

std::vector<Point3> decode_kitti_bin(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_kitti_bin(std::span<const Point3> points);
std::vector<Point3> read_kitti_bin(const std::filesystem::path& path);
void write_kitti_bin(std::span<const Point3> points, const std::filesystem::path& path);

// ---- KITTI calibration and labels ------------------------------------------

/// Maps homogeneous LiDAR coordinates to rectified camera coordinates:
/// R0_rect * Tr_velo_to_cam.
struct Calibration {
  Eigen::Matrix4d velo_to_rect = Eigen::Matrix4d::Identity();

  /// KITTI-style axis swap with no offset: camera x = -y, y = -z, z = x.
  static Calibration canonical();
  Eigen::Vector3d to_rect(const Eigen::Vector3d& velo) const;
  Eigen::Vector3d to_velo(const Eigen::Vector3d& rect) const;
};

/// Parses "name: values" lines; needs R0_rect (9 values) and Tr_velo_to_cam (12).
Calibration parse_kitti_calib(const std::string& text);
Calibration read_kitti_calib(const std::filesystem::path& path);
void write_kitti_calib(const Calibration& calib, const std::filesystem::path& path);

/// One line of a KITTI label or result file.
struct KittiObject {
  std::string type;
  double truncation = 0;
  int occlusion = 0;
  double alpha = 0;
  std::array<double, 4> bbox{};  // 2D box, left top right bottom
  double h = 0, w = 0, l = 0;
  Eigen::Vector3d location = Eigen::Vector3d::Zero();  // bottom center, rectified camera frame
  double rotation_y = 0;
  std::optional<double> score;  // result files only
};

std::vector<KittiObject> parse_kitti_objects(const std::string& text);
std::string format_kitti_object(const KittiObject& object);

Box3D box_from_kitti(const KittiObject& object, ObjectClass cls, const Calibration& calib);
KittiObject kitti_from_box(const Box3D& box, const Calibration& calib, std::optional<double> score = std::nullopt);

/// Sensor-frame boxes of the Car/Pedestrian/Cyclist lines; other types are dropped.
std::vector<Box3D> read_kitti_label(const std::filesystem::path& label_path, const std::filesystem::path& calib_path);
std::vector<Box3D> parse_kitti_label(const std::string& text, const Calibration& calib);
void write_kitti_label(std::span<const Box3D> boxes, const Calibration& calib, const std::filesystem::path& path);

// ---- preprocessing ---------------------------------------------------------

struct CropBounds {
  double x_min = 0, x_max = 70;
  double y_min = -40, y_max = 40;
  double z_min = -2, z_max = 2;
};

/// Keeps points inside the closed box `bounds`.
std::vector<Point3> crop_range(std::span<const Point3> points, const CropBounds& bounds = {});
/// Same filter applied to a scene; labels follow their points.
Scene crop_scene(const Scene& scene, const CropBounds& bounds = {});

/// Per-pixel supervision derived from a labelled scene.
struct TargetMaps {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> valid;
  std::vector<std::uint8_t> objectness;    // ObjectClass per pixel
  Tensor corners;                          // [24, H, W]; zero off objects
  std::vector<float> instance_size;        // s(p); 0 off objects
  std::vector<std::int32_t> pixel_instance;
  std::vector<int> instance_pixels;        // projected pixel count per instance
  std::vector<ObjectClass> instance_class;
  std::size_t object_pixels = 0;           // |O|
  std::size_t background_pixels = 0;       // |O^c|
  std::vector<std::string> warnings;
};

TargetMaps rasterize_targets(const Scene& scene, const FrontalViewMap& map);
TargetMaps rasterize_targets(const Scene& scene, const ProjectionConfig& cfg);

/// Mean projected point count per class over instances with at least one
/// projected point; classes never seen default to 1.
std::array<double, kNumClasses> class_mean_sizes(std::span<const TargetMaps> maps);

LossTargets to_loss_targets(const TargetMaps& maps, const std::array<double, kNumClasses>& class_means);

// ---- augmentation ----------------------------------------------------------

/// Rotates every point and box about the sensor z axis.
Scene augment_rotate_z(const Scene& scene, double angle);

/// Rotates each instance (its box and points) about the z axis through the
/// box center by its own angle; background points stay put.
Scene augment_rotate_objects(const Scene& scene, std::span<const double> angles);

// ---- synthetic scenes ------------------------------------------------------

struct ClassSpawn {
  int count = 0;
  std::array<double, 2> length{};
  std::array<double, 2> width{};
  std::array<double, 2> height{};
  double reflectance = 0.5;
};

struct SynthConfig {
  ClassSpawn car{2, {3.6, 4.4}, {1.6, 1.8}, {1.4, 1.6}, 0.7};
  ClassSpawn pedestrian{2, {0.6, 0.9}, {0.5, 0.7}, {1.6, 1.85}, 0.35};
  ClassSpawn cyclist{1, {1.6, 1.9}, {0.5, 0.7}, {1.6, 1.8}, 0.5};
  // Cuboids look the same from front and back, so a half turn keeps the
  // heading (and with it the corner order) recoverable from the points.
  std::array<double, 2> yaw{-1.5707963267948966, 1.5707963267948966};
  std::array<double, 2> range{8.0, 35.0};  // ground distance of box centers
  double max_azimuth = 0.68;               // |azimuth| bound for every corner, radians
  double ground_z = -1.73;
  double surface_density = 1.0;  // expected returns per covered map cell on object faces
  double clutter_density = 0.6;  // probability a ground-hitting ray returns
  double range_noise = 0.01;     // meters, clamped to +-2 sigma
  int max_attempts = 500;
  ProjectionConfig projection;
  std::uint64_t seed = 0;

  const ClassSpawn& spawn(ObjectClass cls) const;
};

void validate(const SynthConfig& config);

/// Ray-cast synthetic scene: non-overlapping upright boxes on a ground plane,
/// one ray per map cell (times surface_density), deterministic per seed.
/// Throws Capacity when boxes cannot be placed within max_attempts.
Scene synth_scene(const SynthConfig& config);

// ---- training data ---------------------------------------------------------

struct AugmentConfig {
  bool enabled = false;
  double max_angle = 0.26179938779914941;  // 15 degrees
  bool per_object = false;
  int replication = 1;  // copies of each scene per epoch
  std::uint64_t seed = 0;
};

/// Encodes scenes on demand, applying seeded z-rotation augmentation.
class SceneSampleSource final : public SampleSource {
 public:
  SceneSampleSource(std::vector<Scene> scenes, ProjectionConfig projection, AugmentConfig augment = {});

  std::size_t size() const override;
  TrainingSample sample(std::size_t index, int epoch) const override;

  const std::array<double, kNumClasses>& class_means() const { return class_means_; }
  const std::vector<Scene>& scenes() const { return scenes_; }

 private:
  std::vector<Scene> scenes_;
  ProjectionConfig projection_;
  AugmentConfig augment_;
  std::array<double, kNumClasses> class_means_{};
  std::vector<TrainingSample> cached_;  // unaugmented samples
};

// ---- dataset directories ---------------------------------------------------

/// KITTI-style layout: velodyne/<id>.bin, label_2/<id>.txt, calib/<id>.txt.
struct DatasetPaths {
  std::filesystem::path root;
  std::filesystem::path velodyne() const { return root / "velodyne"; }
  std::filesystem::path labels() const { return root / "label_2"; }
  std::filesystem::path calib() const { return root / "calib"; }
};

/// Frame ids present in velodyne/, sorted by name.
std::vector<std::string> list_frames(const DatasetPaths& paths);

/// Reads a frame; points are labelled by box containment.
Scene load_scene(const DatasetPaths& paths, const std::string& frame_id);
void save_scene(const Scene& scene, const DatasetPaths& paths, const std::string& frame_id,
                const Calibration& calib = Calibration::canonical());

}  // namespace lmnet
