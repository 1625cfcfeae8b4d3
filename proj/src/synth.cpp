#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "lmnet/dataset.hpp"

namespace lmnet {

const ClassSpawn& SynthConfig::spawn(ObjectClass cls) const {
  switch (cls) {
    case ObjectClass::Pedestrian: return pedestrian;
    case ObjectClass::Cyclist: return cyclist;
    default: return car;
  }
}

void validate(const SynthConfig& c) {
  validate(c.projection);
  for (ObjectClass cls : kObjectClasses) {
    const ClassSpawn& s = c.spawn(cls);
    if (s.count < 0) fail(ErrorKind::InvalidArgument, "synth: negative object count");
    for (const auto& r : {s.length, s.width, s.height}) {
      if (!(r[0] > 0.0) || r[1] < r[0]) fail(ErrorKind::InvalidArgument, "synth: dimension ranges must be positive");
    }
  }
  if (c.surface_density < 0 || c.clutter_density < 0 || c.clutter_density > 1 || c.range_noise < 0) {
    fail(ErrorKind::InvalidArgument, "synth: densities must be non-negative (clutter density at most 1)");
  }
  if (!(c.range[0] > 0.0) || c.range[1] < c.range[0]) fail(ErrorKind::InvalidArgument, "synth: bad range interval");
  if (c.max_attempts < 1) fail(ErrorKind::InvalidArgument, "synth: max_attempts must be positive");
}

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  double uniform(const std::array<double, 2>& r) { return uniform(r[0], r[1]); }
  double normal() {
    const double u1 = std::max(unit(), 1e-300);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * unit());
  }

 private:
  std::mt19937_64 engine_;
};

struct Placed {
  Box3D box;
  Cuboid cuboid;
  double az_lo = 0;
  double az_hi = 0;
};

// Distance along a ray from the origin to an upright cuboid, or +inf.
double ray_cuboid(const Vec3& dir, const Cuboid& c) {
  const Mat3 inv = rotation_z(-c.yaw);
  const Vec3 o = inv * (-c.center);
  const Vec3 d = inv * dir;
  const Vec3 half(0.5 * c.length, 0.5 * c.width, 0.5 * c.height);
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-15) {
      if (std::abs(o[k]) > half[k]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t1 = (-half[k] - o[k]) / d[k];
    double t2 = (half[k] - o[k]) / d[k];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
  }
  if (t_near > t_far || t_near <= 0.0) return std::numeric_limits<double>::infinity();
  return t_near;
}

}  // namespace

Scene synth_scene(const SynthConfig& config) {
  validate(config);
  Rng rng(config.seed);
  const CropBounds crop;
  std::vector<Placed> placed;

  for (ObjectClass cls : kObjectClasses) {
    const ClassSpawn& spawn = config.spawn(cls);
    for (int n = 0; n < spawn.count; ++n) {
      bool ok = false;
      for (int attempt = 0; attempt < config.max_attempts && !ok; ++attempt) {
        Cuboid c;
        c.length = rng.uniform(spawn.length);
        c.width = rng.uniform(spawn.width);
        c.height = rng.uniform(spawn.height);
        c.yaw = rng.uniform(config.yaw);
        const double range = rng.uniform(config.range);
        const double az = rng.uniform(-config.max_azimuth, config.max_azimuth);
        c.center = Vec3(range * std::cos(az), range * std::sin(az), config.ground_z + 0.5 * c.height);
        const Box3D box = make_box(c, cls);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        bool inside = true;
        for (const Vec3& v : box.corners) {
          const double a = std::atan2(v.y(), v.x());
          lo = std::min(lo, a);
          hi = std::max(hi, a);
          inside = inside && v.x() > crop.x_min && v.x() < crop.x_max && v.y() > crop.y_min && v.y() < crop.y_max &&
                   v.z() >= crop.z_min && v.z() <= crop.z_max;
        }
        if (!inside || lo < -config.max_azimuth || hi > config.max_azimuth) continue;
        // Disjoint azimuth sectors: boxes neither overlap nor hide each other.
        constexpr double kGap = 0.02;
        const bool clear = std::all_of(placed.begin(), placed.end(), [&](const Placed& p) {
          return hi + kGap < p.az_lo || lo - kGap > p.az_hi;
        });
        if (!clear) continue;
        placed.push_back({box, c, lo, hi});
        ok = true;
      }
      if (!ok) {
        fail(ErrorKind::Capacity, "synth: could not place " + std::string(class_name(cls)) + " #" +
                                      std::to_string(n) + " after " + std::to_string(config.max_attempts) +
                                      " attempts");
      }
    }
  }

  Scene scene;
  for (const Placed& p : placed) scene.instances.push_back(p.box);

  const ProjectionConfig& proj = config.projection;
  const int whole = static_cast<int>(std::floor(config.surface_density));
  const double fraction = config.surface_density - whole;
  for (int row = 0; row < proj.height; ++row) {
    const int level = proj.height - 1 - row;
    for (int col = 0; col < proj.width; ++col) {
      const int samples = whole + (rng.unit() < fraction ? 1 : 0);
      // At least one ray per cell so the ground can still return.
      for (int s = 0; s < std::max(samples, 1); ++s) {
        const double az = proj.azimuth_min + (col + rng.uniform(0.02, 0.98)) * proj.azimuth_step;
        const double el = proj.elevation_min + (level + rng.uniform(0.02, 0.98)) * proj.elevation_step;
        const Vec3 dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
        double best = std::numeric_limits<double>::infinity();
        int hit = kBackgroundInstance;
        for (std::size_t b = 0; b < placed.size(); ++b) {
          const double t = ray_cuboid(dir, placed[b].cuboid);
          if (t < best) {
            best = t;
            hit = static_cast<int>(b);
          }
        }
        const double noise = std::clamp(rng.normal(), -2.0, 2.0) * config.range_noise;
        const double reflect_jitter = rng.uniform(-0.1, 0.1);
        const double ground_roll = rng.unit();
        if (hit != kBackgroundInstance) {
          if (s >= samples) continue;
          const Vec3 q = dir * (best + noise);
          const double base = config.spawn(placed[static_cast<std::size_t>(hit)].box.cls).reflectance;
          scene.points.push_back({static_cast<float>(q.x()), static_cast<float>(q.y()), static_cast<float>(q.z()),
                                  static_cast<float>(std::clamp(base + reflect_jitter, 0.0, 1.0))});
          scene.point_instance.push_back(hit);
          continue;
        }
        if (s > 0 || dir.z() >= 0.0 || ground_roll >= config.clutter_density) continue;
        const Vec3 q = dir * (config.ground_z / dir.z() + noise);
        if (q.x() > crop.x_max || q.y() < crop.y_min || q.y() > crop.y_max) continue;
        const bool near_box = std::any_of(placed.begin(), placed.end(), [&](const Placed& p) {
          return box_contains(p.box, q, 2.0 * kContainmentTolerance);
        });
        if (near_box) continue;
        scene.points.push_back({static_cast<float>(q.x()), static_cast<float>(q.y()), static_cast<float>(q.z()),
                                static_cast<float>(0.15 + reflect_jitter)});
        scene.point_instance.push_back(kBackgroundInstance);
      }
    }
  }
  return scene;
}

}  // namespace lmnet
