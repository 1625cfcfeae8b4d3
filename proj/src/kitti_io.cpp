#include <Eigen/Geometry>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "lmnet/dataset.hpp"

namespace lmnet {

std::vector<Point3> decode_kitti_bin(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % 16 != 0) {
    fail(ErrorKind::Format, "velodyne scan length " + std::to_string(bytes.size()) + " is not a multiple of 16");
  }
  detail::ByteReader in(bytes, "velodyne scan");
  std::vector<Point3> points(bytes.size() / 16);
  for (Point3& p : points) {
    p.x = in.f32();
    p.y = in.f32();
    p.z = in.f32();
    p.reflectance = in.f32();
  }
  return points;
}

std::vector<std::uint8_t> encode_kitti_bin(std::span<const Point3> points) {
  detail::ByteWriter out;
  for (const Point3& p : points) {
    out.f32(p.x);
    out.f32(p.y);
    out.f32(p.z);
    out.f32(p.reflectance);
  }
  return out.buffer();
}

std::vector<Point3> read_kitti_bin(const std::filesystem::path& path) {
  return decode_kitti_bin(detail::read_file(path));
}

void write_kitti_bin(std::span<const Point3> points, const std::filesystem::path& path) {
  detail::write_file(path, encode_kitti_bin(points));
}

// ---- calibration -----------------------------------------------------------

Calibration Calibration::canonical() {
  Calibration c;
  c.velo_to_rect << 0, -1, 0, 0,  //
      0, 0, -1, 0,                //
      1, 0, 0, 0,                 //
      0, 0, 0, 1;
  return c;
}

Eigen::Vector3d Calibration::to_rect(const Eigen::Vector3d& velo) const {
  return (velo_to_rect * velo.homogeneous()).hnormalized();
}

Eigen::Vector3d Calibration::to_velo(const Eigen::Vector3d& rect) const {
  return (velo_to_rect.inverse() * rect.homogeneous()).hnormalized();
}

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(ErrorKind::Io, "write error on " + path.string());
}

double parse_number(const std::string& token, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": cannot parse number \"" + token + "\"");
  }
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> tokens;
  for (std::string t; in >> t;) tokens.push_back(t);
  return tokens;
}

double wrap_angle(double a) {
  while (a > M_PI) a -= 2 * M_PI;
  while (a <= -M_PI) a += 2 * M_PI;
  return a;
}

}  // namespace

Calibration parse_kitti_calib(const std::string& text) {
  std::map<std::string, std::vector<double>> entries;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::vector<double> values;
    for (const auto& tok : split_ws(line.substr(colon + 1))) values.push_back(parse_number(tok, line_no));
    entries[line.substr(0, colon)] = std::move(values);
  }
  auto matrix = [&](const std::string& name, std::size_t count) -> const std::vector<double>& {
    const auto it = entries.find(name);
    if (it == entries.end()) fail(ErrorKind::Calib, "calibration lacks " + name);
    if (it->second.size() != count) {
      fail(ErrorKind::Calib, "calibration entry " + name + " has " + std::to_string(it->second.size()) +
                                 " values, expected " + std::to_string(count));
    }
    return it->second;
  };
  const auto& r0 = matrix("R0_rect", 9);
  const auto& tr = matrix("Tr_velo_to_cam", 12);
  Eigen::Matrix4d rect = Eigen::Matrix4d::Identity();
  Eigen::Matrix4d velo = Eigen::Matrix4d::Identity();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rect(r, c) = r0[static_cast<std::size_t>(3 * r + c)];
    for (int c = 0; c < 4; ++c) velo(r, c) = tr[static_cast<std::size_t>(4 * r + c)];
  }
  Calibration calib;
  calib.velo_to_rect = rect * velo;
  if (std::abs(calib.velo_to_rect.determinant()) < 1e-9) fail(ErrorKind::Calib, "calibration transform is singular");
  return calib;
}

Calibration read_kitti_calib(const std::filesystem::path& path) { return parse_kitti_calib(read_text(path)); }

void write_kitti_calib(const Calibration& calib, const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(12);
  out << std::scientific;
  out << "R0_rect:";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out << ' ' << (r == c ? 1.0 : 0.0);
  out << "\nTr_velo_to_cam:";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) out << ' ' << calib.velo_to_rect(r, c);
  out << '\n';
  write_text(path, out.str());
}

// ---- labels ----------------------------------------------------------------

std::vector<KittiObject> parse_kitti_objects(const std::string& text) {
  std::vector<KittiObject> objects;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 15 && tokens.size() != 16) {
      fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected 15 or 16 fields, found " +
                                 std::to_string(tokens.size()));
    }
    auto num = [&](std::size_t i) { return parse_number(tokens[i], line_no); };
    KittiObject o;
    o.type = tokens[0];
    o.truncation = num(1);
    o.occlusion = static_cast<int>(num(2));
    o.alpha = num(3);
    for (std::size_t i = 0; i < 4; ++i) o.bbox[i] = num(4 + i);
    o.h = num(8);
    o.w = num(9);
    o.l = num(10);
    o.location = {num(11), num(12), num(13)};
    o.rotation_y = num(14);
    if (tokens.size() == 16) o.score = num(15);
    objects.push_back(std::move(o));
  }
  return objects;
}

std::string format_kitti_object(const KittiObject& o) {
  char buf[512];
  int n = std::snprintf(buf, sizeof buf, "%s %.2f %d %.6f %.2f %.2f %.2f %.2f %.6f %.6f %.6f %.6f %.6f %.6f %.6f",
                        o.type.c_str(), o.truncation, o.occlusion, o.alpha, o.bbox[0], o.bbox[1], o.bbox[2], o.bbox[3],
                        o.h, o.w, o.l, o.location.x(), o.location.y(), o.location.z(), o.rotation_y);
  std::string line(buf, static_cast<std::size_t>(n));
  if (o.score) {
    n = std::snprintf(buf, sizeof buf, " %.6f", *o.score);
    line.append(buf, static_cast<std::size_t>(n));
  }
  return line;
}

Box3D box_from_kitti(const KittiObject& o, ObjectClass cls, const Calibration& calib) {
  // Object axes in the rectified camera frame: heading (cos ry, 0, -sin ry),
  // left (sin ry, 0, cos ry), up -y. The location is the bottom-face center.
  const double c = std::cos(o.rotation_y), s = std::sin(o.rotation_y);
  const Eigen::Vector3d heading(c, 0, -s);
  const Eigen::Vector3d left(s, 0, c);
  const Eigen::Vector3d up(0, -1, 0);
  static constexpr int kSigns[8][3] = {{+1, +1, +1}, {+1, -1, +1}, {+1, +1, -1}, {+1, -1, -1},
                                       {-1, +1, +1}, {-1, -1, +1}, {-1, +1, -1}, {-1, -1, -1}};
  Box3D box;
  box.cls = cls;
  for (std::size_t i = 0; i < 8; ++i) {
    const Eigen::Vector3d rect = o.location + heading * (0.5 * o.l * kSigns[i][0]) +
                                 left * (0.5 * o.w * kSigns[i][1]) + up * (kSigns[i][2] > 0 ? o.h : 0.0);
    box.corners[i] = calib.to_velo(rect);
  }
  return box;
}

KittiObject kitti_from_box(const Box3D& box, const Calibration& calib, std::optional<double> score) {
  const Cuboid c = fit_cuboid(box);
  KittiObject o;
  o.type = std::string(class_name(box.cls));
  o.h = c.height;
  o.w = c.width;
  o.l = c.length;
  o.location = calib.to_rect(c.center - Vec3(0, 0, 0.5 * c.height));
  const Eigen::Vector3d d =
      calib.velo_to_rect.topLeftCorner<3, 3>() * Eigen::Vector3d(std::cos(c.yaw), std::sin(c.yaw), 0.0);
  o.rotation_y = wrap_angle(std::atan2(-d.z(), d.x()));
  o.alpha = wrap_angle(o.rotation_y - std::atan2(o.location.x(), o.location.z()));
  o.score = score;
  return o;
}

std::vector<Box3D> parse_kitti_label(const std::string& text, const Calibration& calib) {
  std::vector<Box3D> boxes;
  for (const KittiObject& o : parse_kitti_objects(text)) {
    if (const auto cls = class_from_kitti(o.type)) boxes.push_back(box_from_kitti(o, *cls, calib));
  }
  return boxes;
}

std::vector<Box3D> read_kitti_label(const std::filesystem::path& label_path, const std::filesystem::path& calib_path) {
  const Calibration calib = read_kitti_calib(calib_path);
  return parse_kitti_label(read_text(label_path), calib);
}

void write_kitti_label(std::span<const Box3D> boxes, const Calibration& calib, const std::filesystem::path& path) {
  std::string text;
  for (const Box3D& box : boxes) text += format_kitti_object(kitti_from_box(box, calib)) + "\n";
  write_text(path, text);
}

// ---- dataset directories ---------------------------------------------------

std::vector<std::string> list_frames(const DatasetPaths& paths) {
  std::error_code ec;
  if (!std::filesystem::is_directory(paths.velodyne(), ec)) {
    fail(ErrorKind::Io, "dataset has no velodyne directory: " + paths.velodyne().string());
  }
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(paths.velodyne())) {
    if (entry.is_regular_file() && entry.path().extension() == ".bin") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

Scene load_scene(const DatasetPaths& paths, const std::string& id) {
  Scene scene;
  scene.points = read_kitti_bin(paths.velodyne() / (id + ".bin"));
  const auto label = paths.labels() / (id + ".txt");
  if (std::filesystem::exists(label)) {
    const auto calib_path = paths.calib() / (id + ".txt");
    const Calibration calib =
        std::filesystem::exists(calib_path) ? read_kitti_calib(calib_path) : Calibration::canonical();
    scene.instances = parse_kitti_label(read_text(label), calib);
  }
  scene.point_instance = assign_points_to_instances(scene.points, scene.instances);
  return scene;
}

void save_scene(const Scene& scene, const DatasetPaths& paths, const std::string& id, const Calibration& calib) {
  for (const auto& dir : {paths.velodyne(), paths.labels(), paths.calib()}) std::filesystem::create_directories(dir);
  write_kitti_bin(scene.points, paths.velodyne() / (id + ".bin"));
  write_kitti_label(scene.instances, calib, paths.labels() / (id + ".txt"));
  write_kitti_calib(calib, paths.calib() / (id + ".txt"));
}

}  // namespace lmnet
