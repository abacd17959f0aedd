#ifndef SURFELSIM_SCENE_IO_HPP
#define SURFELSIM_SCENE_IO_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "surfelsim/binary_io.hpp"
#include "surfelsim/error.hpp"
#include "surfelsim/image.hpp"
#include "surfelsim/pose.hpp"

namespace surfelsim {

using Vec3f = Eigen::Vector3f;
using TrackId = std::uint32_t;

/// Surfel / box category. Boxes never carry kBackground.
enum class SemanticClass : std::uint8_t {
  kBackground = 0,
  kVehicle = 1,
  kPedestrian = 2,
  kCyclist = 3,
};

inline const char* to_string(SemanticClass c) {
  switch (c) {
    case SemanticClass::kBackground: return "background";
    case SemanticClass::kVehicle: return "vehicle";
    case SemanticClass::kPedestrian: return "pedestrian";
    case SemanticClass::kCyclist: return "cyclist";
  }
  return "unknown";
}

inline SemanticClass parse_box_class(const std::string& s) {
  if (s == "vehicle") return SemanticClass::kVehicle;
  if (s == "pedestrian") return SemanticClass::kPedestrian;
  if (s == "cyclist") return SemanticClass::kCyclist;
  throw Error(ErrorKind::kFormat, "unknown box class '" + s + "'");
}

struct LidarScan {
  double timestamp = 0.0;
  PoseSE3 sensor_pose;  // sensor → world
  std::vector<Vec3f> points;  // sensor frame
  std::optional<std::vector<std::optional<Rgb8>>> point_colors;
  std::optional<std::vector<TrackId>> point_object_ids;  // 0 = static background

  Vec3 world_point(std::size_t i) const { return sensor_pose * points[i].cast<double>(); }
};

struct Intrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  bool is_valid() const {
    return fx > 0 && fy > 0 && cx >= 0 && cx < width && cy >= 0 && cy < height;
  }
};

/// Pinhole camera, z forward, x right, y down. Pixel (x, y) is centered at integer coordinates.
struct CameraFrame {
  double timestamp = 0.0;
  PoseSE3 pose;  // camera → world
  Intrinsics intrinsics;
  RgbImage image;
};

struct BoxAnnotation {
  TrackId track_id = 0;
  SemanticClass cls = SemanticClass::kVehicle;
  Vec3 center = Vec3::Zero();
  Vec3 dims = Vec3::Ones();  // length (heading axis), width, height
  double heading = 0.0;
  double timestamp = 0.0;

  /// Box canonical frame → world: origin at center, x along heading, z up.
  PoseSE3 pose() const { return PoseSE3::from_yaw(heading, center); }

  bool contains(const Vec3& world) const {
    const double c = std::cos(heading), s = std::sin(heading);
    const Vec3 d = world - center;
    const double x = c * d.x() + s * d.y();
    const double y = -s * d.x() + c * d.y();
    return std::abs(x) <= 0.5 * dims.x() && std::abs(y) <= 0.5 * dims.y() &&
           std::abs(d.z()) <= 0.5 * dims.z();
  }
};

struct SceneBundle {
  std::string scene_id;
  std::vector<LidarScan> scans;
  std::vector<CameraFrame> frames;
  std::vector<BoxAnnotation> boxes;
};

// ---------------------------------------------------------------------------
// Validation

inline void validate_scan(const LidarScan& scan, const std::string& name) {
  if (!scan.sensor_pose.is_valid()) {
    throw Error(ErrorKind::kValidation, name + ": sensor pose is not a rigid transform");
  }
  if (!std::isfinite(scan.timestamp)) throw Error(ErrorKind::kValidation, name + ": bad timestamp");
  for (const auto& p : scan.points) {
    if (!p.allFinite()) throw Error(ErrorKind::kValidation, name + ": non-finite point");
  }
  if (scan.point_colors && scan.point_colors->size() != scan.points.size()) {
    throw Error(ErrorKind::kValidation, name + ": color count differs from point count");
  }
  if (scan.point_object_ids && scan.point_object_ids->size() != scan.points.size()) {
    throw Error(ErrorKind::kValidation, name + ": object id count differs from point count");
  }
}

inline void validate_frame(const CameraFrame& frame, const std::string& name) {
  if (!frame.pose.is_valid()) {
    throw Error(ErrorKind::kValidation, name + ": camera pose is not a rigid transform");
  }
  if (!frame.intrinsics.is_valid()) throw Error(ErrorKind::kValidation, name + ": bad intrinsics");
  if (frame.image.width != frame.intrinsics.width || frame.image.height != frame.intrinsics.height) {
    throw Error(ErrorKind::kValidation, name + ": image size differs from intrinsics");
  }
}

inline void validate_box(const BoxAnnotation& box) {
  const std::string name = "box track " + std::to_string(box.track_id);
  if (box.track_id == 0) throw Error(ErrorKind::kValidation, "box track_id 0 is reserved");
  if (!(box.dims.minCoeff() > 0)) throw Error(ErrorKind::kValidation, name + ": dims must be > 0");
  if (!(box.heading >= -std::numbers::pi && box.heading < std::numbers::pi)) {
    throw Error(ErrorKind::kValidation, name + ": heading outside [-pi, pi)");
  }
  if (box.cls == SemanticClass::kBackground) {
    throw Error(ErrorKind::kValidation, name + ": box class cannot be background");
  }
}

inline void validate_scene(const SceneBundle& scene) {
  for (std::size_t i = 0; i < scene.scans.size(); ++i) {
    validate_scan(scene.scans[i], "scan " + std::to_string(i));
    if (i > 0 && scene.scans[i].timestamp < scene.scans[i - 1].timestamp) {
      throw Error(ErrorKind::kValidation, "scan " + std::to_string(i) + ": timestamps not monotone");
    }
  }
  for (std::size_t i = 0; i < scene.frames.size(); ++i) {
    validate_frame(scene.frames[i], "frame " + std::to_string(i));
    if (i > 0 && scene.frames[i].timestamp < scene.frames[i - 1].timestamp) {
      throw Error(ErrorKind::kValidation, "frame " + std::to_string(i) + ": timestamps not monotone");
    }
  }
  for (const auto& b : scene.boxes) validate_box(b);
}

// ---------------------------------------------------------------------------
// On-disk format

inline std::string frame_stem(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06zu", index);
  return buf;
}

namespace detail {

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kFormat, "missing file " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kFormat, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json pose_to_json(const PoseSE3& p) { return p.to_rows(); }

inline PoseSE3 pose_from_json(const nlohmann::json& j, const std::string& origin) {
  if (!j.is_array() || j.size() != 12) {
    throw Error(ErrorKind::kFormat, origin + ": pose must be 12 numbers");
  }
  std::array<double, 12> m{};
  for (std::size_t i = 0; i < 12; ++i) {
    if (!j[i].is_number()) throw Error(ErrorKind::kFormat, origin + ": pose must be 12 numbers");
    m[i] = j[i].get<double>();
  }
  return PoseSE3::from_rows(m);
}

inline Vec3 vec3_from_json(const nlohmann::json& j, const std::string& origin) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::kFormat, origin + ": expected 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace detail

/// `LPC1` point file: magic, u32 count, then count × 3 f32 (little-endian).
inline void write_lpc(const std::filesystem::path& path, std::span<const Vec3f> points) {
  ByteWriter w;
  w.bytes("LPC1");
  w.put<std::uint32_t>(static_cast<std::uint32_t>(points.size()));
  for (const auto& p : points) {
    w.put(p.x());
    w.put(p.y());
    w.put(p.z());
  }
  w.save(path);
}

inline std::vector<Vec3f> read_lpc(const std::filesystem::path& path) {
  auto r = ByteReader::from_file(path);
  if (r.bytes(4) != "LPC1") throw Error(ErrorKind::kFormat, path.string() + ": bad LPC magic");
  const auto n = r.get<std::uint32_t>();
  if (r.remaining() != static_cast<std::size_t>(n) * 12) {
    throw Error(ErrorKind::kFormat, path.string() + ": point count does not match file size");
  }
  std::vector<Vec3f> pts(n);
  for (auto& p : pts) {
    p.x() = r.get<float>();
    p.y() = r.get<float>();
    p.z() = r.get<float>();
  }
  return pts;
}

inline nlohmann::json box_to_json(const BoxAnnotation& b) {
  return {{"track_id", b.track_id},
          {"class", to_string(b.cls)},
          {"center", {b.center.x(), b.center.y(), b.center.z()}},
          {"dims", {b.dims.x(), b.dims.y(), b.dims.z()}},
          {"heading", b.heading},
          {"timestamp", b.timestamp}};
}

inline BoxAnnotation box_from_json(const nlohmann::json& j) {
  try {
    BoxAnnotation b;
    b.track_id = j.at("track_id").get<TrackId>();
    b.cls = parse_box_class(j.at("class").get<std::string>());
    b.center = detail::vec3_from_json(j.at("center"), "box center");
    b.dims = detail::vec3_from_json(j.at("dims"), "box dims");
    b.heading = j.at("heading").get<double>();
    b.timestamp = j.at("timestamp").get<double>();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("boxes.json: ") + e.what());
  }
}

/**
 * @brief Writes a scene directory: manifest.json, scans/, frames/, boxes.json.
 *
 * Derived per-point data (colors, object ids) is not persisted.
 */
inline void write_scene(const SceneBundle& scene, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "scans");
  fs::create_directories(dir / "frames");
  nlohmann::json manifest;
  manifest["scene_id"] = scene.scene_id;
  manifest["num_scans"] = scene.scans.size();
  manifest["num_frames"] = scene.frames.size();
  manifest["scans"] = nlohmann::json::array();
  manifest["frames"] = nlohmann::json::array();
  for (std::size_t i = 0; i < scene.scans.size(); ++i) {
    const auto& s = scene.scans[i];
    const std::string stem = "scans/" + frame_stem(i);
    write_lpc(dir / (stem + ".lpc"), s.points);
    detail::write_json(dir / (stem + ".pose.json"), detail::pose_to_json(s.sensor_pose));
    manifest["scans"].push_back(
        {{"timestamp", s.timestamp}, {"points", stem + ".lpc"}, {"pose", stem + ".pose.json"}});
  }
  for (std::size_t i = 0; i < scene.frames.size(); ++i) {
    const auto& f = scene.frames[i];
    const std::string stem = "frames/" + frame_stem(i);
    write_png(dir / (stem + ".png"), f.image);
    detail::write_json(dir / (stem + ".pose.json"), detail::pose_to_json(f.pose));
    const auto& k = f.intrinsics;
    detail::write_json(dir / (stem + ".intr.json"), {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx},
                                                     {"cy", k.cy}, {"width", k.width},
                                                     {"height", k.height}});
    manifest["frames"].push_back({{"timestamp", f.timestamp},
                                  {"image", stem + ".png"},
                                  {"pose", stem + ".pose.json"},
                                  {"intrinsics", stem + ".intr.json"}});
  }
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : scene.boxes) boxes.push_back(box_to_json(b));
  detail::write_json(dir / "boxes.json", boxes);
  manifest["boxes"] = "boxes.json";
  detail::write_json(dir / "manifest.json", manifest);
}

/// Loads and validates a scene directory.
inline SceneBundle load_scene(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) {
    throw Error(ErrorKind::kFormat, "missing manifest in " + dir.string());
  }
  const auto manifest = detail::read_json(manifest_path);
  SceneBundle scene;
  try {
    scene.scene_id = manifest.value("scene_id", std::string{});
    const auto& scans = manifest.at("scans");
    const auto& frames = manifest.at("frames");
    if (manifest.contains("num_scans") && manifest["num_scans"].get<std::size_t>() != scans.size()) {
      throw Error(ErrorKind::kFormat, "manifest num_scans does not match scan list");
    }
    if (manifest.contains("num_frames") &&
        manifest["num_frames"].get<std::size_t>() != frames.size()) {
      throw Error(ErrorKind::kFormat, "manifest num_frames does not match frame list");
    }
    for (const auto& entry : scans) {
      LidarScan s;
      s.timestamp = entry.at("timestamp").get<double>();
      const auto pose_file = entry.at("pose").get<std::string>();
      s.sensor_pose = detail::pose_from_json(detail::read_json(dir / pose_file), pose_file);
      s.points = read_lpc(dir / entry.at("points").get<std::string>());
      scene.scans.push_back(std::move(s));
    }
    for (const auto& entry : frames) {
      CameraFrame f;
      f.timestamp = entry.at("timestamp").get<double>();
      const auto pose_file = entry.at("pose").get<std::string>();
      f.pose = detail::pose_from_json(detail::read_json(dir / pose_file), pose_file);
      const auto intr = detail::read_json(dir / entry.at("intrinsics").get<std::string>());
      f.intrinsics = {intr.at("fx").get<double>(), intr.at("fy").get<double>(),
                      intr.at("cx").get<double>(), intr.at("cy").get<double>(),
                      intr.at("width").get<int>(), intr.at("height").get<int>()};
      const auto image_path = dir / entry.at("image").get<std::string>();
      if (!std::filesystem::exists(image_path)) {
        throw Error(ErrorKind::kFormat, "missing image " + image_path.string());
      }
      f.image = read_png_rgb(image_path);
      scene.frames.push_back(std::move(f));
    }
    if (manifest.contains("boxes")) {
      const auto boxes = detail::read_json(dir / manifest["boxes"].get<std::string>());
      if (!boxes.is_array()) throw Error(ErrorKind::kFormat, "boxes.json must be an array");
      for (const auto& b : boxes) scene.boxes.push_back(box_from_json(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("manifest: ") + e.what());
  }
  validate_scene(scene);
  return scene;
}

// ---------------------------------------------------------------------------
// Colorization and box association

/// Index of the frame nearest in time; ties go to the earlier frame.
inline std::optional<std::size_t> nearest_frame_index(std::span<const CameraFrame> frames, double t) {
  std::optional<std::size_t> best;
  double best_dt = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const double dt = std::abs(frames[i].timestamp - t);
    if (dt < best_dt) {
      best_dt = dt;
      best = i;
    }
  }
  return best;
}

/// Pixel hit by a camera-frame point, or nullopt when behind the camera or outside the image.
inline std::optional<std::pair<int, int>> pixel_of(const Vec3& p_cam, const Intrinsics& k) {
  if (!(p_cam.z() > 0)) return std::nullopt;
  const double u = k.fx * p_cam.x() / p_cam.z() + k.cx;
  const double v = k.fy * p_cam.y() / p_cam.z() + k.cy;
  const double x = std::floor(u + 0.5), y = std::floor(v + 0.5);
  if (x < 0 || y < 0 || x >= k.width || y >= k.height) return std::nullopt;
  return std::pair<int, int>{static_cast<int>(x), static_cast<int>(y)};
}

/**
 * @brief Assigns each point the RGB of the pixel it projects to in the
 * nearest-in-time frame. Points behind the camera or outside the image get
 * no color. Points and ids are untouched.
 */
inline LidarScan colorize_points(const LidarScan& scan, std::span<const CameraFrame> frames) {
  LidarScan out = scan;
  std::vector<std::optional<Rgb8>> colors(scan.points.size());
  if (const auto idx = nearest_frame_index(frames, scan.timestamp)) {
    const auto& frame = frames[*idx];
    const PoseSE3 cam_from_sensor = frame.pose.inverse() * scan.sensor_pose;
    for (std::size_t i = 0; i < scan.points.size(); ++i) {
      if (const auto px = pixel_of(cam_from_sensor * scan.points[i].cast<double>(), frame.intrinsics)) {
        colors[i] = pixel_rgb(frame.image, px->first, px->second);
      }
    }
  }
  out.point_colors = std::move(colors);
  return out;
}

/// The annotation set whose timestamp is nearest to `t` (ties → earlier), in input order.
inline std::vector<BoxAnnotation> boxes_at(std::span<const BoxAnnotation> boxes, double t) {
  std::optional<double> best;
  for (const auto& b : boxes) {
    if (!best || std::abs(b.timestamp - t) < std::abs(*best - t) ||
        (std::abs(b.timestamp - t) == std::abs(*best - t) && b.timestamp < *best)) {
      best = b.timestamp;
    }
  }
  std::vector<BoxAnnotation> out;
  if (!best) return out;
  for (const auto& b : boxes) {
    if (b.timestamp == *best) out.push_back(b);
  }
  return out;
}

/// Labels each point with the track_id of the first containing box, else 0.
inline LidarScan associate_points_to_boxes(const LidarScan& scan, std::span<const BoxAnnotation> boxes) {
  LidarScan out = scan;
  std::vector<TrackId> ids(scan.points.size(), 0);
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    const Vec3 w = scan.world_point(i);
    for (const auto& b : boxes) {
      if (b.contains(w)) {
        ids[i] = b.track_id;
        break;
      }
    }
  }
  out.point_object_ids = std::move(ids);
  return out;
}

}  // namespace surfelsim

#endif  // SURFELSIM_SCENE_IO_HPP
