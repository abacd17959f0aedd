#ifndef SURFELSIM_DYNAMIC_OBJECTS_HPP
#define SURFELSIM_DYNAMIC_OBJECTS_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "surfelsim/error.hpp"
#include "surfelsim/kdtree.hpp"
#include "surfelsim/pose.hpp"
#include "surfelsim/scene_io.hpp"
#include "surfelsim/surfel_map.hpp"

namespace surfelsim {

// ---------------------------------------------------------------------------
// ICP

struct IcpResult {
  PoseSE3 transform;  // source → target
  double rmse = 0.0;
  int iterations = 0;
  bool converged = false;
};

/**
 * @brief Least-squares rigid transform mapping src[i] onto dst[i] (SVD of the
 * cross-covariance, with reflection correction).
 *
 * Returns nullopt when the cross-covariance has rank < 2.
 */
inline std::optional<PoseSE3> fit_rigid_transform(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size() || src.size() < 3) return std::nullopt;
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - cs) * (dst[i] - cd).transpose();

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv(0) > 0) || sv(1) <= 1e-12 * sv(0)) return std::nullopt;
  const Mat3 u = svd.matrixU(), v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
  PoseSE3 t;
  t.rotation = v * d * u.transpose();
  t.translation = cd - t.rotation * cs;
  return t;
}

namespace detail {

struct Correspondences {
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  double rmse = 0.0;
};

// Nearest-neighbour pairs for `source` under `t`, dropping pairs farther than
// `rejection_factor` × the median pair distance.
inline Correspondences match(std::span<const Vec3> source, std::span<const Vec3> target,
                             const KdTree3& tree, const PoseSE3& t, double rejection_factor) {
  std::vector<Vec3> moved(source.size());
  std::vector<std::size_t> nn(source.size());
  std::vector<double> dist(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    moved[i] = t * source[i];
    const auto hit = tree.nearest(moved[i]);
    nn[i] = hit.index;
    dist[i] = std::sqrt(hit.squared_distance);
  }
  std::vector<double> sorted = dist;
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  const double cutoff = rejection_factor * *mid;

  Correspondences c;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (dist[i] > cutoff) continue;
    c.src.push_back(moved[i]);
    c.dst.push_back(target[nn[i]]);
    sum_sq += dist[i] * dist[i];
  }
  c.rmse = c.src.empty() ? 0.0 : std::sqrt(sum_sq / static_cast<double>(c.src.size()));
  return c;
}

}  // namespace detail

/**
 * @brief Point-to-point ICP from `source` to `target`.
 *
 * Iterates nearest-neighbour matching (pairs beyond 3× the median distance
 * are rejected) and closed-form rigid fits until the RMSE changes by less
 * than `tol` or `max_iter` is reached. An update that would raise the RMSE
 * is not taken. Rank-deficient correspondences return `init` unconverged.
 */
inline IcpResult icp_register(std::span<const Vec3> source, std::span<const Vec3> target,
                              const PoseSE3& init, int max_iter = 50, double tol = 1e-5) {
  IcpResult result;
  result.transform = init;
  if (source.size() < 3 || target.size() < 3) return result;

  constexpr double kRejection = 3.0;
  const KdTree3 tree(target);
  auto current = detail::match(source, target, tree, init, kRejection);
  result.rmse = current.rmse;

  for (int it = 1; it <= max_iter; ++it) {
    const auto delta = fit_rigid_transform(current.src, current.dst);
    if (!delta) {
      result.transform = init;
      result.converged = false;
      return result;
    }
    const PoseSE3 candidate = *delta * result.transform;
    auto next = detail::match(source, target, tree, candidate, kRejection);
    result.iterations = it;
    if (next.rmse > current.rmse) {
      result.converged = true;
      return result;
    }
    const double change = current.rmse - next.rmse;
    result.transform = candidate;
    result.rmse = next.rmse;
    current = std::move(next);
    if (change < tol) {
      result.converged = true;
      return result;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Object reconstruction

struct ColoredCloud {
  std::vector<Vec3> points;
  std::vector<std::optional<Rgb8>> colors;  // empty, or one per point
};

/// Input ∪ its mirror image over the plane y = 0. Coincident points are kept.
inline ColoredCloud symmetrize(const ColoredCloud& cloud) {
  ColoredCloud out = cloud;
  for (const auto& p : cloud.points) out.points.emplace_back(p.x(), -p.y(), p.z());
  if (!cloud.colors.empty()) out.colors.insert(out.colors.end(), cloud.colors.begin(), cloud.colors.end());
  return out;
}

inline std::vector<Vec3> symmetrize(std::span<const Vec3> points) {
  return symmetrize(ColoredCloud{{points.begin(), points.end()}, {}}).points;
}

/// One scan's view of a track, in the box canonical frame.
struct ObjectFrame {
  double timestamp = 0.0;
  std::size_t scan_index = 0;
  PoseSE3 box_pose;  // canonical → world, from the annotation
  std::vector<Vec3> points;
  std::vector<std::optional<Rgb8>> colors;
  Vec3 sensor_origin = Vec3::Zero();
  std::optional<Vec3> camera_center;
};

/**
 * @brief Points labelled `track_id` in each scan whose nearest annotation set
 * contains that track, expressed in the box canonical frame.
 *
 * `viewpoints` optionally gives the coloring camera center per scan (world).
 */
inline std::vector<ObjectFrame> extract_object_frames(std::span<const LidarScan> scans,
                                                      std::span<const BoxAnnotation> boxes,
                                                      TrackId track_id,
                                                      std::span<const std::optional<Vec3>> viewpoints = {}) {
  if (std::none_of(boxes.begin(), boxes.end(), [&](const auto& b) { return b.track_id == track_id; })) {
    throw Error(ErrorKind::kNotFound, "track " + std::to_string(track_id));
  }
  std::vector<ObjectFrame> frames;
  for (std::size_t si = 0; si < scans.size(); ++si) {
    const auto& scan = scans[si];
    const auto annotations = boxes_at(boxes, scan.timestamp);
    const auto box = std::find_if(annotations.begin(), annotations.end(),
                                  [&](const auto& b) { return b.track_id == track_id; });
    if (box == annotations.end()) continue;
    if (!scan.point_object_ids) {
      throw Error(ErrorKind::kValidation, "scan " + std::to_string(si) + " is not box-associated");
    }
    ObjectFrame f;
    f.timestamp = scan.timestamp;
    f.scan_index = si;
    f.box_pose = box->pose();
    const PoseSE3 canonical_from_world = f.box_pose.inverse();
    for (std::size_t i = 0; i < scan.points.size(); ++i) {
      if ((*scan.point_object_ids)[i] != track_id) continue;
      f.points.push_back(canonical_from_world * scan.world_point(i));
      if (scan.point_colors) f.colors.push_back((*scan.point_colors)[i]);
    }
    f.sensor_origin = canonical_from_world * scan.sensor_pose.translation;
    if (si < viewpoints.size() && viewpoints[si]) f.camera_center = canonical_from_world * *viewpoints[si];
    frames.push_back(std::move(f));
  }
  return frames;
}

struct ObjectModel {
  TrackId track_id = 0;
  SemanticClass cls = SemanticClass::kVehicle;
  SurfelMap canonical_map;
  std::map<double, PoseSE3> pose_track;  // timestamp → object→world
  std::vector<Vec3> points;  // merged canonical cloud the map was built from
};

/// Object maps use half the scene voxel size.
inline SurfelConfig object_surfel_config(const SurfelConfig& scene_config) {
  SurfelConfig c = scene_config;
  c.voxel_size = scene_config.voxel_size / 2.0;
  return c;
}

namespace detail {

inline ObservationBatch mirrored(const ObservationBatch& b) {
  auto flip = [](const Vec3& p) { return Vec3(p.x(), -p.y(), p.z()); };
  ObservationBatch m;
  m.points.reserve(b.points.size());
  for (const auto& p : b.points) m.points.push_back(flip(p));
  m.colors = b.colors;
  m.sensor_origin = flip(b.sensor_origin);
  if (b.camera_center) m.camera_center = flip(*b.camera_center);
  return m;
}

inline SemanticClass track_class(std::span<const BoxAnnotation> boxes, TrackId track_id) {
  for (const auto& b : boxes) {
    if (b.track_id == track_id) return b.cls;
  }
  throw Error(ErrorKind::kNotFound, "track " + std::to_string(track_id));
}

}  // namespace detail

/**
 * @brief Rigid (vehicle) model: chronological ICP accumulation in the box
 * frame, mirror completion, then a surfel map in the canonical frame.
 *
 * Each frame is registered (init = identity) against everything merged so
 * far. The stored pose for a frame is the annotation pose composed with the
 * inverse ICP correction, so it maps the model frame to world.
 */
inline ObjectModel build_object_model(std::span<const LidarScan> scans, std::span<const BoxAnnotation> boxes,
                                      TrackId track_id, const SurfelConfig& object_config,
                                      std::span<const std::optional<Vec3>> viewpoints = {},
                                      int icp_max_iter = 50, double icp_tol = 1e-5) {
  const SemanticClass cls = detail::track_class(boxes, track_id);
  if (cls != SemanticClass::kVehicle) {
    throw Error(ErrorKind::kValidation,
                "track " + std::to_string(track_id) + " is a " + to_string(cls) + ", not a vehicle");
  }
  const auto frames = extract_object_frames(scans, boxes, track_id, viewpoints);
  if (std::all_of(frames.begin(), frames.end(), [](const auto& f) { return f.points.empty(); })) {
    throw Error(ErrorKind::kEmptyModel, "track " + std::to_string(track_id) + " has no points");
  }

  ObjectModel model;
  model.track_id = track_id;
  model.cls = cls;
  std::vector<ObservationBatch> batches;
  std::vector<Vec3> merged;
  for (const auto& f : frames) {
    PoseSE3 correction;
    if (!merged.empty() && f.points.size() >= 3 && merged.size() >= 3) {
      correction = icp_register(f.points, merged, PoseSE3::identity(), icp_max_iter, icp_tol).transform;
    }
    model.pose_track[f.timestamp] = f.box_pose * correction.inverse();
    if (f.points.empty()) continue;

    ObservationBatch b;
    b.points.reserve(f.points.size());
    for (const auto& p : f.points) b.points.push_back(correction * p);
    b.colors = f.colors;
    b.sensor_origin = correction * f.sensor_origin;
    if (f.camera_center) b.camera_center = correction * *f.camera_center;
    merged.insert(merged.end(), b.points.begin(), b.points.end());
    batches.push_back(std::move(b));
  }

  // Observed points take texel priority over their mirror images.
  const std::size_t n_observed = batches.size();
  for (std::size_t i = 0; i < n_observed; ++i) batches.push_back(detail::mirrored(batches[i]));

  model.points = symmetrize(std::span<const Vec3>(merged));
  model.canonical_map = build_surfels(batches, object_config, cls, track_id);
  return model;
}

/// Single-scan model for a deformable object; no registration, no mirroring.
inline ObjectModel build_pedestrian_model(const LidarScan& scan, const BoxAnnotation& box,
                                          const SurfelConfig& object_config,
                                          std::optional<Vec3> viewpoint = std::nullopt) {
  if (box.cls != SemanticClass::kPedestrian && box.cls != SemanticClass::kCyclist) {
    throw Error(ErrorKind::kValidation, "track " + std::to_string(box.track_id) + " is not a pedestrian/cyclist");
  }
  if (!scan.point_object_ids) throw Error(ErrorKind::kValidation, "scan is not box-associated");
  const PoseSE3 box_pose = box.pose();
  const PoseSE3 canonical_from_world = box_pose.inverse();
  ObservationBatch b;
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    if ((*scan.point_object_ids)[i] != box.track_id) continue;
    b.points.push_back(canonical_from_world * scan.world_point(i));
    if (scan.point_colors) b.colors.push_back((*scan.point_colors)[i]);
  }
  if (b.points.empty()) {
    throw Error(ErrorKind::kEmptyModel, "track " + std::to_string(box.track_id) + " has no points in scan");
  }
  b.sensor_origin = canonical_from_world * scan.sensor_pose.translation;
  if (viewpoint) b.camera_center = canonical_from_world * *viewpoint;

  ObjectModel model;
  model.track_id = box.track_id;
  model.cls = box.cls;
  model.pose_track[scan.timestamp] = box_pose;
  model.points = b.points;
  model.canonical_map = build_surfels(std::span<const ObservationBatch>(&b, 1), object_config, box.cls, box.track_id);
  return model;
}

// ---------------------------------------------------------------------------
// Serialization: <stem>.smap + <stem>.track.json

inline void write_object_model(const ObjectModel& model, const std::filesystem::path& dir,
                               const std::string& stem) {
  std::filesystem::create_directories(dir);
  write_smap(model.canonical_map, dir / (stem + ".smap"));
  nlohmann::json j;
  j["track_id"] = model.track_id;
  j["class"] = to_string(model.cls);
  j["poses"] = nlohmann::json::array();
  for (const auto& [t, pose] : model.pose_track) {
    j["poses"].push_back({{"timestamp", t}, {"pose", pose.to_rows()}});
  }
  detail::write_json(dir / (stem + ".track.json"), j);
}

inline ObjectModel read_object_model(const std::filesystem::path& dir, const std::string& stem) {
  ObjectModel model;
  model.canonical_map = read_smap(dir / (stem + ".smap"));
  const auto j = detail::read_json(dir / (stem + ".track.json"));
  try {
    model.track_id = j.at("track_id").get<TrackId>();
    model.cls = parse_box_class(j.at("class").get<std::string>());
    for (const auto& entry : j.at("poses")) {
      model.pose_track[entry.at("timestamp").get<double>()] =
          detail::pose_from_json(entry.at("pose"), stem + ".track.json");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, stem + ".track.json: " + e.what());
  }
  return model;
}

}  // namespace surfelsim

#endif  // SURFELSIM_DYNAMIC_OBJECTS_HPP
