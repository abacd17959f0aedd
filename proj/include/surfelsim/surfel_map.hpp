#ifndef SURFELSIM_SURFEL_MAP_HPP
#define SURFELSIM_SURFEL_MAP_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "surfelsim/binary_io.hpp"
#include "surfelsim/error.hpp"
#include "surfelsim/image.hpp"
#include "surfelsim/pose.hpp"
#include "surfelsim/scene_io.hpp"

namespace surfelsim {

/// Voxel size v, texel grid k, distance bins n and the n+1 bin edges.
struct SurfelConfig {
  double voxel_size = 0.2;
  int texel_grid = 5;
  int distance_bins = 10;
  std::vector<double> bin_edges = linear_edges(10, 50.0);

  static std::vector<double> linear_edges(int n, double max_distance) {
    std::vector<double> e(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) e[i] = max_distance * i / n;
    return e;
  }

  double radius() const { return std::numbers::sqrt3 * voxel_size; }
  std::size_t texel_count() const {
    return static_cast<std::size_t>(distance_bins) * texel_grid * texel_grid;
  }

  void validate() const {
    if (!(voxel_size > 0)) throw Error(ErrorKind::kConfig, "voxel_size must be > 0");
    if (texel_grid < 1 || texel_grid % 2 == 0) {
      throw Error(ErrorKind::kConfig, "texel_grid must be odd and >= 1");
    }
    if (distance_bins < 1) throw Error(ErrorKind::kConfig, "distance_bins must be >= 1");
    if (bin_edges.size() != static_cast<std::size_t>(distance_bins) + 1) {
      throw Error(ErrorKind::kConfig, "bin_edges must have distance_bins + 1 entries");
    }
    if (bin_edges.front() != 0.0) throw Error(ErrorKind::kConfig, "first bin edge must be 0");
    for (std::size_t i = 1; i < bin_edges.size(); ++i) {
      if (!(bin_edges[i] > bin_edges[i - 1])) {
        throw Error(ErrorKind::kConfig, "bin_edges must be strictly ascending");
      }
    }
  }
};

using VoxelKey = std::array<std::int32_t, 3>;

struct TexturedSurfel {
  VoxelKey voxel{};
  Vec3 centroid = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double radius = 0.0;
  SemanticClass semantic_class = SemanticClass::kBackground;
  TrackId object_id = 0;
  // n × k × k, row-major (bin, row, col).
  std::vector<Rgb8> texels;
  std::vector<std::uint8_t> texel_valid;
  // Diagnostics; not serialized.
  std::uint32_t point_count = 0;
  bool degenerate = false;
};

inline std::size_t texel_slot(int bin, int row, int col, int k) {
  return (static_cast<std::size_t>(bin) * k + row) * k + col;
}

struct SurfelMap {
  SurfelConfig config;
  std::map<VoxelKey, TexturedSurfel> surfels;

  std::size_t size() const { return surfels.size(); }
  bool empty() const { return surfels.empty(); }
};

// ---------------------------------------------------------------------------
// Geometry primitives

/// floor(p / v) componentwise, corrected so that key·v ≤ p < (key+1)·v holds in floating point.
inline VoxelKey voxel_of(const Vec3& p, double v) {
  VoxelKey key{};
  for (int i = 0; i < 3; ++i) {
    double q = std::floor(p[i] / v);
    if (q * v > p[i]) q -= 1.0;
    else if ((q + 1.0) * v <= p[i]) q += 1.0;
    key[i] = static_cast<std::int32_t>(q);
  }
  return key;
}

struct SurfelGeometry {
  Vec3 centroid = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double radius = 0.0;
  bool degenerate = false;
};

/**
 * @brief Mean and smallest-eigenvalue normal of the points in one voxel.
 *
 * The normal is oriented towards `sensor_origin` (the first observer). With
 * fewer than 3 points, or points spanning less than a plane, the normal is
 * the negated viewing ray and the result is flagged degenerate.
 */
inline SurfelGeometry fit_surfel_geometry(std::span<const Vec3> points, const Vec3& sensor_origin,
                                          const SurfelConfig& config) {
  SurfelGeometry g;
  g.radius = config.radius();
  for (const auto& p : points) g.centroid += p;
  g.centroid /= static_cast<double>(points.size());

  Vec3 ray = g.centroid - sensor_origin;
  if (ray.norm() > 0) ray.normalize();
  else ray = Vec3::UnitZ();

  if (points.size() >= 3) {
    Mat3 cov = Mat3::Zero();
    for (const auto& p : points) {
      const Vec3 d = p - g.centroid;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(points.size());
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const auto& ev = eig.eigenvalues();
    // Collinear points leave the normal undetermined within a plane.
    if (ev(1) > 1e-6 * ev(2) && ev(1) > 1e-18) {
      g.normal = eig.eigenvectors().col(0).normalized();
      if (g.normal.dot(ray) > 0) g.normal = -g.normal;
      return g;
    }
  }
  g.normal = -ray;
  g.degenerate = true;
  return g;
}

/// In-plane orthonormal basis (u, w) of a disk with the given unit normal.
struct DiskBasis {
  Vec3 u;
  Vec3 w;
};

inline DiskBasis disk_basis(const Vec3& normal) {
  int axis = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(normal[i]) < std::abs(normal[axis])) axis = i;
  }
  const Vec3 e = Vec3::Unit(axis);
  const Vec3 u = normal.cross(e).normalized();
  return {u, normal.cross(u)};
}

struct TexelCell {
  int row = 0;
  int col = 0;
  bool operator==(const TexelCell&) const = default;
};

/**
 * @brief k×k cell of the square [−r, r]² on the disk plane holding `point`.
 *
 * Columns run along the basis vector u, rows along w.
 */
inline std::optional<TexelCell> texel_index(const Vec3& point, const Vec3& centroid,
                                            const Vec3& normal, double radius, int k) {
  const DiskBasis b = disk_basis(normal);
  const Vec3 d = point - centroid;
  const double cell = 2.0 * radius / k;
  const double col = std::floor((d.dot(b.u) + radius) / cell);
  const double row = std::floor((d.dot(b.w) + radius) / cell);
  if (col < 0 || row < 0 || col >= k || row >= k) return std::nullopt;
  return TexelCell{static_cast<int>(row), static_cast<int>(col)};
}

inline std::optional<TexelCell> texel_index(const Vec3& point, const TexturedSurfel& s, int k) {
  return texel_index(point, s.centroid, s.normal, s.radius, k);
}

/// Half-open bin [edge_i, edge_{i+1}); distances past the last edge clamp to n−1.
inline int distance_bin(double distance, const SurfelConfig& config) {
  const auto& e = config.bin_edges;
  const auto it = std::upper_bound(e.begin(), e.end(), distance);
  const int idx = static_cast<int>(it - e.begin()) - 1;
  return std::clamp(idx, 0, config.distance_bins - 1);
}

// ---------------------------------------------------------------------------
// Map construction

/// One scan's points expressed in the map frame.
struct ObservationBatch {
  std::vector<Vec3> points;
  std::vector<std::optional<Rgb8>> colors;  // empty, or one per point
  Vec3 sensor_origin = Vec3::Zero();
  std::optional<Vec3> camera_center;  // viewpoint that produced `colors`
};

/**
 * @brief Voxelizes all batches, fits one surfel per occupied voxel, then colors
 * texels in batch order. A (bin, cell) texel keeps the first color written.
 */
inline SurfelMap build_surfels(std::span<const ObservationBatch> batches, const SurfelConfig& config,
                               SemanticClass cls, TrackId object_id) {
  config.validate();
  const double v = config.voxel_size;
  const int k = config.texel_grid;

  struct Accum {
    std::vector<Vec3> points;
    Vec3 first_sensor;
  };
  std::map<VoxelKey, Accum> voxels;
  for (const auto& batch : batches) {
    for (const auto& p : batch.points) {
      auto [it, inserted] = voxels.try_emplace(voxel_of(p, v));
      if (inserted) it->second.first_sensor = batch.sensor_origin;
      it->second.points.push_back(p);
    }
  }

  SurfelMap map;
  map.config = config;
  for (const auto& [key, acc] : voxels) {
    const auto g = fit_surfel_geometry(acc.points, acc.first_sensor, config);
    TexturedSurfel s;
    s.voxel = key;
    s.centroid = g.centroid;
    s.normal = g.normal;
    s.radius = g.radius;
    s.degenerate = g.degenerate;
    s.semantic_class = cls;
    s.object_id = object_id;
    s.texels.assign(config.texel_count(), Rgb8{0, 0, 0});
    s.texel_valid.assign(config.texel_count(), 0);
    s.point_count = static_cast<std::uint32_t>(acc.points.size());
    map.surfels.emplace(key, std::move(s));
  }

  for (const auto& batch : batches) {
    if (!batch.camera_center || batch.colors.empty()) continue;
    for (std::size_t i = 0; i < batch.points.size(); ++i) {
      if (!batch.colors[i]) continue;
      auto& s = map.surfels.at(voxel_of(batch.points[i], v));
      const auto cell = texel_index(batch.points[i], s, k);
      if (!cell) continue;
      const int bin = distance_bin((s.centroid - *batch.camera_center).norm(), config);
      const std::size_t slot = texel_slot(bin, cell->row, cell->col, k);
      if (s.texel_valid[slot]) continue;
      s.texel_valid[slot] = 1;
      s.texels[slot] = *batch.colors[i];
    }
  }
  return map;
}

/// Camera center of the nearest-in-time frame per scan (the frame that colored it).
inline std::vector<std::optional<Vec3>> coloring_viewpoints(std::span<const LidarScan> scans,
                                                            std::span<const CameraFrame> frames) {
  std::vector<std::optional<Vec3>> out(scans.size());
  for (std::size_t i = 0; i < scans.size(); ++i) {
    if (const auto idx = nearest_frame_index(frames, scans[i].timestamp)) {
      out[i] = frames[*idx].pose.translation;
    }
  }
  return out;
}

struct StaticBuildResult {
  SurfelMap map;
  std::map<TrackId, std::vector<Vec3>> object_points;  // world frame, scan order
};

/**
 * @brief Builds the static map from points with object id 0 and routes all
 * other points, untouched, to per-object sets.
 *
 * `viewpoints[i]` is the camera center that colored scan i (see
 * coloring_viewpoints); scans without one contribute geometry only.
 */
inline StaticBuildResult build_surfel_map(std::span<const LidarScan> scans, const SurfelConfig& config,
                                          std::span<const std::optional<Vec3>> viewpoints) {
  if (viewpoints.size() != scans.size()) {
    throw Error(ErrorKind::kValidation, "one viewpoint per scan is required");
  }
  StaticBuildResult result;
  std::vector<ObservationBatch> batches;
  batches.reserve(scans.size());
  for (std::size_t si = 0; si < scans.size(); ++si) {
    const auto& scan = scans[si];
    ObservationBatch b;
    b.sensor_origin = scan.sensor_pose.translation;
    b.camera_center = viewpoints[si];
    const bool has_colors = scan.point_colors.has_value();
    for (std::size_t i = 0; i < scan.points.size(); ++i) {
      const Vec3 w = scan.world_point(i);
      const TrackId id = scan.point_object_ids ? (*scan.point_object_ids)[i] : 0;
      if (id != 0) {
        result.object_points[id].push_back(w);
        continue;
      }
      b.points.push_back(w);
      if (has_colors) b.colors.push_back((*scan.point_colors)[i]);
    }
    batches.push_back(std::move(b));
  }
  result.map = build_surfels(batches, config, SemanticClass::kBackground, 0);
  return result;
}

// ---------------------------------------------------------------------------
// Serialization (map.smap)

inline void write_smap(const SurfelMap& map, const std::filesystem::path& path) {
  const auto& c = map.config;
  ByteWriter w;
  w.bytes("SMAP");
  w.put<std::uint32_t>(1);  // format version
  w.put<double>(c.voxel_size);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.texel_grid));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.distance_bins));
  for (double e : c.bin_edges) w.put<double>(e);
  w.put<std::uint64_t>(map.surfels.size());
  const std::size_t n_texels = c.texel_count();
  for (const auto& [key, s] : map.surfels) {
    for (int i = 0; i < 3; ++i) w.put<std::int32_t>(s.voxel[i]);
    for (int i = 0; i < 3; ++i) w.put<float>(static_cast<float>(s.centroid[i]));
    for (int i = 0; i < 3; ++i) w.put<float>(static_cast<float>(s.normal[i]));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.semantic_class));
    w.put<std::uint32_t>(s.object_id);
    for (std::size_t byte = 0; byte < (n_texels + 7) / 8; ++byte) {
      std::uint8_t mask = 0;
      for (std::size_t bit = 0; bit < 8 && byte * 8 + bit < n_texels; ++bit) {
        if (s.texel_valid[byte * 8 + bit]) mask |= static_cast<std::uint8_t>(1u << bit);
      }
      w.put<std::uint8_t>(mask);
    }
    for (std::size_t t = 0; t < n_texels; ++t) {
      if (!s.texel_valid[t]) continue;
      for (auto ch : s.texels[t]) w.put<std::uint8_t>(ch);
    }
  }
  w.save(path);
}

inline SurfelMap read_smap(const std::filesystem::path& path) {
  auto r = ByteReader::from_file(path);
  if (r.bytes(4) != "SMAP") throw Error(ErrorKind::kFormat, path.string() + ": bad SMAP magic");
  if (r.get<std::uint32_t>() != 1) throw Error(ErrorKind::kFormat, path.string() + ": unknown version");
  SurfelMap map;
  auto& c = map.config;
  c.voxel_size = r.get<double>();
  c.texel_grid = static_cast<int>(r.get<std::uint32_t>());
  c.distance_bins = static_cast<int>(r.get<std::uint32_t>());
  if (c.distance_bins < 1 || c.distance_bins > 4096 || c.texel_grid > 4096) {
    throw Error(ErrorKind::kFormat, path.string() + ": implausible config block");
  }
  c.bin_edges.resize(static_cast<std::size_t>(c.distance_bins) + 1);
  for (auto& e : c.bin_edges) e = r.get<double>();
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
  const auto count = r.get<std::uint64_t>();
  const std::size_t n_texels = c.texel_count();
  for (std::uint64_t i = 0; i < count; ++i) {
    TexturedSurfel s;
    for (int j = 0; j < 3; ++j) s.voxel[j] = r.get<std::int32_t>();
    for (int j = 0; j < 3; ++j) s.centroid[j] = r.get<float>();
    for (int j = 0; j < 3; ++j) s.normal[j] = r.get<float>();
    // Stored floats are unit to ~1e-7; renormalizing those would perturb them on rewrite.
    if (std::abs(s.normal.norm() - 1.0) > 1e-6) s.normal.normalize();
    s.radius = c.radius();
    const auto cls = r.get<std::uint8_t>();
    if (cls > 3) throw Error(ErrorKind::kFormat, path.string() + ": bad semantic class");
    s.semantic_class = static_cast<SemanticClass>(cls);
    s.object_id = r.get<std::uint32_t>();
    s.texel_valid.assign(n_texels, 0);
    s.texels.assign(n_texels, Rgb8{0, 0, 0});
    for (std::size_t byte = 0; byte < (n_texels + 7) / 8; ++byte) {
      const auto mask = r.get<std::uint8_t>();
      for (std::size_t bit = 0; bit < 8 && byte * 8 + bit < n_texels; ++bit) {
        s.texel_valid[byte * 8 + bit] = (mask >> bit) & 1u;
      }
    }
    for (std::size_t t = 0; t < n_texels; ++t) {
      if (!s.texel_valid[t]) continue;
      for (auto& ch : s.texels[t]) ch = r.get<std::uint8_t>();
    }
    const VoxelKey key = s.voxel;
    if (!map.surfels.emplace(key, std::move(s)).second) {
      throw Error(ErrorKind::kFormat, path.string() + ": duplicate voxel");
    }
  }
  if (r.remaining() != 0) throw Error(ErrorKind::kFormat, path.string() + ": trailing bytes");
  return map;
}

}  // namespace surfelsim

#endif  // SURFELSIM_SURFEL_MAP_HPP
