#ifndef SURFELSIM_RENDERER_HPP
#define SURFELSIM_RENDERER_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "surfelsim/binary_io.hpp"
#include "surfelsim/distance_transform.hpp"
#include "surfelsim/dynamic_objects.hpp"
#include "surfelsim/error.hpp"
#include "surfelsim/image.hpp"
#include "surfelsim/pose.hpp"
#include "surfelsim/scene_io.hpp"
#include "surfelsim/surfel_map.hpp"

namespace surfelsim {

struct CameraSpec {
  PoseSE3 pose;  // camera → world
  Intrinsics intrinsics;
  double near_clip = 0.1;

  static CameraSpec from_frame(const CameraFrame& f, double near_clip = 0.1) {
    return {f.pose, f.intrinsics, near_clip};
  }
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Pinhole projection of a world point; nullopt when depth ≤ near_clip.
inline std::optional<Projection> project(const Vec3& world, const CameraSpec& cam) {
  const Vec3 p = cam.pose.inverse() * world;
  if (p.z() <= cam.near_clip) return std::nullopt;
  const auto& k = cam.intrinsics;
  return Projection{k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy, p.z()};
}

inline constexpr std::uint32_t kNoSurfel = std::numeric_limits<std::uint32_t>::max();

/// Per-pixel channels of one surfel render. Empty pixels: depth +∞, index kNoSurfel.
struct RenderOutput {
  RgbImage rgb;
  Image<std::uint8_t, 1> semantic;
  Image<std::uint32_t, 1> instance;
  FloatImage depth;
  Image<std::uint32_t, 1> surfel_index;
  FloatImage distance;
  double coverage_ratio = 0.0;

  int width() const { return rgb.width; }
  int height() const { return rgb.height; }
  bool covered(int x, int y) const { return surfel_index.at(x, y) != kNoSurfel; }
};

/// Fraction of pixels holding a surfel fragment.
inline double coverage_ratio(const RenderOutput& out) {
  const std::size_t n = out.surfel_index.pixel_count();
  if (n == 0) return 0.0;
  std::size_t covered = 0;
  for (auto idx : out.surfel_index.data) covered += idx != kNoSurfel;
  return static_cast<double>(covered) / static_cast<double>(n);
}

/// An object model instance in the scene. `timestamp` picks among per-scan models of one track.
struct Placement {
  TrackId track_id = 0;
  PoseSE3 pose;  // object → world
  std::optional<double> timestamp;
};

/// Called for every rasterized fragment (before the depth test); for instrumentation.
using FragmentObserver = std::function<void(int x, int y, double depth, std::uint32_t surfel)>;

namespace detail {

// Resolves a placement to a model: track match, then the model whose pose track
// holds the timestamp nearest to the requested one.
inline const ObjectModel& resolve_placement(std::span<const ObjectModel> models, const Placement& p) {
  const ObjectModel* best = nullptr;
  double best_dt = std::numeric_limits<double>::infinity();
  for (const auto& m : models) {
    if (m.track_id != p.track_id) continue;
    if (!p.timestamp) return m;
    for (const auto& [t, pose] : m.pose_track) {
      const double dt = std::abs(t - *p.timestamp);
      if (dt < best_dt) {
        best_dt = dt;
        best = &m;
      }
    }
    if (!best) best = &m;
  }
  if (!best) throw Error(ErrorKind::kNotFound, "no model for placed track " + std::to_string(p.track_id));
  return *best;
}

// Nearest valid bin for a texel cell; ties go to the lower bin.
inline const Rgb8* select_texel(const TexturedSurfel& s, int bin, int row, int col, const SurfelConfig& c) {
  const int k = c.texel_grid;
  for (int offset = 0; offset < c.distance_bins; ++offset) {
    for (int b : {bin - offset, bin + offset}) {
      if (b < 0 || b >= c.distance_bins) continue;
      const std::size_t slot = texel_slot(b, row, col, k);
      if (s.texel_valid[slot]) return &s.texels[slot];
      if (offset == 0) break;
    }
  }
  return nullptr;
}

struct FrameBuffers {
  int width;
  int height;
  std::vector<double> depth;
  std::vector<std::uint32_t> index;
  std::vector<Rgb8> color;
  std::vector<std::uint8_t> semantic;
  std::vector<std::uint32_t> instance;

  FrameBuffers(int w, int h)
      : width(w), height(h),
        depth(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity()),
        index(static_cast<std::size_t>(w) * h, kNoSurfel),
        color(static_cast<std::size_t>(w) * h, Rgb8{0, 0, 0}),
        semantic(static_cast<std::size_t>(w) * h, 0),
        instance(static_cast<std::size_t>(w) * h, 0) {}
};

struct Fragment {
  std::uint32_t surfel;
  Rgb8 color;
  std::uint8_t semantic;
  std::uint32_t instance;
};

struct ScreenVertex {
  double x;
  double y;
  double inv_z;
};

inline bool is_top_left(const ScreenVertex& a, const ScreenVertex& b) {
  return (a.y == b.y && b.x > a.x) || b.y < a.y;
}

inline double edge(const ScreenVertex& a, const ScreenVertex& b, double px, double py) {
  return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

// Rasterizes one triangle at integer pixel centers with a top-left fill rule
// and perspective-correct depth (1/z interpolated in screen space).
inline void raster_triangle(ScreenVertex v0, ScreenVertex v1, ScreenVertex v2, const Fragment& frag,
                            FrameBuffers& fb, const FragmentObserver* observer) {
  double area = edge(v0, v1, v2.x, v2.y);
  if (area == 0.0 || !std::isfinite(area)) return;
  if (area < 0) {
    std::swap(v1, v2);
    area = -area;
  }
  const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({v0.x, v1.x, v2.x}))));
  const int x1 = std::min(fb.width - 1, static_cast<int>(std::floor(std::max({v0.x, v1.x, v2.x}))));
  const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({v0.y, v1.y, v2.y}))));
  const int y1 = std::min(fb.height - 1, static_cast<int>(std::floor(std::max({v0.y, v1.y, v2.y}))));
  if (x0 > x1 || y0 > y1) return;

  const bool tl0 = is_top_left(v1, v2), tl1 = is_top_left(v2, v0), tl2 = is_top_left(v0, v1);
  constexpr double kTie = 1e-6;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double e0 = edge(v1, v2, x, y);
      const double e1 = edge(v2, v0, x, y);
      const double e2 = edge(v0, v1, x, y);
      if (e0 < 0 || e1 < 0 || e2 < 0) continue;
      if ((e0 == 0 && !tl0) || (e1 == 0 && !tl1) || (e2 == 0 && !tl2)) continue;
      const double inv_z = (e0 * v0.inv_z + e1 * v1.inv_z + e2 * v2.inv_z) / area;
      const double z = 1.0 / inv_z;
      if (observer && *observer) (*observer)(x, y, z, frag.surfel);
      const std::size_t i = static_cast<std::size_t>(y) * fb.width + x;
      const double cur = fb.depth[i];
      const bool wins = z < cur - kTie || (std::abs(z - cur) <= kTie && frag.surfel < fb.index[i]);
      if (!wins) continue;
      fb.depth[i] = z;
      fb.index[i] = frag.surfel;
      fb.color[i] = frag.color;
      fb.semantic[i] = frag.semantic;
      fb.instance[i] = frag.instance;
    }
  }
}

// Rasterizes all visible texel quads of one surfel posed by `model_to_world`.
inline void raster_surfel(const TexturedSurfel& s, const SurfelConfig& config, const PoseSE3& model_to_world,
                          const CameraSpec& cam, const PoseSE3& cam_from_world, std::uint32_t surfel_index,
                          FrameBuffers& fb, const FragmentObserver* observer) {
  const Vec3 center = model_to_world * s.centroid;
  const Vec3 normal = model_to_world.rotation * s.normal;
  const Vec3 ray = center - cam.pose.translation;
  if (normal.dot(ray) >= 0) return;  // back face

  const int bin = distance_bin(ray.norm(), config);
  const DiskBasis basis = disk_basis(s.normal);
  const Vec3 c_cam = cam_from_world * center;
  const Vec3 u_cam = cam_from_world.rotation * (model_to_world.rotation * basis.u);
  const Vec3 w_cam = cam_from_world.rotation * (model_to_world.rotation * basis.w);
  const auto& k = cam.intrinsics;
  const int grid = config.texel_grid;
  const double r = s.radius;
  const double cell = 2.0 * r / grid;

  auto to_screen = [&](double a, double b, ScreenVertex& out) {
    const Vec3 p = c_cam + a * u_cam + b * w_cam;
    if (p.z() <= cam.near_clip) return false;
    out = {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy, 1.0 / p.z()};
    return true;
  };

  // Corner grid shared by adjacent quads so that shared edges are bit-identical.
  std::vector<ScreenVertex> corners(static_cast<std::size_t>(grid + 1) * (grid + 1));
  std::vector<std::uint8_t> ok(corners.size());
  for (int row = 0; row <= grid; ++row) {
    for (int col = 0; col <= grid; ++col) {
      const std::size_t i = static_cast<std::size_t>(row) * (grid + 1) + col;
      ok[i] = to_screen(-r + col * cell, -r + row * cell, corners[i]);
    }
  }

  for (int row = 0; row < grid; ++row) {
    for (int col = 0; col < grid; ++col) {
      const Rgb8* texel = select_texel(s, bin, row, col, config);
      if (!texel) continue;
      const std::size_t i00 = static_cast<std::size_t>(row) * (grid + 1) + col;
      const std::size_t i01 = i00 + 1;
      const std::size_t i10 = i00 + (grid + 1);
      const std::size_t i11 = i10 + 1;
      if (!ok[i00] || !ok[i01] || !ok[i10] || !ok[i11]) continue;
      const Fragment frag{surfel_index, *texel, static_cast<std::uint8_t>(s.semantic_class), s.object_id};
      raster_triangle(corners[i00], corners[i01], corners[i11], frag, fb, observer);
      raster_triangle(corners[i00], corners[i11], corners[i10], frag, fb, observer);
    }
  }
}

}  // namespace detail

/**
 * @brief Z-buffered surfel rasterization from `camera`.
 *
 * Surfel indices run over the static map (in voxel order) followed by each
 * placement's model in placement order. Each back-face-culled surfel is drawn
 * as its k×k texel quads using the texel grid of the distance bin for the
 * centroid-to-camera distance (falling back to the nearest observed bin per
 * cell). Depth ties within 1e-6 m go to the smaller surfel index.
 */
inline RenderOutput render(const SurfelMap& static_map, std::span<const ObjectModel> models,
                           std::span<const Placement> placements, const CameraSpec& camera,
                           const FragmentObserver& observer = {}) {
  const int w = camera.intrinsics.width, h = camera.intrinsics.height;
  detail::FrameBuffers fb(w, h);
  const PoseSE3 cam_from_world = camera.pose.inverse();
  const FragmentObserver* obs = observer ? &observer : nullptr;

  std::uint32_t index = 0;
  for (const auto& [key, s] : static_map.surfels) {
    detail::raster_surfel(s, static_map.config, PoseSE3::identity(), camera, cam_from_world, index++, fb, obs);
  }
  for (const auto& placement : placements) {
    const auto& model = detail::resolve_placement(models, placement);
    for (const auto& [key, s] : model.canonical_map.surfels) {
      detail::raster_surfel(s, model.canonical_map.config, placement.pose, camera, cam_from_world, index++, fb,
                            obs);
    }
  }

  RenderOutput out;
  out.rgb = RgbImage(w, h);
  out.semantic = Image<std::uint8_t, 1>(w, h);
  out.instance = Image<std::uint32_t, 1>(w, h);
  out.depth = FloatImage(w, h, std::numeric_limits<float>::infinity());
  out.surfel_index = Image<std::uint32_t, 1>(w, h, kNoSurfel);
  MaskImage empty(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (fb.index[i] == kNoSurfel) continue;
      for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = fb.color[i][c];
      out.semantic.at(x, y) = fb.semantic[i];
      out.instance.at(x, y) = fb.instance[i];
      out.depth.at(x, y) = static_cast<float>(fb.depth[i]);
      out.surfel_index.at(x, y) = fb.index[i];
      empty.at(x, y) = 0;
    }
  }
  out.distance = distance_map(empty);
  out.coverage_ratio = coverage_ratio(out);
  return out;
}

// ---------------------------------------------------------------------------
// Export

namespace detail {

inline void write_f32(const std::filesystem::path& path, const FloatImage& img) {
  ByteWriter w;
  for (float v : img.data) w.put<float>(v);
  w.save(path);
}

}  // namespace detail

inline FloatImage read_f32(const std::filesystem::path& path, int width, int height) {
  auto r = ByteReader::from_file(path);
  FloatImage img(width, height);
  if (r.remaining() != img.data.size() * sizeof(float)) {
    throw Error(ErrorKind::kFormat, path.string() + ": size does not match " + std::to_string(width) + "x" +
                                        std::to_string(height));
  }
  for (auto& v : img.data) v = r.get<float>();
  return img;
}

/**
 * @brief Writes `<stem>.rgb.png`, `.sem.png` (8-bit class ids), `.inst.png`
 * (16-bit ids, saturating at 65535), `.depth.f32` and `.dist.f32` into `dir`.
 */
inline void write_render(const RenderOutput& out, const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  write_png(dir / (stem + ".rgb.png"), out.rgb);
  write_png(dir / (stem + ".sem.png"), out.semantic);
  Gray16Image inst(out.width(), out.height());
  for (std::size_t i = 0; i < inst.data.size(); ++i) {
    inst.data[i] = static_cast<std::uint16_t>(std::min<std::uint32_t>(out.instance.data[i], 65535u));
  }
  write_png(dir / (stem + ".inst.png"), inst);
  detail::write_f32(dir / (stem + ".depth.f32"), out.depth);
  detail::write_f32(dir / (stem + ".dist.f32"), out.distance);
}

}  // namespace surfelsim

#endif  // SURFELSIM_RENDERER_HPP
