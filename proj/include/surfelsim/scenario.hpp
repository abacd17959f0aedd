#ifndef SURFELSIM_SCENARIO_HPP
#define SURFELSIM_SCENARIO_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "surfelsim/dynamic_objects.hpp"
#include "surfelsim/error.hpp"
#include "surfelsim/image.hpp"
#include "surfelsim/pose.hpp"
#include "surfelsim/renderer.hpp"
#include "surfelsim/scene_io.hpp"

namespace surfelsim {

// ---------------------------------------------------------------------------
// Randomness

/// splitmix64 finalizer; derives independent per-stream seeds from one base seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Uniform [0, 1) from the top 53 bits; identical on every standard library.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// ---------------------------------------------------------------------------
// Collision

/**
 * @brief Bird's-eye oriented-rectangle overlap (separating axis test) plus
 * vertical interval overlap. Touching counts as a collision.
 */
inline bool check_collision(const BoxAnnotation& a, const BoxAnnotation& b) {
  const double za0 = a.center.z() - 0.5 * a.dims.z(), za1 = a.center.z() + 0.5 * a.dims.z();
  const double zb0 = b.center.z() - 0.5 * b.dims.z(), zb1 = b.center.z() + 0.5 * b.dims.z();
  if (za1 < zb0 || zb1 < za0) return false;

  using V2 = Eigen::Vector2d;
  auto axes = [](const BoxAnnotation& box) {
    return std::array<V2, 2>{V2(std::cos(box.heading), std::sin(box.heading)),
                             V2(-std::sin(box.heading), std::cos(box.heading))};
  };
  const auto ax_a = axes(a), ax_b = axes(b);
  const V2 d = (b.center - a.center).head<2>();
  auto radius_on = [](const std::array<V2, 2>& ax, const BoxAnnotation& box, const V2& n) {
    return 0.5 * box.dims.x() * std::abs(ax[0].dot(n)) + 0.5 * box.dims.y() * std::abs(ax[1].dot(n));
  };
  for (const auto* set : {&ax_a, &ax_b}) {
    for (const V2& n : *set) {
      if (std::abs(d.dot(n)) > radius_on(ax_a, a, n) + radius_on(ax_b, b, n)) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Novel-view perturbation

struct PerturbConfig {
  double max_translation = 3.0;  // meters, horizontal disc radius
  double max_yaw = 0.5;          // radians
  std::uint64_t seed = 0;
  int max_attempts = 100;

  void validate() const {
    if (!(max_translation >= 0)) throw Error(ErrorKind::kConfig, "max_translation must be >= 0");
    if (!(max_yaw >= 0)) throw Error(ErrorKind::kConfig, "max_yaw must be >= 0");
    if (max_attempts < 1) throw Error(ErrorKind::kConfig, "max_attempts must be >= 1");
  }
};

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a >= std::numbers::pi ? a - 2.0 * std::numbers::pi : a;
}

/// Footprint of the ego vehicle at a body pose (x forward, z up, origin at box center).
inline BoxAnnotation sdv_box(const PoseSE3& body_pose, const Vec3& sdv_dims) {
  BoxAnnotation box;
  box.track_id = 0;
  box.cls = SemanticClass::kVehicle;
  box.center = body_pose.translation;
  box.dims = sdv_dims;
  box.heading = wrap_angle(body_pose.yaw());
  return box;
}

/**
 * @brief Random translation (uniform in a horizontal disc) and yaw (uniform in
 * ±max_yaw) applied to an ego body pose, resampled until the ego box is clear
 * of every annotated box.
 *
 * The draw sequence depends only on (config.seed, stream).
 */
inline PoseSE3 perturb_pose(const PoseSE3& base, std::span<const BoxAnnotation> boxes, const Vec3& sdv_dims,
                            const PerturbConfig& config, std::uint64_t stream = 0) {
  config.validate();
  if (!(sdv_dims.minCoeff() > 0)) throw Error(ErrorKind::kConfig, "sdv dims must be > 0");
  std::mt19937_64 rng(mix_seed(config.seed, stream));
  for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
    const double rho = config.max_translation * std::sqrt(uniform01(rng));
    const double phi = 2.0 * std::numbers::pi * uniform01(rng);
    const double yaw = config.max_yaw * (2.0 * uniform01(rng) - 1.0);
    PoseSE3 candidate;
    candidate.rotation = PoseSE3::from_yaw(yaw).rotation * base.rotation;
    candidate.translation = base.translation + Vec3(rho * std::cos(phi), rho * std::sin(phi), 0.0);
    const BoxAnnotation ego = sdv_box(candidate, sdv_dims);
    const bool blocked =
        std::any_of(boxes.begin(), boxes.end(), [&](const auto& b) { return check_collision(ego, b); });
    if (!blocked) return candidate;
  }
  throw Error(ErrorKind::kNoValidPose,
              "no collision-free pose after " + std::to_string(config.max_attempts) + " attempts");
}

// ---------------------------------------------------------------------------
// Pose deviation

/// ‖t − t′‖ + λ_R · ‖log(RᵀR′)‖_F / √2.
inline double pose_deviation(const PoseSE3& p, const PoseSE3& q, double lambda_r = 1.0) {
  return (p.translation - q.translation).norm() + lambda_r * rotation_distance(p.rotation, q.rotation);
}

enum class DeviationBin : int { kNear = 0, kMid = 1, kFar = 2 };

inline const char* to_string(DeviationBin b) {
  switch (b) {
    case DeviationBin::kNear: return "d <= 1.0";
    case DeviationBin::kMid: return "1.0 < d <= 2.0";
    case DeviationBin::kFar: return "2.0 < d";
  }
  return "?";
}

/// Edges {1.0, 2.0}, upper edges closed.
inline DeviationBin deviation_bin(double d) {
  if (d <= 1.0) return DeviationBin::kNear;
  if (d <= 2.0) return DeviationBin::kMid;
  return DeviationBin::kFar;
}

struct DeviationReport {
  double deviation = 0.0;
  DeviationBin bin = DeviationBin::kNear;
  std::size_t nearest_index = 0;
};

inline DeviationReport nearest_pose_deviation(const PoseSE3& p, std::span<const PoseSE3> trajectory,
                                              double lambda_r = 1.0) {
  if (trajectory.empty()) throw Error(ErrorKind::kValidation, "empty trajectory");
  DeviationReport r;
  r.deviation = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const double d = pose_deviation(p, trajectory[i], lambda_r);
    if (d < r.deviation) {
      r.deviation = d;
      r.nearest_index = i;
    }
  }
  r.bin = deviation_bin(r.deviation);
  return r;
}

// ---------------------------------------------------------------------------
// Coverage binning

enum class CoverageBin : int { kLow = 0, kMid = 1, kHigh = 2 };

inline const char* to_string(CoverageBin b) {
  switch (b) {
    case CoverageBin::kLow: return "r <= 0.3";
    case CoverageBin::kMid: return "0.3 < r <= 0.5";
    case CoverageBin::kHigh: return "0.5 < r";
  }
  return "?";
}

/// Edges {0.3, 0.5}, upper edges closed.
inline CoverageBin coverage_bin(double r) {
  if (r <= 0.3) return CoverageBin::kLow;
  if (r <= 0.5) return CoverageBin::kMid;
  return CoverageBin::kHigh;
}

using BinGroups = std::array<std::vector<std::size_t>, 3>;

/// Indices of `ratios` grouped by coverage bin, in input order.
inline BinGroups bin_by_coverage(std::span<const double> ratios) {
  BinGroups g;
  for (std::size_t i = 0; i < ratios.size(); ++i) g[static_cast<int>(coverage_bin(ratios[i]))].push_back(i);
  return g;
}

inline BinGroups bin_by_deviation(std::span<const double> deviations) {
  BinGroups g;
  for (std::size_t i = 0; i < deviations.size(); ++i) {
    g[static_cast<int>(deviation_bin(deviations[i]))].push_back(i);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Projected 2-D boxes

struct Box2D {
  double u_min = 0, v_min = 0, u_max = 0, v_max = 0;
  bool operator==(const Box2D&) const = default;
};

/**
 * @brief Axis-aligned image box around the projections of `points`.
 *
 * Points behind the near plane are dropped; the rectangle is clipped to the
 * image. nullopt when no point lands on an image pixel.
 */
inline std::optional<Box2D> derive_2d_box(std::span<const Vec3> points, const CameraSpec& camera) {
  const auto& k = camera.intrinsics;
  bool any_inside = false;
  Box2D box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : points) {
    const auto proj = project(p, camera);
    if (!proj) continue;
    const double px = std::floor(proj->u + 0.5), py = std::floor(proj->v + 0.5);
    any_inside |= px >= 0 && py >= 0 && px < k.width && py < k.height;
    box.u_min = std::min(box.u_min, proj->u);
    box.v_min = std::min(box.v_min, proj->v);
    box.u_max = std::max(box.u_max, proj->u);
    box.v_max = std::max(box.v_max, proj->v);
  }
  if (!any_inside) return std::nullopt;
  const double w1 = k.width - 1.0, h1 = k.height - 1.0;
  box.u_min = std::clamp(box.u_min, 0.0, w1);
  box.u_max = std::clamp(box.u_max, 0.0, w1);
  box.v_min = std::clamp(box.v_min, 0.0, h1);
  box.v_max = std::clamp(box.v_max, 0.0, h1);
  return box;
}

/// 2-D box of a placed object model (its surfel centroids).
inline std::optional<Box2D> derive_2d_box(const ObjectModel& model, const PoseSE3& placement,
                                          const CameraSpec& camera) {
  std::vector<Vec3> centroids;
  centroids.reserve(model.canonical_map.size());
  for (const auto& [key, s] : model.canonical_map.surfels) centroids.push_back(placement * s.centroid);
  return derive_2d_box(centroids, camera);
}

// ---------------------------------------------------------------------------
// Covered-pixel L1

enum class IntensityScale { kNormalized, kRaw };

/**
 * @brief Mean absolute RGB difference over pixels covered by the render.
 *
 * Intensities are divided by 255 under kNormalized. nullopt when the render
 * covers no pixel.
 */
inline std::optional<double> paired_l1(const RenderOutput& render, const RgbImage& real,
                                       IntensityScale scale = IntensityScale::kNormalized) {
  if (render.width() != real.width || render.height() != real.height) {
    throw Error(ErrorKind::kDimension, "render " + std::to_string(render.width()) + "x" +
                                           std::to_string(render.height()) + " vs real " +
                                           std::to_string(real.width) + "x" + std::to_string(real.height));
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < real.height; ++y) {
    for (int x = 0; x < real.width; ++x) {
      if (!render.covered(x, y)) continue;
      for (int c = 0; c < 3; ++c) sum += std::abs(int(render.rgb.at(x, y, c)) - int(real.at(x, y, c)));
      n += 3;
    }
  }
  if (n == 0) return std::nullopt;
  const double mean = sum / static_cast<double>(n);
  return scale == IntensityScale::kNormalized ? mean / 255.0 : mean;
}

// ---------------------------------------------------------------------------
// Evaluation report

struct EvalRecord {
  std::size_t index = 0;
  double deviation = 0.0;
  double coverage_ratio = 0.0;
  std::optional<double> l1;
  std::optional<std::string> error;
};

namespace detail {

template <typename BinFn, typename LabelFn>
nlohmann::json aggregate(std::span<const EvalRecord> records, BinFn bin_of, LabelFn label) {
  nlohmann::json rows = nlohmann::json::array();
  for (int b = 0; b < 3; ++b) {
    std::size_t count = 0, l1_count = 0;
    double cov = 0.0, dev = 0.0, l1 = 0.0;
    for (const auto& r : records) {
      if (bin_of(r) != b) continue;
      ++count;
      cov += r.coverage_ratio;
      dev += r.deviation;
      if (r.l1) {
        ++l1_count;
        l1 += *r.l1;
      }
    }
    nlohmann::json row = {{"bin", label(b)}, {"count", count}};
    row["mean_deviation"] = count ? nlohmann::json(dev / count) : nlohmann::json(nullptr);
    row["mean_coverage_ratio"] = count ? nlohmann::json(cov / count) : nlohmann::json(nullptr);
    if (l1_count) {
      row["l1_count"] = l1_count;
      row["mean_l1"] = l1 / l1_count;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace detail

/**
 * @brief Per-pose rows plus per-bin means keyed by deviation bins
 * {1.0, 2.0} and coverage bins {0.3, 0.5}.
 */
inline nlohmann::json eval_report(std::span<const EvalRecord> records) {
  nlohmann::json j;
  j["poses"] = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json row = {{"index", r.index},
                          {"deviation", r.deviation},
                          {"deviation_bin", to_string(deviation_bin(r.deviation))},
                          {"coverage_ratio", r.coverage_ratio},
                          {"coverage_bin", to_string(coverage_bin(r.coverage_ratio))}};
    if (r.l1) row["l1"] = *r.l1;
    if (r.error) row["error"] = *r.error;
    j["poses"].push_back(row);
  }
  j["by_deviation"] = detail::aggregate(
      records, [](const EvalRecord& r) { return static_cast<int>(deviation_bin(r.deviation)); },
      [](int b) { return to_string(static_cast<DeviationBin>(b)); });
  j["by_coverage"] = detail::aggregate(
      records, [](const EvalRecord& r) { return static_cast<int>(coverage_bin(r.coverage_ratio)); },
      [](int b) { return to_string(static_cast<CoverageBin>(b)); });
  return j;
}

}  // namespace surfelsim

#endif  // SURFELSIM_SCENARIO_HPP
