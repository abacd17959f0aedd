#ifndef SURFELSIM_PIPELINE_HPP
#define SURFELSIM_PIPELINE_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "surfelsim/dynamic_objects.hpp"
#include "surfelsim/error.hpp"
#include "surfelsim/renderer.hpp"
#include "surfelsim/scenario.hpp"
#include "surfelsim/scene_io.hpp"
#include "surfelsim/surfel_map.hpp"

namespace surfelsim {

/// Camera axes (x right, y down, z forward) expressed in an x-forward, z-up body frame.
inline PoseSE3 default_body_from_camera() {
  PoseSE3 p;
  p.rotation << 0, 0, 1,  //
      -1, 0, 0,           //
      0, -1, 0;
  p.translation = Vec3(0.0, 0.0, 0.7);  // camera above the ego box center
  return p;
}

struct PipelineConfig {
  SurfelConfig surfel;
  std::optional<double> object_voxel_size;  // defaults to surfel.voxel_size / 2
  PerturbConfig perturb;
  Vec3 sdv_dims = Vec3(4.5, 2.0, 1.6);
  double sdv_margin = 0.0;  // inflates the ego footprint on every side
  PoseSE3 body_from_camera = default_body_from_camera();
  std::optional<int> render_width;
  std::optional<int> render_height;
  double near_clip = 0.1;
  double lambda_r = 1.0;
  IntensityScale l1_scale = IntensityScale::kNormalized;
  std::uint64_t seed = 0;
  int jobs = 1;

  SurfelConfig object_config() const {
    SurfelConfig c = object_surfel_config(surfel);
    if (object_voxel_size) c.voxel_size = *object_voxel_size;
    return c;
  }

  PerturbConfig seeded_perturb() const {
    PerturbConfig p = perturb;
    p.seed = seed;
    return p;
  }

  void validate() const {
    surfel.validate();
    object_config().validate();
    perturb.validate();
    if (!(sdv_dims.minCoeff() > 0)) throw Error(ErrorKind::kConfig, "sdv_dims must be > 0");
    if (!(sdv_margin >= 0)) throw Error(ErrorKind::kConfig, "sdv_margin must be >= 0");
    if (!body_from_camera.is_valid()) throw Error(ErrorKind::kConfig, "camera_mount is not rigid");
    if ((render_width && *render_width < 1) || (render_height && *render_height < 1)) {
      throw Error(ErrorKind::kConfig, "render size must be positive");
    }
    if (!(near_clip > 0)) throw Error(ErrorKind::kConfig, "near_clip must be > 0");
    if (!(lambda_r >= 0)) throw Error(ErrorKind::kConfig, "lambda_r must be >= 0");
    if (jobs < 1) throw Error(ErrorKind::kConfig, "jobs must be >= 1");
  }

  /// Overlays the keys present in `j` on the defaults.
  static PipelineConfig from_json(const nlohmann::json& j) {
    PipelineConfig c;
    try {
      if (j.contains("surfel")) {
        const auto& s = j["surfel"];
        c.surfel.voxel_size = s.value("voxel_size", c.surfel.voxel_size);
        c.surfel.texel_grid = s.value("texel_grid", c.surfel.texel_grid);
        c.surfel.distance_bins = s.value("distance_bins", c.surfel.distance_bins);
        if (s.contains("bin_edges")) {
          c.surfel.bin_edges = s["bin_edges"].get<std::vector<double>>();
        } else {
          c.surfel.bin_edges =
              SurfelConfig::linear_edges(c.surfel.distance_bins, s.value("max_distance", 50.0));
        }
      }
      if (j.contains("object_voxel_size")) c.object_voxel_size = j["object_voxel_size"].get<double>();
      if (j.contains("perturb")) {
        const auto& p = j["perturb"];
        c.perturb.max_translation = p.value("max_translation", c.perturb.max_translation);
        c.perturb.max_yaw = p.value("max_yaw", c.perturb.max_yaw);
        c.perturb.max_attempts = p.value("max_attempts", c.perturb.max_attempts);
      }
      if (j.contains("sdv_dims")) c.sdv_dims = detail::vec3_from_json(j["sdv_dims"], "sdv_dims");
      c.sdv_margin = j.value("sdv_margin", c.sdv_margin);
      if (j.contains("camera_mount")) c.body_from_camera = detail::pose_from_json(j["camera_mount"], "camera_mount");
      if (j.contains("render")) {
        const auto& r = j["render"];
        if (r.contains("width")) c.render_width = r["width"].get<int>();
        if (r.contains("height")) c.render_height = r["height"].get<int>();
        c.near_clip = r.value("near_clip", c.near_clip);
      }
      c.lambda_r = j.value("lambda_r", c.lambda_r);
      if (j.contains("l1_scale")) {
        const auto s = j["l1_scale"].get<std::string>();
        if (s == "normalized") c.l1_scale = IntensityScale::kNormalized;
        else if (s == "raw") c.l1_scale = IntensityScale::kRaw;
        else throw Error(ErrorKind::kConfig, "l1_scale must be 'normalized' or 'raw'");
      }
      c.seed = j.value("seed", c.seed);
      c.jobs = j.value("jobs", c.jobs);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kConfig, e.what());
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kConfig) throw;
      throw Error(ErrorKind::kConfig, e.what());
    }
    c.validate();
    return c;
  }

  static PipelineConfig from_file(const std::filesystem::path& path) {
    return from_json(detail::read_json(path));
  }
};

namespace detail {

/// Runs fn(i) for i in [0, n) on `jobs` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> workers;
  for (int t = 0; t < std::min<int>(jobs, static_cast<int>(n)); ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  workers.clear();
  if (failure) std::rethrow_exception(failure);
}

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

inline nlohmann::json intrinsics_to_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

inline Intrinsics intrinsics_from_json(const nlohmann::json& j) {
  return {j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
          j.at("cy").get<double>(), j.at("width").get<int>(),  j.at("height").get<int>()};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// build

struct BuildReport {
  std::size_t surfel_count = 0;
  std::size_t object_count = 0;
  std::size_t object_surfel_count = 0;
  std::vector<TrackId> skipped_tracks;
  std::map<std::string, double> timings_ms;
};

/// Loaded output of `cmd_build`.
struct BuiltScene {
  SurfelMap static_map;
  std::vector<ObjectModel> objects;
  std::vector<CameraFrame> trajectory;  // poses + intrinsics; images not loaded
  std::vector<BoxAnnotation> boxes;
};

/**
 * @brief Reconstructs a scene directory into `out_dir`: map.smap, objects/,
 * trajectory.json, boxes.json and build_report.json.
 */
inline BuildReport cmd_build(const std::filesystem::path& scene_dir, const std::filesystem::path& out_dir,
                             const PipelineConfig& config) {
  namespace fs = std::filesystem;
  config.validate();
  BuildReport report;
  auto t0 = std::chrono::steady_clock::now();
  SceneBundle scene = load_scene(scene_dir);
  report.timings_ms["load"] = detail::elapsed_ms(t0);

  t0 = std::chrono::steady_clock::now();
  detail::parallel_for(scene.scans.size(), config.jobs, [&](std::size_t i) {
    auto colored = colorize_points(scene.scans[i], scene.frames);
    scene.scans[i] = associate_points_to_boxes(colored, boxes_at(scene.boxes, colored.timestamp));
  });
  const auto viewpoints = coloring_viewpoints(scene.scans, scene.frames);
  report.timings_ms["colorize_associate"] = detail::elapsed_ms(t0);

  t0 = std::chrono::steady_clock::now();
  const auto built = build_surfel_map(scene.scans, config.surfel, viewpoints);
  report.surfel_count = built.map.size();
  report.timings_ms["static_map"] = detail::elapsed_ms(t0);

  t0 = std::chrono::steady_clock::now();
  std::map<TrackId, SemanticClass> tracks;
  for (const auto& b : scene.boxes) tracks.try_emplace(b.track_id, b.cls);
  const SurfelConfig object_config = config.object_config();
  fs::create_directories(out_dir / "objects");
  nlohmann::json object_index = nlohmann::json::array();
  auto emit = [&](const ObjectModel& m, const std::string& stem, const char* kind) {
    write_object_model(m, out_dir / "objects", stem);
    object_index.push_back({{"stem", stem}, {"track_id", m.track_id}, {"class", to_string(m.cls)}, {"kind", kind}});
    ++report.object_count;
    report.object_surfel_count += m.canonical_map.size();
  };
  for (const auto& [track, cls] : tracks) {
    if (cls == SemanticClass::kVehicle) {
      try {
        emit(build_object_model(scene.scans, scene.boxes, track, object_config, viewpoints),
             std::to_string(track), "rigid");
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kEmptyModel) throw;
        report.skipped_tracks.push_back(track);
      }
      continue;
    }
    bool any = false;
    for (std::size_t si = 0; si < scene.scans.size(); ++si) {
      const auto annotations = boxes_at(scene.boxes, scene.scans[si].timestamp);
      for (const auto& box : annotations) {
        if (box.track_id != track) continue;
        try {
          emit(build_pedestrian_model(scene.scans[si], box, object_config, viewpoints[si]),
               std::to_string(track) + "_" + frame_stem(si), "per_scan");
          any = true;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kEmptyModel) throw;
        }
      }
    }
    if (!any) report.skipped_tracks.push_back(track);
  }
  report.timings_ms["objects"] = detail::elapsed_ms(t0);

  t0 = std::chrono::steady_clock::now();
  write_smap(built.map, out_dir / "map.smap");
  detail::write_json(out_dir / "objects" / "index.json", object_index);
  nlohmann::json trajectory = nlohmann::json::array();
  for (std::size_t i = 0; i < scene.frames.size(); ++i) {
    const auto& f = scene.frames[i];
    trajectory.push_back({{"index", i},
                          {"timestamp", f.timestamp},
                          {"pose", f.pose.to_rows()},
                          {"intrinsics", detail::intrinsics_to_json(f.intrinsics)}});
  }
  detail::write_json(out_dir / "trajectory.json", trajectory);
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : scene.boxes) boxes.push_back(box_to_json(b));
  detail::write_json(out_dir / "boxes.json", boxes);
  report.timings_ms["write"] = detail::elapsed_ms(t0);

  nlohmann::json j = {{"scene_id", scene.scene_id},
                      {"surfel_count", report.surfel_count},
                      {"object_count", report.object_count},
                      {"object_surfel_count", report.object_surfel_count},
                      {"skipped_tracks", report.skipped_tracks},
                      {"timings_ms", report.timings_ms}};
  detail::write_json(out_dir / "build_report.json", j);
  return report;
}

inline BuiltScene load_built_scene(const std::filesystem::path& map_dir) {
  BuiltScene scene;
  if (!std::filesystem::exists(map_dir / "map.smap")) {
    throw Error(ErrorKind::kFormat, "missing map.smap in " + map_dir.string());
  }
  scene.static_map = read_smap(map_dir / "map.smap");
  try {
    for (const auto& entry : detail::read_json(map_dir / "objects" / "index.json")) {
      scene.objects.push_back(read_object_model(map_dir / "objects", entry.at("stem").get<std::string>()));
    }
    for (const auto& entry : detail::read_json(map_dir / "trajectory.json")) {
      CameraFrame f;
      f.timestamp = entry.at("timestamp").get<double>();
      f.pose = detail::pose_from_json(entry.at("pose"), "trajectory.json");
      f.intrinsics = detail::intrinsics_from_json(entry.at("intrinsics"));
      scene.trajectory.push_back(std::move(f));
    }
    for (const auto& b : detail::read_json(map_dir / "boxes.json")) scene.boxes.push_back(box_from_json(b));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("built scene: ") + e.what());
  }
  return scene;
}

// ---------------------------------------------------------------------------
// render

/**
 * @brief Placements of all annotated objects at time `t`.
 *
 * Each model's ICP correction (pose_track relative to the annotation at the
 * same time) is carried over to the annotation nearest `t`. Per-scan models
 * use the one reconstructed nearest in time.
 */
inline std::vector<Placement> placements_at(const BuiltScene& scene, double t) {
  std::vector<Placement> out;
  const auto annotations = boxes_at(scene.boxes, t);
  for (const auto& box : annotations) {
    const ObjectModel* best = nullptr;
    double best_t = 0.0;
    for (const auto& m : scene.objects) {
      if (m.track_id != box.track_id) continue;
      for (const auto& [mt, pose] : m.pose_track) {
        if (!best || std::abs(mt - t) < std::abs(best_t - t)) {
          best = &m;
          best_t = mt;
        }
      }
    }
    if (!best) continue;
    const auto then = boxes_at(scene.boxes, best_t);
    PoseSE3 correction;  // canonical box frame → model frame, inverted
    for (const auto& b : then) {
      if (b.track_id == box.track_id) correction = b.pose().inverse() * best->pose_track.at(best_t);
    }
    out.push_back({box.track_id, box.pose() * correction, best_t});
  }
  return out;
}

struct RenderRequest {
  double timestamp = 0.0;
  PoseSE3 pose;
  Intrinsics intrinsics;
  std::optional<std::size_t> source_frame;
};

struct RenderOptions {
  std::optional<std::filesystem::path> poses_file;
  bool perturb = false;
};

inline Intrinsics scale_intrinsics(const Intrinsics& k, std::optional<int> width, std::optional<int> height) {
  if (!width && !height) return k;
  const int w = width.value_or(k.width), h = height.value_or(k.height);
  const double sx = static_cast<double>(w) / k.width, sy = static_cast<double>(h) / k.height;
  return {k.fx * sx, k.fy * sy, (k.cx + 0.5) * sx - 0.5, (k.cy + 0.5) * sy - 0.5, w, h};
}

/**
 * @brief Renders every requested pose into `out_dir/render/` and writes
 * `render/index.json`. Returns the number of frames that failed to find a
 * valid pose (recorded per frame; the run continues).
 */
inline std::size_t cmd_render(const std::filesystem::path& map_dir, const std::filesystem::path& out_dir,
                              const RenderOptions& options, const PipelineConfig& config) {
  config.validate();
  const BuiltScene scene = load_built_scene(map_dir);

  std::vector<RenderRequest> requests;
  if (options.poses_file) {
    const auto j = detail::read_json(*options.poses_file);
    try {
      for (const auto& entry : j) {
        RenderRequest r;
        r.timestamp = entry.value("timestamp", 0.0);
        r.pose = detail::pose_from_json(entry.at("pose"), options.poses_file->string());
        if (entry.contains("intrinsics")) {
          r.intrinsics = detail::intrinsics_from_json(entry["intrinsics"]);
        } else if (!scene.trajectory.empty()) {
          r.intrinsics = scene.trajectory.front().intrinsics;
        } else {
          throw Error(ErrorKind::kValidation, "pose entry without intrinsics and no trajectory to borrow from");
        }
        if (!r.pose.is_valid()) throw Error(ErrorKind::kValidation, "pose file holds a non-rigid pose");
        requests.push_back(r);
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kFormat, options.poses_file->string() + ": " + e.what());
    }
  } else {
    for (std::size_t i = 0; i < scene.trajectory.size(); ++i) {
      const auto& f = scene.trajectory[i];
      requests.push_back({f.timestamp, f.pose, f.intrinsics, i});
    }
  }

  std::vector<PoseSE3> original;
  for (const auto& f : scene.trajectory) original.push_back(f.pose);

  const auto render_dir = out_dir / "render";
  std::filesystem::create_directories(render_dir);
  std::vector<nlohmann::json> rows(requests.size());
  const PerturbConfig perturb = config.seeded_perturb();

  detail::parallel_for(requests.size(), config.jobs, [&](std::size_t i) {
    RenderRequest req = requests[i];
    nlohmann::json row = {{"index", i}, {"timestamp", req.timestamp}};
    if (req.source_frame) row["source_frame"] = *req.source_frame;
    const auto annotations = boxes_at(scene.boxes, req.timestamp);
    if (options.perturb) {
      const PoseSE3 camera_from_body = config.body_from_camera.inverse();
      try {
        const PoseSE3 body = perturb_pose(req.pose * camera_from_body, annotations,
                                       config.sdv_dims + Vec3::Constant(2.0 * config.sdv_margin), perturb, i);
        req.pose = body * config.body_from_camera;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kNoValidPose) throw;
        row["error"] = e.what();
        rows[i] = row;
        return;
      }
    }
    CameraSpec cam{req.pose, scale_intrinsics(req.intrinsics, config.render_width, config.render_height),
                   config.near_clip};
    const auto placements = placements_at(scene, req.timestamp);
    const RenderOutput out = render(scene.static_map, scene.objects, placements, cam);
    write_render(out, render_dir, frame_stem(i));

    row["pose"] = req.pose.to_rows();
    row["intrinsics"] = detail::intrinsics_to_json(cam.intrinsics);
    row["coverage_ratio"] = out.coverage_ratio;
    if (!original.empty()) {
      const auto dev = nearest_pose_deviation(req.pose, original, config.lambda_r);
      row["deviation"] = dev.deviation;
      row["deviation_bin"] = to_string(dev.bin);
      row["nearest_frame"] = dev.nearest_index;
    }
    rows[i] = row;
  });

  std::size_t failures = 0;
  nlohmann::json index = {{"count", rows.size()}, {"poses", nlohmann::json::array()}};
  for (auto& r : rows) {
    failures += r.contains("error");
    index["poses"].push_back(std::move(r));
  }
  detail::write_json(render_dir / "index.json", index);
  return failures;
}

// ---------------------------------------------------------------------------
// eval

/// Accepts either an export root (holding render/) or the render/ directory itself.
inline std::filesystem::path resolve_render_dir(const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir / "render" / "index.json")) return dir / "render";
  if (std::filesystem::exists(dir / "index.json")) return dir;
  throw Error(ErrorKind::kFormat, "no render index.json under " + dir.string());
}

inline std::optional<std::filesystem::path> find_real_image(const std::filesystem::path& real_dir,
                                                            const std::string& stem) {
  for (const auto& candidate : {real_dir / (stem + ".png"), real_dir / (stem + ".rgb.png"),
                                real_dir / "render" / (stem + ".rgb.png")}) {
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return std::nullopt;
}

/// Covered-pixel L1 between an exported render (rgb + depth) and a real image.
inline std::optional<double> paired_l1_from_export(const std::filesystem::path& render_dir, const std::string& stem,
                                                   const RgbImage& real, IntensityScale scale) {
  RenderOutput r;
  r.rgb = read_png_rgb(render_dir / (stem + ".rgb.png"));
  const FloatImage depth = read_f32(render_dir / (stem + ".depth.f32"), r.rgb.width, r.rgb.height);
  r.surfel_index = Image<std::uint32_t, 1>(r.rgb.width, r.rgb.height, kNoSurfel);
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    if (std::isfinite(depth.data[i])) r.surfel_index.data[i] = 0;
  }
  return paired_l1(r, real, scale);
}

/// The evaluation report over a render export, optionally paired with real images.
inline nlohmann::json cmd_eval(const std::filesystem::path& render_root,
                               const std::optional<std::filesystem::path>& real_dir, const PipelineConfig& config) {
  const auto render_dir = resolve_render_dir(render_root);
  const auto index = detail::read_json(render_dir / "index.json");
  std::vector<EvalRecord> records;
  for (const auto& row : index.at("poses")) {
    if (row.contains("error")) continue;
    EvalRecord rec;
    rec.index = row.at("index").get<std::size_t>();
    rec.deviation = row.value("deviation", 0.0);
    rec.coverage_ratio = row.at("coverage_ratio").get<double>();
    if (real_dir) {
      const std::string stem = frame_stem(rec.index);
      if (const auto path = find_real_image(*real_dir, stem)) {
        try {
          rec.l1 = paired_l1_from_export(render_dir, stem, read_png_rgb(*path), config.l1_scale);
          if (!rec.l1) rec.error = "no covered pixels";
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kDimension) throw;
          rec.error = e.what();
        }
      }
    }
    records.push_back(rec);
  }
  auto report = eval_report(records);
  report["l1_scale"] = config.l1_scale == IntensityScale::kNormalized ? "normalized" : "raw";
  return report;
}

// ---------------------------------------------------------------------------
// export-gan

struct GanExportSummary {
  std::size_t paired = 0;
  std::size_t unpaired_renders = 0;
  std::size_t unpaired_reals = 0;
};

/**
 * @brief Lays out training data for image refinement:
 * `paired/{render,real}/NNNNNN.*` for renders at original camera poses,
 * `unpaired_renders/` for novel views and `unpaired_reals/` for all camera
 * images of the scene.
 */
inline GanExportSummary cmd_export_gan(const std::filesystem::path& render_root, const std::filesystem::path& scene_dir,
                                       const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  const auto render_dir = resolve_render_dir(render_root);
  const auto index = detail::read_json(render_dir / "index.json");
  const auto manifest = detail::read_json(scene_dir / "manifest.json");
  const auto& frames = manifest.at("frames");

  for (const auto* sub : {"paired/render", "paired/real", "unpaired_renders", "unpaired_reals"}) {
    fs::create_directories(out_dir / sub);
  }
  static constexpr const char* kChannels[] = {".rgb.png", ".sem.png", ".inst.png", ".depth.f32", ".dist.f32"};
  auto copy_render = [&](const std::string& stem, const fs::path& dst) {
    for (const char* ext : kChannels) {
      fs::copy_file(render_dir / (stem + ext), dst / (stem + ext), fs::copy_options::overwrite_existing);
    }
  };

  GanExportSummary summary;
  nlohmann::json listing = {{"paired", nlohmann::json::array()}, {"unpaired_renders", nlohmann::json::array()},
                            {"unpaired_reals", nlohmann::json::array()}};
  for (const auto& row : index.at("poses")) {
    if (row.contains("error")) continue;
    const std::string stem = frame_stem(row.at("index").get<std::size_t>());
    const bool original = row.contains("source_frame") && row.value("deviation", 1.0) == 0.0;
    if (original) {
      const auto src = row["source_frame"].get<std::size_t>();
      if (src < frames.size()) {
        copy_render(stem, out_dir / "paired/render");
        fs::copy_file(scene_dir / frames[src].at("image").get<std::string>(), out_dir / "paired/real" / (stem + ".png"),
                      fs::copy_options::overwrite_existing);
        listing["paired"].push_back(stem);
        ++summary.paired;
        continue;
      }
    }
    copy_render(stem, out_dir / "unpaired_renders");
    listing["unpaired_renders"].push_back(stem);
    ++summary.unpaired_renders;
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string stem = frame_stem(i);
    fs::copy_file(scene_dir / frames[i].at("image").get<std::string>(), out_dir / "unpaired_reals" / (stem + ".png"),
                  fs::copy_options::overwrite_existing);
    listing["unpaired_reals"].push_back(stem);
    ++summary.unpaired_reals;
  }
  detail::write_json(out_dir / "index.json", listing);
  return summary;
}

}  // namespace surfelsim

#endif  // SURFELSIM_PIPELINE_HPP
