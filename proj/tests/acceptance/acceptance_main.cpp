// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Geometry>

#include "surfelsim/distance_transform.hpp"
#include "surfelsim/pipeline.hpp"
#include "support/synthetic_scene.hpp"
#include "support/temp_dir.hpp"

using namespace surfelsim;
using surfelsim::testing::TempDir;
namespace fs = std::filesystem;
namespace sim = surfelsim::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Ground plane plus two cuboid cars, nothing else.
sim::World two_car_world() {
  sim::World w = sim::default_world();
  w.blocks.clear();
  std::erase_if(w.actors, [](const sim::Actor& a) { return a.cls != SemanticClass::kVehicle; });
  return w;
}

struct SharedScene {
  TempDir dir{"acceptance"};
  sim::World world = two_car_world();
  sim::DriveSpec drive;
  fs::path scene_dir() const { return dir / "scene"; }
  fs::path map_dir() const { return dir / "map"; }
};

Outcome round_trip(SharedScene& s) {
  write_scene(sim::make_drive_scene(s.world, s.drive, "two_cars"), s.scene_dir());
  const auto report = cmd_build(s.scene_dir(), s.map_dir(), PipelineConfig{});
  cmd_render(s.map_dir(), s.dir / "orig", {}, PipelineConfig{});
  const auto eval = cmd_eval(s.dir / "orig", s.scene_dir() / "frames", PipelineConfig{});
  double worst = 0.0;
  bool all = eval["poses"].size() == static_cast<std::size_t>(s.drive.frames);
  for (const auto& row : eval["poses"]) {
    if (!row.contains("l1")) {
      all = false;
      continue;
    }
    worst = std::max(worst, row["l1"].get<double>());
  }
  const double bound = 10.0 / 255.0;
  return {all && worst <= bound && report.object_count == 2,
          "worst frame L1 " + fmt("%.5f", worst) + " (bound " + fmt("%.5f", bound) + "), " +
              std::to_string(eval["poses"].size()) + " frames, " + std::to_string(report.surfel_count) +
              " surfels, " + std::to_string(report.object_count) + " object models"};
}

Outcome novel_view(SharedScene& s) {
  const int frame = 4;
  const double t = frame * s.drive.dt;
  const Vec3 base = sim::drive_position(s.drive, frame);
  // 0.5 m to the left and 0.1 rad of yaw.
  const PoseSE3 pose = sim::camera_pose(base + Vec3(0, 0.5, 0), s.drive.yaw + 0.1);

  std::vector<PoseSE3> trajectory;
  for (int i = 0; i < s.drive.frames; ++i) trajectory.push_back(sim::camera_pose(sim::drive_position(s.drive, i), s.drive.yaw));
  const double d = nearest_pose_deviation(pose, trajectory).deviation;

  fs::create_directories(s.dir / "novel");
  nlohmann::json poses = nlohmann::json::array();
  poses.push_back({{"timestamp", t}, {"pose", pose.to_rows()}});
  std::ofstream(s.dir / "novel" / "poses.json") << poses.dump();
  RenderOptions options;
  options.poses_file = s.dir / "novel" / "poses.json";
  cmd_render(s.map_dir(), s.dir / "novel", options, PipelineConfig{});

  const RgbImage truth = s.world.camera_image(pose, s.drive.intrinsics, t);
  const auto l1 = paired_l1_from_export(s.dir / "novel" / "render", frame_stem(0), truth, IntensityScale::kNormalized);
  const auto index = nlohmann::json::parse(std::ifstream(s.dir / "novel" / "render" / "index.json"));
  const double bound = 20.0 / 255.0;
  return {d <= 1.0 && l1 && *l1 <= bound,
          "d = " + fmt("%.3f", d) + ", L1 " + (l1 ? fmt("%.5f", *l1) : std::string("undefined")) + " (bound " +
              fmt("%.5f", bound) + "), coverage " + fmt("%.3f", index["poses"][0]["coverage_ratio"].get<double>())};
}

Outcome icp_recovery() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> n;
  int ok = 0;
  double worst_t = 0.0, worst_r = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec3> source(500);
    for (auto& p : source) p = Vec3(2.0 * u(rng), 1.0 * u(rng), 0.75 * u(rng));
    const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
    const double angle = (15.0 * std::numbers::pi / 180.0) * std::abs(u(rng));
    Vec3 shift(u(rng), u(rng), u(rng));
    shift = shift.normalized() * 0.5 * std::abs(u(rng));
    const PoseSE3 truth{Eigen::AngleAxisd(angle, axis).toRotationMatrix(), shift};
    std::vector<Vec3> target;
    for (const auto& p : source) target.push_back(truth * p);

    const auto result = icp_register(source, target, PoseSE3::identity());
    const PoseSE3 err = result.transform * truth.inverse();
    const double et = err.translation.norm();
    const double er = Eigen::AngleAxisd(err.rotation).angle();
    worst_t = std::max(worst_t, et);
    worst_r = std::max(worst_r, er);
    ok += et <= 1e-4 && er <= 1e-4;
  }
  return {ok >= 99, std::to_string(ok) + "/100 recovered within 1e-4 m and 1e-4 rad (worst " + fmt("%.2e", worst_t) +
                        " m, " + fmt("%.2e", worst_r) + " rad)"};
}

Outcome deviation_oracle() {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n;
  auto random_rotation = [&] {
    return Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
  };
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const PoseSE3 p{random_rotation(), Vec3(n(rng), n(rng), n(rng))};
    const PoseSE3 q{random_rotation(), Vec3(n(rng), n(rng), n(rng))};
    const double rotational = pose_deviation(p, q) - (p.translation - q.translation).norm();
    const double oracle = Eigen::Quaterniond(p.rotation).angularDistance(Eigen::Quaterniond(q.rotation));
    worst = std::max(worst, std::abs(rotational - oracle));
  }

  // 1000 perturbations of a straight drive, binned against the drive itself.
  std::vector<PoseSE3> trajectory;
  for (int i = 0; i < 20; ++i) trajectory.push_back(PoseSE3::from_yaw(0.0, Vec3(1.0 * i, 0, 0.8)));
  PerturbConfig config;
  config.seed = 4;
  config.max_translation = 3.0;
  config.max_yaw = 0.5;
  std::vector<double> deviations;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const PoseSE3 p = perturb_pose(trajectory[i % trajectory.size()], {}, Vec3(4.5, 2, 1.6), config, i);
    deviations.push_back(nearest_pose_deviation(p, trajectory).deviation);
  }
  deviations[0] = 1.0;  // the closed edges themselves
  deviations[1] = 2.0;
  const auto groups = bin_by_deviation(deviations);
  std::vector<int> seen(deviations.size(), 0);
  bool consistent = true;
  for (int b = 0; b < 3; ++b) {
    for (auto i : groups[b]) {
      ++seen[i];
      const double d = deviations[i];
      const int expected = d <= 1.0 ? 0 : (d <= 2.0 ? 1 : 2);
      consistent &= expected == b;
    }
  }
  const bool partition = std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
  const bool edges = deviation_bin(1.0) == DeviationBin::kNear && deviation_bin(2.0) == DeviationBin::kMid;
  return {worst <= 1e-6 && partition && consistent && edges,
          "max |rotational term - quaternion angle| " + fmt("%.2e", worst) + "; bins " +
              std::to_string(groups[0].size()) + "/" + std::to_string(groups[1].size()) + "/" +
              std::to_string(groups[2].size()) + (partition ? ", every pose assigned once" : ", NOT a partition")};
}

FloatImage brute_force_distance(const MaskImage& empty) {
  FloatImage out(empty.width, empty.height, std::numeric_limits<float>::infinity());
  for (int y = 0; y < empty.height; ++y) {
    for (int x = 0; x < empty.width; ++x) {
      long best = -1;
      for (int qy = 0; qy < empty.height; ++qy) {
        for (int qx = 0; qx < empty.width; ++qx) {
          if (empty.at(qx, qy)) continue;
          const long d = long(qx - x) * (qx - x) + long(qy - y) * (qy - y);
          if (best < 0 || d < best) best = d;
        }
      }
      if (best >= 0) out.at(x, y) = static_cast<float>(std::sqrt(static_cast<double>(best)));
    }
  }
  return out;
}

Outcome distance_exactness() {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int exact = 0;
  for (int m = 0; m < 200; ++m) {
    const double density = u(rng);
    MaskImage mask(32, 32, 1);
    for (auto& v : mask.data) v = u(rng) < density ? 0 : 1;
    if (m == 0) std::fill(mask.data.begin(), mask.data.end(), 1);  // no coverage at all
    exact += distance_map(mask) == brute_force_distance(mask);
  }
  return {exact == 200, std::to_string(exact) + "/200 masks identical to brute force"};
}

Outcome coverage_binning() {
  const std::vector<double> ratios{0.0, 0.05, 0.3, 0.30000001, 0.42, 0.5, 0.5000001, 0.77, 1.0};
  std::vector<EvalRecord> records;
  for (std::size_t i = 0; i < ratios.size(); ++i) records.push_back({i, 0.0, ratios[i], std::nullopt, std::nullopt});
  const auto report = eval_report(records);
  const auto& rows = report["by_coverage"];
  const std::array<std::string, 3> labels{"r <= 0.3", "0.3 < r <= 0.5", "0.5 < r"};
  std::array<int, 3> expected{};
  for (double r : ratios) ++expected[r <= 0.3 ? 0 : (r <= 0.5 ? 1 : 2)];
  bool ok = rows.size() == 3;
  std::string counts;
  for (std::size_t b = 0; ok && b < 3; ++b) {
    ok &= rows[b]["bin"] == labels[b] && rows[b]["count"] == expected[b];
    counts += (b ? ", " : "") + labels[b] + ": " + std::to_string(rows[b]["count"].get<int>());
  }
  ok &= coverage_bin(0.3) == CoverageBin::kLow && coverage_bin(0.5) == CoverageBin::kMid;
  return {ok, counts};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).string()] = {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
  return out;
}

Outcome determinism() {
  TempDir dir("acceptance_det");
  write_scene(sim::make_drive_scene(sim::default_world(), sim::DriveSpec{}), dir / "scene");
  PipelineConfig config;
  config.seed = 7;
  RenderOptions options;
  options.perturb = true;
  for (const char* run : {"a", "b"}) {
    cmd_build(dir / "scene", dir / (std::string("map_") + run), config);
    cmd_render(dir / (std::string("map_") + run), dir / (std::string("out_") + run), options, config);
  }
  const auto a = tree(dir / "out_a"), b = tree(dir / "out_b");
  std::size_t bytes = 0;
  for (const auto& [k, v] : a) bytes += v.size();
  return {!a.empty() && a == b, std::to_string(a.size()) + " files, " + std::to_string(bytes) + " bytes" +
                                    (a == b ? " identical across runs" : " DIFFER across runs")};
}

}  // namespace

int main() {
  SharedScene shared;
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria{
      {1, "synthetic round-trip fidelity", 60, [&] { return round_trip(shared); }},
      {2, "novel-view consistency", 30, [&] { return novel_view(shared); }},
      {3, "ICP recovery", 30, icp_recovery},
      {4, "pose deviation oracle and bins", 60, deviation_oracle},
      {5, "distance transform exactness", 60, distance_exactness},
      {6, "coverage binning", 60, coverage_binning},
      {7, "determinism", 120, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s [%d] %s: %s; %.2f s (limit %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.budget_s);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
