#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include <Eigen/Geometry>

#include "surfelsim/scenario.hpp"

using namespace surfelsim;

namespace {

using V2 = Eigen::Vector2d;

BoxAnnotation make_box(double x, double y, double heading, double len, double wid, double z = 0.0,
                       double height = 1.5) {
  BoxAnnotation b;
  b.center = Vec3(x, y, z);
  b.dims = Vec3(len, wid, height);
  b.heading = heading;
  return b;
}

std::array<V2, 4> corners(const BoxAnnotation& b) {
  const V2 f(std::cos(b.heading), std::sin(b.heading)), l(-std::sin(b.heading), std::cos(b.heading));
  const V2 c = b.center.head<2>();
  const double hx = 0.5 * b.dims.x(), hy = 0.5 * b.dims.y();
  return {c + hx * f + hy * l, c - hx * f + hy * l, c - hx * f - hy * l, c + hx * f - hy * l};
}

double cross(const V2& a, const V2& b) { return a.x() * b.y() - a.y() * b.x(); }

bool inside_convex(const std::array<V2, 4>& poly, const V2& p) {
  // Counter-clockwise corners: the point is inside when it lies left of every edge.
  for (int i = 0; i < 4; ++i) {
    if (cross(poly[(i + 1) % 4] - poly[i], p - poly[i]) < 0) return false;
  }
  return true;
}

bool segments_cross(const V2& a, const V2& b, const V2& c, const V2& d) {
  const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

// Polygon-intersection oracle: containment of any corner, or any pair of crossing edges.
bool footprints_overlap(const BoxAnnotation& a, const BoxAnnotation& b) {
  const auto ca = corners(a), cb = corners(b);
  for (const auto& p : ca) {
    if (inside_convex(cb, p)) return true;
  }
  for (const auto& p : cb) {
    if (inside_convex(ca, p)) return true;
  }
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (segments_cross(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4])) return true;
    }
  }
  return false;
}

// Smallest distance between any corner and the other box's edge lines; small values are near-tangent.
double corner_clearance(const BoxAnnotation& a, const BoxAnnotation& b) {
  double best = std::numeric_limits<double>::infinity();
  auto scan = [&](const std::array<V2, 4>& pts, const std::array<V2, 4>& poly) {
    for (const auto& p : pts) {
      for (int i = 0; i < 4; ++i) {
        const V2 e = poly[(i + 1) % 4] - poly[i];
        best = std::min(best, std::abs(cross(e, p - poly[i])) / e.norm());
      }
    }
  };
  scan(corners(a), corners(b));
  scan(corners(b), corners(a));
  return best;
}

RenderOutput blank_render(int w, int h) {
  RenderOutput r;
  r.rgb = RgbImage(w, h);
  r.surfel_index = Image<std::uint32_t, 1>(w, h, kNoSurfel);
  return r;
}

}  // namespace

TEST(Collision, BoxCollidesWithItself) {
  const auto b = make_box(3, -2, 0.7, 4.5, 2.0);
  EXPECT_TRUE(check_collision(b, b));
}

TEST(Collision, DistantBoxesDoNotCollide) {
  EXPECT_FALSE(check_collision(make_box(0, 0, 0, 4, 2), make_box(10, 0, 0, 4, 2)));
}

TEST(Collision, VerticalSeparationClears) {
  EXPECT_FALSE(check_collision(make_box(0, 0, 0, 4, 2, 0.0, 1.0), make_box(0, 0, 0, 4, 2, 5.0, 1.0)));
}

TEST(Collision, RotatedPairAgainstSampling) {
  const auto a = make_box(0, 0, 0, 2, 1);
  const auto b = make_box(1.2, 0, std::numbers::pi / 4, 2, 1);
  // 10^4 grid samples; any point inside both footprints proves overlap.
  bool shared = false;
  for (int i = 0; i < 100 && !shared; ++i) {
    for (int j = 0; j < 100 && !shared; ++j) {
      const Vec3 p(-1.0 + 3.0 * i / 99.0, -1.5 + 3.0 * j / 99.0, 0.0);
      shared = a.contains(p) && b.contains(p);
    }
  }
  EXPECT_TRUE(shared);
  EXPECT_EQ(check_collision(a, b), shared);
}

TEST(Collision, RandomPairsMatchPolygonOracle) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(-4, 4), ang(-std::numbers::pi, std::numbers::pi), size(0.5, 5);
  int checked = 0, overlaps = 0;
  for (int i = 0; i < 100; ++i) {
    const auto a = make_box(pos(rng), pos(rng), ang(rng), size(rng), size(rng));
    const auto b = make_box(pos(rng), pos(rng), ang(rng), size(rng), size(rng));
    if (corner_clearance(a, b) < 1e-9) continue;
    ++checked;
    const bool expected = footprints_overlap(a, b);
    overlaps += expected;
    EXPECT_EQ(check_collision(a, b), expected) << i;
    EXPECT_EQ(check_collision(b, a), expected) << i;
  }
  EXPECT_GE(checked, 95);
  EXPECT_GT(overlaps, 10);
  EXPECT_LT(overlaps, checked - 10);
}

TEST(Perturb, ZeroRangeReturnsBase) {
  const PoseSE3 base = PoseSE3::from_yaw(0.3, Vec3(5, 1, 0.8));
  PerturbConfig config;
  config.max_translation = 0;
  config.max_yaw = 0;
  const PoseSE3 p = perturb_pose(base, {}, Vec3(4.5, 2, 1.6), config);
  EXPECT_LT((p.translation - base.translation).norm(), 1e-12);
  EXPECT_LT((p.rotation - base.rotation).norm(), 1e-12);
}

TEST(Perturb, StaysWithinRanges) {
  const PoseSE3 base = PoseSE3::from_yaw(-1.0, Vec3(2, 3, 0.8));
  PerturbConfig config;
  config.max_translation = 1.5;
  config.max_yaw = 0.2;
  for (std::uint64_t stream = 0; stream < 200; ++stream) {
    const PoseSE3 p = perturb_pose(base, {}, Vec3(4.5, 2, 1.6), config, stream);
    const Vec3 dt = p.translation - base.translation;
    EXPECT_LE(dt.head<2>().norm(), 1.5 + 1e-12);
    EXPECT_EQ(dt.z(), 0.0);
    EXPECT_LE(std::abs(wrap_angle(p.yaw() - base.yaw())), 0.2 + 1e-12);
    // Yaw only: roll and pitch of the base survive.
    EXPECT_NEAR((p.rotation * Vec3::UnitZ() - base.rotation * Vec3::UnitZ()).norm(), 0.0, 1e-12);
  }
}

TEST(Perturb, ReproducibleAndStreamDependent) {
  const PoseSE3 base = PoseSE3::from_yaw(0.0, Vec3(0, 0, 0.8));
  PerturbConfig config;
  config.seed = 1234;
  const auto a = perturb_pose(base, {}, Vec3(4.5, 2, 1.6), config, 3);
  const auto b = perturb_pose(base, {}, Vec3(4.5, 2, 1.6), config, 3);
  const auto c = perturb_pose(base, {}, Vec3(4.5, 2, 1.6), config, 4);
  EXPECT_EQ(a.rotation, b.rotation);
  EXPECT_EQ(a.translation, b.translation);
  EXPECT_NE(a.translation, c.translation);
}

TEST(Perturb, ReturnedPosesAreCollisionFree) {
  const Vec3 dims(4.5, 2, 1.6);
  const PoseSE3 base = PoseSE3::from_yaw(0.0, Vec3(0, 0, 0.8));
  const std::vector<BoxAnnotation> boxes{make_box(3.5, 0, 0, 4, 2, 0.8), make_box(0, 2.6, 0, 4, 2, 0.8),
                                         make_box(-4, -1, 0.4, 4, 2, 0.8)};
  PerturbConfig config;
  config.max_translation = 3.0;
  config.max_yaw = 0.5;
  config.max_attempts = 1000;
  for (std::uint64_t stream = 0; stream < 100; ++stream) {
    const PoseSE3 p = perturb_pose(base, boxes, dims, config, stream);
    const auto ego = sdv_box(p, dims);
    for (const auto& b : boxes) EXPECT_FALSE(footprints_overlap(ego, b)) << stream;
  }
}

TEST(Perturb, BlockedEverywhereFails) {
  const Vec3 dims(4.5, 2, 1.6);
  const PoseSE3 base = PoseSE3::from_yaw(0.0, Vec3(0, 0, 0.8));
  // A 20 m slab around the ego: every pose within 1 m of the base overlaps it.
  const std::vector<BoxAnnotation> boxes{make_box(0, 0, 0, 20, 20, 0.8, 3)};
  for (int i = 0; i <= 20; ++i) {
    for (int j = 0; j <= 20; ++j) {
      const Vec3 offset(-1 + 0.1 * i, -1 + 0.1 * j, 0);
      EXPECT_TRUE(footprints_overlap(sdv_box(PoseSE3::from_yaw(0.1, base.translation + offset), dims), boxes[0]));
    }
  }
  PerturbConfig config;
  config.max_translation = 1.0;
  config.max_yaw = 0.1;
  config.max_attempts = 8;
  try {
    perturb_pose(base, boxes, dims, config);
    FAIL() << "expected no valid pose";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNoValidPose);
  }
}

TEST(Perturb, InvalidConfig) {
  PerturbConfig config;
  config.max_attempts = 0;
  EXPECT_THROW(perturb_pose(PoseSE3::identity(), {}, Vec3(4.5, 2, 1.6), config), Error);
  config.max_attempts = 5;
  config.max_yaw = -1;
  EXPECT_THROW(perturb_pose(PoseSE3::identity(), {}, Vec3(4.5, 2, 1.6), config), Error);
}

TEST(Deviation, Examples) {
  const PoseSE3 p = PoseSE3::from_yaw(0.4, Vec3(1, 2, 3));
  EXPECT_EQ(pose_deviation(p, p), 0.0);
  PoseSE3 q = p;
  q.translation += Vec3(1, 0, 0);
  EXPECT_NEAR(pose_deviation(p, q), 1.0, 1e-15);
  const PoseSE3 r = PoseSE3::from_yaw(0.4 + std::numbers::pi / 2, Vec3(1, 2, 3));
  EXPECT_NEAR(pose_deviation(p, r), std::numbers::pi / 2, 1e-12);
  EXPECT_NEAR(pose_deviation(p, r, 2.0), std::numbers::pi, 1e-12);
}

TEST(Deviation, SymmetricAgainstQuaternionOracle) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n;
  for (int i = 0; i < 300; ++i) {
    const PoseSE3 a{Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix(),
                    Vec3(n(rng), n(rng), n(rng))};
    const PoseSE3 b{Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix(),
                    Vec3(n(rng), n(rng), n(rng))};
    const double oracle = (a.translation - b.translation).norm() +
                          Eigen::Quaterniond(a.rotation).angularDistance(Eigen::Quaterniond(b.rotation));
    EXPECT_NEAR(pose_deviation(a, b), oracle, 1e-9);
    EXPECT_NEAR(pose_deviation(a, b), pose_deviation(b, a), 1e-12);
  }
}

TEST(Deviation, BinEdgesAreUpperClosed) {
  EXPECT_EQ(deviation_bin(0.0), DeviationBin::kNear);
  EXPECT_EQ(deviation_bin(1.0), DeviationBin::kNear);
  EXPECT_EQ(deviation_bin(std::nextafter(1.0, 2.0)), DeviationBin::kMid);
  EXPECT_EQ(deviation_bin(2.0), DeviationBin::kMid);
  EXPECT_EQ(deviation_bin(2.5), DeviationBin::kFar);
  EXPECT_STREQ(to_string(DeviationBin::kNear), "d <= 1.0");
}

TEST(Deviation, NearestTrajectoryPose) {
  const PoseSE3 p = PoseSE3::identity();
  const std::vector<PoseSE3> traj{PoseSE3::from_yaw(0, Vec3(3, 0, 0)), PoseSE3::from_yaw(0, Vec3(0, 1.5, 0)),
                                  PoseSE3::from_yaw(0, Vec3(0, 0, 0.4))};
  const auto r = nearest_pose_deviation(p, traj);
  EXPECT_NEAR(r.deviation, 0.4, 1e-15);
  EXPECT_EQ(r.nearest_index, 2u);
  EXPECT_EQ(r.bin, DeviationBin::kNear);
  EXPECT_THROW(nearest_pose_deviation(p, std::span<const PoseSE3>{}), Error);
}

TEST(Coverage, BinEdges) {
  EXPECT_EQ(coverage_bin(0.0), CoverageBin::kLow);
  EXPECT_EQ(coverage_bin(0.3), CoverageBin::kLow);
  EXPECT_EQ(coverage_bin(0.31), CoverageBin::kMid);
  EXPECT_EQ(coverage_bin(0.5), CoverageBin::kMid);
  EXPECT_EQ(coverage_bin(0.51), CoverageBin::kHigh);
  EXPECT_EQ(coverage_bin(1.0), CoverageBin::kHigh);
}

TEST(Coverage, GroupsPartitionInputs) {
  const std::vector<double> ratios{0.1, 0.4, 0.9};
  const auto g = bin_by_coverage(ratios);
  EXPECT_EQ(g[0], std::vector<std::size_t>{0});
  EXPECT_EQ(g[1], std::vector<std::size_t>{1});
  EXPECT_EQ(g[2], std::vector<std::size_t>{2});

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> many(500);
  for (auto& r : many) r = u(rng);
  many[7] = 0.3;
  many[8] = 0.5;
  const auto parts = bin_by_coverage(many);
  std::vector<int> seen(many.size(), 0);
  for (int b = 0; b < 3; ++b) {
    for (auto i : parts[b]) {
      ++seen[i];
      EXPECT_EQ(static_cast<int>(coverage_bin(many[i])), b);
    }
  }
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Box2D, NothingInFrontOfCamera) {
  CameraSpec cam;
  cam.intrinsics = {100, 100, 50, 40, 100, 80};
  const std::vector<Vec3> pts{Vec3(0, 0, -2), Vec3(1, 1, -5)};
  EXPECT_FALSE(derive_2d_box(pts, cam));
}

TEST(Box2D, SinglePointIsDegenerate) {
  CameraSpec cam;
  cam.intrinsics = {100, 100, 50, 40, 100, 80};
  const std::vector<Vec3> pts{Vec3(0.5, -0.2, 5)};
  const auto box = derive_2d_box(pts, cam);
  ASSERT_TRUE(box);
  EXPECT_DOUBLE_EQ(box->u_min, 60.0);
  EXPECT_DOUBLE_EQ(box->u_max, 60.0);
  EXPECT_DOUBLE_EQ(box->v_min, 36.0);
  EXPECT_DOUBLE_EQ(box->v_max, 36.0);
}

TEST(Box2D, CuboidCornersMatchProjection) {
  CameraSpec cam;
  cam.intrinsics = {200, 180, 160, 120, 320, 240};
  std::vector<Vec3> pts;
  double umin = 1e9, umax = -1e9, vmin = 1e9, vmax = -1e9;
  for (int i = 0; i < 8; ++i) {
    const Vec3 p(-0.5 + 1.2 * (i & 1), -0.3 + 0.9 * ((i >> 1) & 1), 6 + 2 * ((i >> 2) & 1));
    pts.push_back(p);
    const double u = 200 * p.x() / p.z() + 160, v = 180 * p.y() / p.z() + 120;
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
  }
  const auto box = derive_2d_box(pts, cam);
  ASSERT_TRUE(box);
  EXPECT_NEAR(box->u_min, umin, 1e-12);
  EXPECT_NEAR(box->u_max, umax, 1e-12);
  EXPECT_NEAR(box->v_min, vmin, 1e-12);
  EXPECT_NEAR(box->v_max, vmax, 1e-12);
}

TEST(Box2D, ClippedToImage) {
  CameraSpec cam;
  cam.intrinsics = {100, 100, 50, 40, 100, 80};
  const std::vector<Vec3> pts{Vec3(0, 0, 5), Vec3(10, 10, 5)};
  const auto box = derive_2d_box(pts, cam);
  ASSERT_TRUE(box);
  EXPECT_EQ(box->u_max, 99.0);
  EXPECT_EQ(box->v_max, 79.0);
  EXPECT_EQ(box->u_min, 50.0);
}

TEST(PairedL1, EqualImagesGiveZero) {
  auto r = blank_render(4, 3);
  for (auto& v : r.rgb.data) v = 77;
  std::fill(r.surfel_index.data.begin(), r.surfel_index.data.end(), 0u);
  EXPECT_EQ(paired_l1(r, r.rgb), 0.0);
}

TEST(PairedL1, BlackAgainstWhite) {
  auto r = blank_render(5, 5);
  r.surfel_index.at(2, 2) = 3;
  const RgbImage white(5, 5, 255);
  EXPECT_DOUBLE_EQ(*paired_l1(r, white), 1.0);
  EXPECT_DOUBLE_EQ(*paired_l1(r, white, IntensityScale::kRaw), 255.0);
}

TEST(PairedL1, NoCoverageIsUndefined) {
  EXPECT_FALSE(paired_l1(blank_render(3, 3), RgbImage(3, 3)));
}

TEST(PairedL1, RandomMaskedAgainstSum) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> byte(0, 255), coin(0, 2);
  auto r = blank_render(8, 8);
  RgbImage real(8, 8);
  long total = 0, channels = 0;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const bool covered = coin(rng) != 0;
      if (covered) r.surfel_index.at(x, y) = static_cast<std::uint32_t>(x + 8 * y);
      for (int c = 0; c < 3; ++c) {
        r.rgb.at(x, y, c) = static_cast<std::uint8_t>(byte(rng));
        real.at(x, y, c) = static_cast<std::uint8_t>(byte(rng));
        if (covered) {
          total += std::abs(r.rgb.at(x, y, c) - real.at(x, y, c));
          ++channels;
        }
      }
    }
  }
  ASSERT_GT(channels, 0);
  EXPECT_NEAR(*paired_l1(r, real), static_cast<double>(total) / channels / 255.0, 1e-15);
}

TEST(PairedL1, DimensionMismatch) {
  try {
    paired_l1(blank_render(4, 4), RgbImage(4, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
}

TEST(EvalReport, RowsAndBinMeans) {
  std::vector<EvalRecord> records(4);
  records[0] = {0, 0.0, 0.8, 0.02, std::nullopt};
  records[1] = {1, 0.5, 0.6, 0.04, std::nullopt};
  records[2] = {2, 1.5, 0.2, std::nullopt, std::nullopt};
  records[3] = {3, 3.0, 0.4, std::nullopt, std::string("dimension error: mismatch")};
  const auto j = eval_report(records);
  ASSERT_EQ(j["poses"].size(), 4u);
  EXPECT_EQ(j["poses"][0]["deviation_bin"], "d <= 1.0");
  EXPECT_EQ(j["poses"][2]["coverage_bin"], "r <= 0.3");
  EXPECT_FALSE(j["poses"][2].contains("l1"));
  EXPECT_EQ(j["poses"][3]["error"], "dimension error: mismatch");

  const auto& near = j["by_deviation"][0];
  EXPECT_EQ(near["count"], 2);
  EXPECT_NEAR(near["mean_l1"].get<double>(), 0.03, 1e-15);
  EXPECT_NEAR(near["mean_coverage_ratio"].get<double>(), 0.7, 1e-15);
  EXPECT_EQ(j["by_deviation"][1]["count"], 1);
  EXPECT_FALSE(j["by_deviation"][1].contains("mean_l1"));
  EXPECT_EQ(j["by_coverage"][2]["count"], 2);
  EXPECT_EQ(j["by_coverage"][1]["count"], 1);
}

TEST(Seeds, MixSeedSpreadsStreams) {
  EXPECT_NE(mix_seed(0, 0), mix_seed(0, 1));
  EXPECT_NE(mix_seed(0, 1), mix_seed(1, 0));
  EXPECT_EQ(mix_seed(7, 3), mix_seed(7, 3));
}
