#ifndef SURFELSIM_POSE_HPP
#define SURFELSIM_POSE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace surfelsim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/**
 * @brief Rigid transform x ↦ R·x + t.
 *
 * Used for sensor, camera and object poses. A pose named `a_from_b` maps
 * coordinates in frame b to frame a; most poses in this library are
 * sensor→world or object→world.
 */
struct PoseSE3 {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static PoseSE3 identity() { return {}; }

  static PoseSE3 from_yaw(double yaw, const Vec3& t = Vec3::Zero()) {
    const double c = std::cos(yaw), s = std::sin(yaw);
    PoseSE3 p;
    p.rotation << c, -s, 0, s, c, 0, 0, 0, 1;
    p.translation = t;
    return p;
  }

  /// 12 numbers, row-major 3×4 [R|t].
  static PoseSE3 from_rows(const std::array<double, 12>& m) {
    PoseSE3 p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) p.rotation(r, c) = m[r * 4 + c];
      p.translation(r) = m[r * 4 + 3];
    }
    return p;
  }

  std::array<double, 12> to_rows() const {
    std::array<double, 12> m{};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[r * 4 + c] = rotation(r, c);
      m[r * 4 + 3] = translation(r);
    }
    return m;
  }

  Vec3 operator*(const Vec3& x) const { return rotation * x + translation; }

  PoseSE3 operator*(const PoseSE3& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  PoseSE3 inverse() const {
    const Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  /// Orthonormality and det = +1 within `tol` elementwise.
  bool is_valid(double tol = 1e-6) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const Mat3 gram = rotation.transpose() * rotation;
    if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(rotation.determinant() - 1.0) <= tol;
  }

  /// Heading of the x axis in the world xy-plane.
  double yaw() const { return std::atan2(rotation(1, 0), rotation(0, 0)); }
};

inline Mat3 skew(const Vec3& w) {
  Mat3 s;
  s << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return s;
}

/**
 * @brief Matrix logarithm of a rotation, returned as the skew-symmetric matrix.
 *
 * Uses the Rodrigues inverse for θ away from π, and the symmetric part
 * (R + I)/2 = a·aᵀ near π where sin θ vanishes.
 */
inline Mat3 rotation_log(const Mat3& r) {
  const Vec3 vee(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double sin_theta = 0.5 * vee.norm();
  const double cos_theta = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);

  if (theta < 1e-12) return 0.5 * (r - r.transpose());
  if (std::numbers::pi - theta > 1e-6) {
    return (theta / (2.0 * sin_theta)) * (r - r.transpose());
  }
  // Near π: axis is the dominant eigenvector of (R + I)/2.
  Eigen::SelfAdjointEigenSolver<Mat3> eig(0.5 * (r + Mat3::Identity()));
  Vec3 axis = eig.eigenvectors().col(2);
  // The sign is fixed by the (small) antisymmetric part when it is informative.
  if (axis.dot(vee) < 0) axis = -axis;
  return skew(theta * axis);
}

/// Geodesic angle between two rotations, ‖log(aᵀb)‖_F / √2.
inline double rotation_distance(const Mat3& a, const Mat3& b) {
  return rotation_log(a.transpose() * b).norm() / std::numbers::sqrt2;
}

/// Projects a near-rotation onto SO(3) (nearest in Frobenius norm).
inline Mat3 orthonormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

}  // namespace surfelsim

#endif  // SURFELSIM_POSE_HPP
