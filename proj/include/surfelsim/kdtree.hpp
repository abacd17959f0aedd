#ifndef SURFELSIM_KDTREE_HPP
#define SURFELSIM_KDTREE_HPP

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "surfelsim/pose.hpp"

namespace surfelsim {

/// Static 3-D kd-tree for exact nearest-neighbour queries.
class KdTree3 {
 public:
  struct Hit {
    std::size_t index = 0;
    double squared_distance = std::numeric_limits<double>::infinity();
  };

  explicit KdTree3(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    axis_.resize(points_.size());
    build(0, order_.size());
  }

  std::size_t size() const { return points_.size(); }

  /// Nearest point; ties resolve to the smallest point index.
  Hit nearest(const Vec3& q) const {
    Hit best;
    if (!points_.empty()) search(0, order_.size(), q, best);
    return best;
  }

 private:
  // Node for the range [lo, hi) sits at mid = (lo + hi) / 2 with its split axis in axis_[mid].
  void build(std::size_t lo, std::size_t hi) {
    if (hi - lo <= 1) return;
    Vec3 mn = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 mx = -mn;
    for (std::size_t i = lo; i < hi; ++i) {
      mn = mn.cwiseMin(points_[order_[i]]);
      mx = mx.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    const std::size_t mid = (lo + hi) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](std::size_t a, std::size_t b) {
                       const double da = points_[a][axis], db = points_[b][axis];
                       return da < db || (da == db && a < b);
                     });
    axis_[mid] = axis;
    build(lo, mid);
    build(mid + 1, hi);
  }

  void search(std::size_t lo, std::size_t hi, const Vec3& q, Hit& best) const {
    if (lo >= hi) return;
    const std::size_t mid = (lo + hi) / 2;
    const std::size_t idx = order_[mid];
    const double d2 = (points_[idx] - q).squaredNorm();
    if (d2 < best.squared_distance || (d2 == best.squared_distance && idx < best.index)) {
      best = {idx, d2};
    }
    if (hi - lo == 1) return;
    const int axis = axis_[mid];
    const double diff = q[axis] - points_[idx][axis];
    const bool left_first = diff <= 0;
    if (left_first) search(lo, mid, q, best);
    else search(mid + 1, hi, q, best);
    if (diff * diff <= best.squared_distance) {
      if (left_first) search(mid + 1, hi, q, best);
      else search(lo, mid, q, best);
    }
  }

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<int> axis_;
};

}  // namespace surfelsim

#endif  // SURFELSIM_KDTREE_HPP
