#ifndef SURFELSIM_DISTANCE_TRANSFORM_HPP
#define SURFELSIM_DISTANCE_TRANSFORM_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "surfelsim/image.hpp"

namespace surfelsim {

using MaskImage = Image<std::uint8_t, 1>;

namespace detail {

// Lower envelope of parabolas (x − q)² + f(q) over q with finite f
// (Felzenszwalb & Huttenlocher). Writes min over q into `out`.
inline void squared_edt_1d(const std::vector<double>& f, std::vector<double>& out) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(f.size());
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    auto intersect = [&](int p) {
      return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
    };
    double s = intersect(v[k]);
    while (s <= z[k]) {  // z[0] = −∞ stops the scan
      --k;
      s = intersect(v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    out.assign(n, kInf);
    return;
  }
  out.resize(n);
  int j = 0;
  for (int x = 0; x < n; ++x) {
    while (z[j + 1] < x) ++j;
    const double d = x - v[j];
    out[x] = d * d + f[v[j]];
  }
}

}  // namespace detail

/**
 * @brief Exact Euclidean distance from each pixel to the nearest non-empty pixel.
 *
 * `empty_mask` is nonzero where a pixel is empty. Non-empty pixels get 0; a
 * fully empty image gets +∞ everywhere.
 */
inline FloatImage distance_map(const MaskImage& empty_mask) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const int w = empty_mask.width, h = empty_mask.height;
  FloatImage out(w, h, std::numeric_limits<float>::infinity());
  if (w == 0 || h == 0) return out;

  // Column pass: squared vertical distance to the nearest non-empty pixel in the column.
  std::vector<double> g(static_cast<std::size_t>(w) * h, kInf);
  for (int x = 0; x < w; ++x) {
    double last = kInf;
    for (int y = 0; y < h; ++y) {
      if (!empty_mask.at(x, y)) last = y;
      g[static_cast<std::size_t>(y) * w + x] = last == kInf ? kInf : y - last;
    }
    last = kInf;
    for (int y = h - 1; y >= 0; --y) {
      if (!empty_mask.at(x, y)) last = y;
      if (last != kInf) {
        double& cur = g[static_cast<std::size_t>(y) * w + x];
        cur = std::min(cur, last - y);
      }
    }
  }

  std::vector<double> f(w), row;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = g[static_cast<std::size_t>(y) * w + x];
      f[x] = d == kInf ? kInf : d * d;
    }
    detail::squared_edt_1d(f, row);
    for (int x = 0; x < w; ++x) {
      out.at(x, y) = row[x] == kInf ? std::numeric_limits<float>::infinity()
                                    : static_cast<float>(std::sqrt(row[x]));
    }
  }
  return out;
}

}  // namespace surfelsim

#endif  // SURFELSIM_DISTANCE_TRANSFORM_HPP
