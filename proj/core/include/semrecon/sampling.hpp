#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>

#include <Eigen/Core>

#include "semrecon/grid.hpp"

namespace semrecon {

/// The four bilinear taps at a continuous index position, with the weight
/// derivatives along each index axis. Positions outside the grid are clamped to
/// the border, where the derivative along the clamped axis is zero.
struct BilinearTaps {
  std::array<int, 4> row{};
  std::array<int, 4> col{};
  std::array<double, 4> weight{};
  std::array<double, 4> dweight_dcol{};
  std::array<double, 4> dweight_drow{};
};

inline BilinearTaps bilinear_taps(double fcol, double frow, int height, int width) {
  auto axis = [](double f, int n, int& i0, int& i1, double& t, bool& active) {
    const double hi = static_cast<double>(n - 1);
    active = f > 0.0 && f < hi;
    const double x = std::clamp(f, 0.0, hi);
    if (n == 1) {
      i0 = i1 = 0;
      t = 0.0;
      active = false;
      return;
    }
    i0 = std::min(static_cast<int>(std::floor(x)), n - 2);
    i1 = i0 + 1;
    t = x - i0;
  };
  int c0, c1, r0, r1;
  double tc, tr;
  bool ac, ar;
  axis(fcol, width, c0, c1, tc, ac);
  axis(frow, height, r0, r1, tr, ar);

  BilinearTaps taps;
  taps.row = {r0, r0, r1, r1};
  taps.col = {c0, c1, c0, c1};
  taps.weight = {(1 - tc) * (1 - tr), tc * (1 - tr), (1 - tc) * tr, tc * tr};
  if (ac) taps.dweight_dcol = {-(1 - tr), (1 - tr), -tr, tr};
  if (ar) taps.dweight_drow = {-(1 - tc), -tc, (1 - tc), tc};
  return taps;
}

/// Continuous index position of a normalized image coordinate: x, y in [-1, 1],
/// y up, pixel centers at ((2c+1)/W - 1, 1 - (2r+1)/H).
inline Eigen::Vector2d image_index_from_normalized(const Eigen::Vector2d& p, int height, int width) {
  return {(p.x() + 1.0) * 0.5 * width - 0.5, (1.0 - p.y()) * 0.5 * height - 0.5};
}

/// Pixel center of (row, col) in normalized image coordinates.
inline Eigen::Vector2d pixel_center(int row, int col, int height, int width) {
  return {(2.0 * col + 1.0) / width - 1.0, 1.0 - (2.0 * row + 1.0) / height};
}

/// Continuous index position of a UV coordinate; texel (r, c) has its center at
/// u = (c + 0.5) / W, v = (r + 0.5) / H.
inline Eigen::Vector2d uv_index(const Eigen::Vector2d& uv, int height, int width) {
  return {uv.x() * width - 0.5, uv.y() * height - 0.5};
}

inline Eigen::Vector2d texel_center(int row, int col, int height, int width) {
  return {(col + 0.5) / width, (row + 0.5) / height};
}

/// Accumulates the bilinear sample of every channel of `grid` into `out`.
inline void gather(const Grid& grid, const BilinearTaps& taps, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (int k = 0; k < 4; ++k) {
    const auto px = grid.pixel(taps.row[k], taps.col[k]);
    for (int ch = 0; ch < grid.channels(); ++ch) out[ch] += taps.weight[k] * px[ch];
  }
}

}  // namespace semrecon
