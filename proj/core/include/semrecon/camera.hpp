#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "semrecon/geometry.hpp"

namespace semrecon {

using Quat = Eigen::Vector4d;  // (w, x, y, z)

/// Weak-perspective camera: p = scale * (R(q) X).xy + translation, in
/// normalized image coordinates ([-1, 1]^2, y up). The viewer sits on +z, so a
/// larger rotated z is closer.
struct Camera {
  double scale = 1.0;
  Vec2 translation = Vec2::Zero();
  Quat quat = Quat(1.0, 0.0, 0.0, 0.0);

  static constexpr int kNumParams = 7;

  /// Flat layout: scale, tx, ty, qw, qx, qy, qz.
  std::array<double, kNumParams> to_array() const;
  static Camera from_array(std::span<const double> p);
};

struct CameraHypotheses {
  std::vector<Camera> cameras;
  std::vector<double> scores;  // latest total loss per hypothesis

  int size() const { return static_cast<int>(cameras.size()); }
  /// Index of the lowest score; ties resolve to the lowest index.
  int best() const;
};

/// Rotation of the normalized quaternion q / |q|.
Eigen::Matrix3d rotation_matrix(const Quat& q);

Quat quat_multiply(const Quat& a, const Quat& b);
Quat quat_from_axis_angle(const Vec3& axis, double angle);

struct Projection {
  std::vector<Vec2> points;
  std::vector<double> depth;  // rotated z before it is dropped
};

Projection project(std::span<const Vec3> points, const Camera& cam);

/// Reverse pass of `project`. Adds d(loss)/d(points) into `g_points` (when
/// non-empty) and d(loss)/d(camera) into `g_cam`; `g_depth` may be empty.
void project_backward(std::span<const Vec3> points, const Camera& cam, std::span<const Vec2> g_proj,
                      std::span<const double> g_depth, std::span<Vec3> g_points,
                      std::array<double, Camera::kNumParams>& g_cam);

/// Renormalizes the quaternion; throws NumericalError when |q| <= 1e-8.
Camera normalize_rotation(const Camera& cam);

/// k cameras with unit scale, zero translation and azimuths 2*pi*i/k about +y.
/// For k > 1 each azimuth and elevation is perturbed by N(0, 5 deg) noise.
CameraHypotheses init_hypotheses(int k, std::uint64_t seed);

}  // namespace semrecon
