#include "semrecon/camera.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "semrecon/errors.hpp"
#include "semrecon/rng.hpp"

namespace semrecon {

std::array<double, Camera::kNumParams> Camera::to_array() const {
  return {scale, translation.x(), translation.y(), quat[0], quat[1], quat[2], quat[3]};
}

Camera Camera::from_array(std::span<const double> p) {
  if (p.size() != kNumParams) throw ParameterError("Camera::from_array: expected 7 values");
  Camera c;
  c.scale = p[0];
  c.translation = Vec2(p[1], p[2]);
  c.quat = Quat(p[3], p[4], p[5], p[6]);
  return c;
}

int CameraHypotheses::best() const {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
    if (scores[i] < scores[best]) best = i;
  }
  return best;
}

namespace {

// Unnormalized rotation M(q) with R = M / |q|^2, and its partials dM/dq_k.
Eigen::Matrix3d rotation_numerator(const Quat& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d m;
  m << w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z;
  return m;
}

std::array<Eigen::Matrix3d, 4> rotation_numerator_partials(const Quat& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Eigen::Matrix3d, 4> d;
  d[0] << w, -z, y, z, w, -x, -y, x, w;
  d[1] << x, y, z, y, -x, -w, z, w, -x;
  d[2] << -y, x, w, x, y, z, -w, z, -y;
  d[3] << -z, -w, x, w, -z, y, x, y, z;
  for (auto& m : d) m *= 2.0;
  return d;
}

}  // namespace

Eigen::Matrix3d rotation_matrix(const Quat& q) { return rotation_numerator(q) / q.squaredNorm(); }

Quat quat_multiply(const Quat& a, const Quat& b) {
  return Quat(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

Quat quat_from_axis_angle(const Vec3& axis, double angle) {
  const Vec3 n = axis.normalized();
  const double s = std::sin(0.5 * angle);
  return Quat(std::cos(0.5 * angle), s * n.x(), s * n.y(), s * n.z());
}

Projection project(std::span<const Vec3> points, const Camera& cam) {
  const Eigen::Matrix3d r = rotation_matrix(cam.quat);
  Projection out;
  out.points.resize(points.size());
  out.depth.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 rp = r * points[i];
    out.points[i] = cam.scale * rp.head<2>() + cam.translation;
    out.depth[i] = rp.z();
  }
  return out;
}

void project_backward(std::span<const Vec3> points, const Camera& cam, std::span<const Vec2> g_proj,
                      std::span<const double> g_depth, std::span<Vec3> g_points,
                      std::array<double, Camera::kNumParams>& g_cam) {
  const double n2 = cam.quat.squaredNorm();
  const Eigen::Matrix3d m = rotation_numerator(cam.quat);
  const Eigen::Matrix3d r = m / n2;
  const auto dm = rotation_numerator_partials(cam.quat);

  // Adjoint of the rotated point, accumulated as G = sum_i g_i p_i^T so the
  // quaternion gradient is a single trace per component.
  Eigen::Matrix3d outer = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 rp = r * points[i];
    Vec3 g_rot(cam.scale * g_proj[i].x(), cam.scale * g_proj[i].y(), g_depth.empty() ? 0.0 : g_depth[i]);
    g_cam[0] += g_proj[i].dot(rp.head<2>());
    g_cam[1] += g_proj[i].x();
    g_cam[2] += g_proj[i].y();
    outer += g_rot * points[i].transpose();
    if (!g_points.empty()) g_points[i] += r.transpose() * g_rot;
  }
  // dR/dq_k = (dM/dq_k - 2 q_k R) / |q|^2
  for (int k = 0; k < 4; ++k) {
    const Eigen::Matrix3d dr = (dm[k] - 2.0 * cam.quat[k] * r) / n2;
    g_cam[3 + k] += (dr.cwiseProduct(outer)).sum();
  }
}

Camera normalize_rotation(const Camera& cam) {
  const double n = cam.quat.norm();
  if (!(n > 1e-8) || !std::isfinite(n)) throw NumericalError("normalize_rotation: quaternion norm is ~0");
  Camera out = cam;
  out.quat /= n;
  return out;
}

CameraHypotheses init_hypotheses(int k, std::uint64_t seed) {
  if (k < 1) throw ParameterError("init_hypotheses: k must be >= 1");
  constexpr double kNoise = 5.0 * std::numbers::pi / 180.0;
  Rng rng(seed);
  CameraHypotheses hyp;
  for (int i = 0; i < k; ++i) {
    double azimuth = 2.0 * std::numbers::pi * i / k;
    double elevation = 0.0;
    if (k > 1) {
      azimuth += rng.normal(0.0, kNoise);
      elevation += rng.normal(0.0, kNoise);
    }
    Camera cam;
    cam.quat = quat_multiply(quat_from_axis_angle(Vec3::UnitX(), elevation),
                             quat_from_axis_angle(Vec3::UnitY(), azimuth));
    hyp.cameras.push_back(cam);
  }
  hyp.scores.assign(k, std::numeric_limits<double>::infinity());
  return hyp;
}

}  // namespace semrecon
