#include "semrecon/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "semrecon/errors.hpp"

namespace semrecon {

int KeypointSet::find(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

double mask_iou(const Grid& rendered, const Grid& gt, double threshold) {
  if (rendered.height() != gt.height() || rendered.width() != gt.width()) {
    throw ParameterError("mask_iou: size mismatch");
  }
  std::size_t inter = 0, uni = 0;
  for (int r = 0; r < gt.height(); ++r) {
    for (int c = 0; c < gt.width(); ++c) {
      const bool a = rendered(r, c) > threshold;
      const bool b = gt(r, c) > 0.5;
      inter += a && b;
      uni += a || b;
    }
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

bool pck_hit(const Vec2& predicted, const Vec2& target, double alpha, int height, int width) {
  const double dx = (predicted.x() - target.x()) * 0.5 * width;
  const double dy = (predicted.y() - target.y()) * 0.5 * height;
  return std::hypot(dx, dy) <= alpha * std::max(height, width);
}

namespace {

void check_views(const FittedView& src, const FittedView& tgt) {
  if (!src.keypoints || !tgt.keypoints) throw ParameterError("keypoint transfer: missing keypoints");
}

}  // namespace

PckResult kt_flow(const FittedView& src, const FittedView& tgt, const UVMapping& mapping, double alpha,
                  int height, int width) {
  check_views(src, tgt);
  if (!src.flow || !tgt.flow) throw ParameterError("kt_flow: missing texture flow");
  const TextureFlow& fs = *src.flow;
  const TextureFlow& ft = *tgt.flow;
  if (fs.height() != mapping.height || fs.width() != mapping.width || ft.height() != mapping.height ||
      ft.width() != mapping.width) {
    throw ParameterError("kt_flow: flow grid does not match the uv mapping");
  }

  // Mean target flow coordinate per face over the covered texels.
  int num_faces = 0;
  for (const TexelMapping& t : mapping.texels) num_faces = std::max(num_faces, t.face + 1);
  std::vector<Vec2> centers(num_faces, Vec2::Zero());
  std::vector<int> counts(num_faces, 0);
  for (int r = 0; r < mapping.height; ++r) {
    for (int c = 0; c < mapping.width; ++c) {
      const TexelMapping& t = mapping.at(r, c);
      if (!t.covered) continue;
      centers[t.face] += ft.at(r, c);
      ++counts[t.face];
    }
  }

  PckResult res;
  const KeypointSet& ks = *src.keypoints;
  const KeypointSet& kt = *tgt.keypoints;
  for (int i = 0; i < ks.size(); ++i) {
    const int j = kt.find(ks.names[i]);
    if (j < 0 || !ks.visible[i] || !kt.visible[j]) continue;
    ++res.total;
    double best = std::numeric_limits<double>::infinity();
    int face = -1;
    for (int r = 0; r < mapping.height; ++r) {
      for (int c = 0; c < mapping.width; ++c) {
        const double d = (fs.at(r, c) - ks.points[i]).squaredNorm();
        if (d < best) {
          best = d;
          face = mapping.at(r, c).face;
        }
      }
    }
    if (face < 0 || counts[face] == 0) continue;
    const Vec2 pred = centers[face] / counts[face];
    res.hits += pck_hit(pred, kt.points[j], alpha, height, width);
  }
  return res;
}

PckResult kt_camera(const FittedView& src, const FittedView& tgt, const Mesh& mesh, double alpha, int height,
                    int width) {
  check_views(src, tgt);
  if (mesh.vertices.empty()) throw ParameterError("kt_camera: empty mesh");
  const Projection ps = project(mesh.vertices, src.camera);
  const Projection pt = project(mesh.vertices, tgt.camera);

  PckResult res;
  const KeypointSet& ks = *src.keypoints;
  const KeypointSet& kt = *tgt.keypoints;
  for (int i = 0; i < ks.size(); ++i) {
    const int j = kt.find(ks.names[i]);
    if (j < 0 || !ks.visible[i] || !kt.visible[j]) continue;
    ++res.total;
    std::size_t nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < ps.points.size(); ++v) {
      const double d = (ps.points[v] - ks.points[i]).squaredNorm();
      if (d < best) {
        best = d;
        nearest = v;
      }
    }
    res.hits += pck_hit(pt.points[nearest], kt.points[j], alpha, height, width);
  }
  return res;
}

double rotation_error(const Quat& q, const Quat& q_gt) {
  const double nq = q.norm(), ng = q_gt.norm();
  if (!(nq > 0.0) || !(ng > 0.0)) throw ParameterError("rotation_error: zero quaternion");
  const Quat conj(q_gt[0], -q_gt[1], -q_gt[2], -q_gt[3]);
  const Quat rel = quat_multiply(conj, q) / (nq * ng);
  const double v = std::sqrt(rel[1] * rel[1] + rel[2] * rel[2] + rel[3] * rel[3]);
  return 2.0 * std::atan2(v, std::abs(rel[0])) * 180.0 / std::numbers::pi;
}

double rotation_error(const Camera& cam, const Quat& q_gt) { return rotation_error(cam.quat, q_gt); }

}  // namespace semrecon
