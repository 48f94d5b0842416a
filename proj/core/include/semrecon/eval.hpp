#pragma once

#include <string>
#include <vector>

#include "semrecon/camera.hpp"
#include "semrecon/geometry.hpp"
#include "semrecon/grid.hpp"
#include "semrecon/texflow.hpp"

namespace semrecon {

/// Named 2D keypoints in normalized image coordinates.
struct KeypointSet {
  std::vector<std::string> names;
  std::vector<Vec2> points;
  std::vector<bool> visible;

  int size() const { return static_cast<int>(names.size()); }
  /// Index of `name`, or -1.
  int find(const std::string& name) const;
};

/// Hard IoU after thresholding `rendered` at `threshold`; `gt` counts as
/// foreground above 0.5. Two empty masks give 1.
double mask_iou(const Grid& rendered, const Grid& gt, double threshold = 0.5);

struct PckResult {
  int hits = 0;
  int total = 0;

  double percent() const { return total == 0 ? 0.0 : 100.0 * hits / total; }
  PckResult& operator+=(const PckResult& o) {
    hits += o.hits;
    total += o.total;
    return *this;
  }
};

/// A keypoint prediction is correct when it lies within alpha * max(H, W)
/// pixels of the target keypoint.
bool pck_hit(const Vec2& predicted, const Vec2& target, double alpha, int height, int width);

/// The parts of a fitted instance that keypoint transfer reads.
struct FittedView {
  const TextureFlow* flow = nullptr;
  Camera camera;
  const KeypointSet* keypoints = nullptr;
};

/// Transfer through the texture flow: each source keypoint selects the texel
/// whose flow coordinate is nearest, the texel's face is looked up in the uv
/// mapping, and the prediction is the mean target flow coordinate over the
/// covered texels of that face. Only keypoints visible in both views count.
PckResult kt_flow(const FittedView& src, const FittedView& tgt, const UVMapping& mapping, double alpha,
                  int height, int width);

/// Transfer through the cameras: each source keypoint selects the mesh vertex
/// whose projection under the source camera is nearest, and the prediction is
/// that vertex projected with the target camera.
PckResult kt_camera(const FittedView& src, const FittedView& tgt, const Mesh& mesh, double alpha, int height,
                    int width);

/// Geodesic angle in degrees between two rotations, insensitive to the
/// quaternion sign.
double rotation_error(const Quat& q, const Quat& q_gt);
double rotation_error(const Camera& cam, const Quat& q_gt);

}  // namespace semrecon
