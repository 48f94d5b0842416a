#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "semrecon/camera.hpp"
#include "semrecon/geometry.hpp"
#include "semrecon/grid.hpp"
#include "semrecon/softras.hpp"
#include "semrecon/texflow.hpp"

namespace semrecon {

struct LossWeights {
  double iou = 1.0;
  double img = 1.0;
  double sp = 1.0;
  double sv = 0.1;
  double tcyc = 0.5;
  double lap = 0.1;
  double edge = 0.1;

  void validate() const;
};

struct LossReport {
  double iou = 0.0;
  double img = 0.0;
  double sp = 0.0;
  double sv = 0.0;
  double tcyc = 0.0;
  double lap = 0.0;
  double edge = 0.0;
  double total = 0.0;

  /// Recomputes the weighted sum from the term values.
  double weighted_sum(const LossWeights& w) const;
};

/// -sum(r g) / sum(r + g - r g); 0 when both maps are empty. When `grad` is
/// given it receives d/d(rendered).
double neg_iou(const Grid& rendered, const Grid& gt, Grid* grad = nullptr);

/// Mean over scales 1, 1/2 and 1/4 of the foreground-masked per-pixel MSE.
/// Images are box-filtered per scale; a pooled pixel is foreground when its
/// pooled mask is >= 0.5. Scales without foreground are skipped.
double image_loss(const Grid& rendered, const Grid& target, const Grid& mask, Grid* grad = nullptr,
                  std::array<double, 3>* per_scale = nullptr);

/// Mean squared difference between the part channels of `parts` (background
/// excluded) and `rendered` (H x W x N_p).
double semantic_prob_loss(const PartMap& parts, const Grid& rendered, Grid* grad = nullptr);

/// mean_x min_y |x - y|^2 + mean_y min_x |x - y|^2. Adds d/dx into `grad_x`.
double chamfer(std::span<const Vec2> x, std::span<const Vec2> y, std::span<Vec2> grad_x = {});

/// Pixel centers whose argmax over all N_p + 1 channels is part p, each list
/// subsampled to at most `samples_per_part` points with a seeded shuffle.
struct PartSamples {
  std::vector<std::vector<Vec2>> points;  // indexed by part
};
PartSamples sample_part_pixels(const PartMap& parts, int samples_per_part, std::uint64_t seed);

/// sum_p chamfer(project(template_p), Y_p) / |template_p| over parts with both
/// vertices and pixels. Gradients are added when the spans are non-empty.
double semantic_vertex_loss(const Mesh& tmpl, std::span<const int> labels, const Camera& cam,
                            const PartSamples& samples,
                            std::array<double, Camera::kNumParams>* g_cam = nullptr,
                            std::span<Vec3> g_vertices = {});

double semantic_vertex_loss(const Mesh& tmpl, std::span<const int> labels, const Camera& cam,
                            const PartMap& parts, int samples_per_part, std::uint64_t seed);

struct TextureCycleOptions {
  // Count texels that only inherited their surface point from a neighbor.
  bool include_inherited_texels = false;
  double min_coverage = 1e-8;
};

/// Per-face squared distance between the mean flow coordinate of the texels
/// on the face and the coverage-weighted pixel-center centroid of the face,
/// averaged over faces where both are defined.
double texture_cycle_loss(const TextureFlow& flow, const UVMapping& mapping, const RasterOutput& raster,
                          Grid* g_flow = nullptr, std::vector<double>* g_coverage = nullptr,
                          const TextureCycleOptions& opts = {});

/// Observed data for one instance.
struct Observation {
  Grid image;  // H x W x 3
  Grid mask;   // H x W x 1, binary
  PartMap parts;
};

/// Per-instance optimized quantities.
struct InstanceParams {
  std::vector<Vec3> offsets;
  Camera camera;
  TextureFlow flow;
};

struct ParamGradient {
  std::vector<Vec3> offsets;
  std::array<double, Camera::kNumParams> camera{};
  Grid flow;
};

/// Category-level state and configuration held fixed while an instance is fit.
struct ObjectiveContext {
  const Mesh* tmpl = nullptr;
  const UVMapping* mapping = nullptr;
  RasterConfig raster;
  LossWeights weights;
  const Grid* canonical = nullptr;  // H_uv x W_uv x N_p, may be null in round one
  std::vector<int> labels;          // per template vertex
  PartSamples part_samples;
  TextureCycleOptions tcyc;
};

/// Weighted sum of every enabled term plus the smoothness regularizers.
/// Zero-weight terms are skipped and reported as 0. Throws NumericalError
/// naming the term when a value is not finite.
LossReport total_loss(const ObjectiveContext& ctx, const Observation& obs, const InstanceParams& params,
                      ParamGradient* grad = nullptr);

}  // namespace semrecon
