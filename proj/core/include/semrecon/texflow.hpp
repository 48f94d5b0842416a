#pragma once

#include <span>
#include <vector>

#include "semrecon/camera.hpp"
#include "semrecon/geometry.hpp"
#include "semrecon/grid.hpp"

namespace semrecon {

/// Per-texel source-image coordinate (H_uv x W_uv x 2, normalized image space).
struct TextureFlow {
  Grid grid;

  int height() const { return grid.height(); }
  int width() const { return grid.width(); }
  Vec2 at(int row, int col) const { return {grid(row, col, 0), grid(row, col, 1)}; }
  void set(int row, int col, const Vec2& p) {
    grid(row, col, 0) = p.x();
    grid(row, col, 1) = p.y();
  }
  /// Clamps every coordinate into [-1, 1]^2.
  void clamp();
};

/// H x W x (N_p + 1) per-pixel part probabilities; the background channel is last.
struct PartMap {
  Grid probs;

  int num_parts() const { return probs.channels() - 1; }
  /// Rescales every pixel onto the simplex; all-zero pixels become background.
  void normalize();
};

/// Category-level H_uv x W_uv x N_p part probabilities.
struct CanonicalUV {
  Grid probs;
  int sample_count = 0;
};

/// Bilinear samples of `image` at normalized coordinates with border clamping.
/// Returns n x C values, row-major.
std::vector<double> sample_image(const Grid& image, std::span<const Vec2> coords);

/// d(loss)/d(coords) given d(loss)/d(samples) laid out like sample_image's output.
std::vector<Vec2> sample_image_backward(const Grid& image, std::span<const Vec2> coords,
                                        std::span<const double> g_samples);

/// Part probabilities of `parts` sampled at each texel's flow coordinate, with the
/// background channel dropped.
Grid semantic_uv(const TextureFlow& flow, const PartMap& parts);

/// Elementwise mean of the semantic UV maps.
CanonicalUV aggregate_canonical(std::span<const Grid> maps);

/// Surface point of a texel on `mesh`.
Vec3 surface_point(const Mesh& mesh, const TexelMapping& texel);

/// Each texel takes the projection of its surface point, clamped to [-1, 1]^2.
TextureFlow init_flow_from_projection(const Mesh& mesh, const Camera& cam, const UVMapping& mapping);

/// Flow value at a uv coordinate (bilinear over texel centers).
Vec2 flow_at_uv(const TextureFlow& flow, const Vec2& uv);

/// Adds d(loss)/d(flow grid) for `g` = d(loss)/d(flow_at_uv(flow, uv)).
void flow_at_uv_backward(const TextureFlow& flow, const Vec2& uv, const Vec2& g, Grid& g_flow);

}  // namespace semrecon
