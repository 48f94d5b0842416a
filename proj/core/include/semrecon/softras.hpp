#pragma once

#include <span>
#include <vector>

#include "semrecon/camera.hpp"
#include "semrecon/geometry.hpp"
#include "semrecon/grid.hpp"

namespace semrecon {

struct RasterConfig {
  int height = 64;
  int width = 64;
  double sigma = 1e-4;        // coverage bandwidth, squared normalized-image units
  double gamma = 1e-4;        // depth softmax temperature
  double depth_scale = 0.01;  // rotated z is scaled by this before dividing by gamma
  double background = 0.0;    // attribute value outside the silhouette
  double support = 3.5;       // coverage support radius in units of sqrt(sigma)

  void validate() const;
};

/// Per-corner attributes: corner k of face f reads row `index[f][k]` of the
/// n x channels `values` table. Per-vertex attributes use the mesh faces as the
/// index; uv-indexed attributes use the mesh face_uvs.
struct AttributeTable {
  int channels = 0;
  std::vector<double> values;
  std::vector<Face> index;

  int rows() const { return channels == 0 ? 0 : static_cast<int>(values.size()) / channels; }
  static AttributeTable per_vertex(const Mesh& mesh, std::vector<double> values, int channels);
  static AttributeTable per_uv(const Mesh& mesh, std::vector<double> values, int channels);
};

/// One non-zero entry of the face coverage map: probability that face `face`
/// covers pixel `pixel` (row-major index).
struct CoverageEntry {
  int face = 0;
  int pixel = 0;
  double prob = 0.0;
};

struct RasterOutput {
  int height = 0;
  int width = 0;
  Grid silhouette;  // H x W x 1
  Grid attributes;  // H x W x C, composited over the background
  Grid blend;       // H x W x C, depth-weighted face blend before compositing

  /// Sparse |F| x (H*W) coverage map, grouped by face; `face_offsets[j]` ..
  /// `face_offsets[j+1]` is the row of face j.
  std::vector<CoverageEntry> coverage;
  std::vector<std::size_t> face_offsets;

  std::span<const CoverageEntry> face_row(int face) const {
    return {coverage.data() + face_offsets[face], face_offsets[face + 1] - face_offsets[face]};
  }

  // State kept for the reverse pass, one record per coverage entry.
  struct Sample {
    double lambda[3];
    double beta[3];
    double mu_sum;
    double z;
    double weight;  // normalized depth-softmax weight within the pixel
    double expz;    // exp(zeta - max zeta) within the pixel
    double edge_t;
    int edge;
    bool inside;
  };
  std::vector<Sample> samples;
  std::vector<std::size_t> pixel_offsets;  // size H*W + 1
  std::vector<int> pixel_entries;          // coverage indices grouped by pixel
  std::vector<double> pixel_norm;          // softmax denominator per pixel
};

struct RasterGradient {
  std::vector<Vec2> points;
  std::vector<double> depth;
  std::vector<double> attributes;  // same layout as AttributeTable::values
};

/// Soft rasterization of projected triangles.
RasterOutput rasterize_projected(const Projection& proj, std::span<const Face> faces,
                                 const AttributeTable& attrs, const RasterConfig& cfg);

RasterOutput rasterize(const Mesh& mesh, const Camera& cam, const AttributeTable& attrs,
                       const RasterConfig& cfg);

/// Reverse pass. Any adjoint may be null/empty; `g_coverage` is indexed like
/// `out.coverage`.
RasterGradient rasterize_backward(const Projection& proj, std::span<const Face> faces,
                                  const AttributeTable& attrs, const RasterConfig& cfg,
                                  const RasterOutput& out, const Grid* g_silhouette,
                                  const Grid* g_attributes, std::span<const double> g_coverage);

Grid render_silhouette(const Mesh& mesh, const Camera& cam, const RasterConfig& cfg);

/// Canonical part probabilities sampled at every uv of the mesh, rasterized as
/// attributes. Returns H x W x N_p.
Grid render_part_probs(const Mesh& mesh, const Camera& cam, const Grid& canonical,
                       const UVMapping& mapping, const RasterConfig& cfg);

/// Canonical map sampled at each mesh uv, as a uv-indexed attribute table.
AttributeTable canonical_attributes(const Mesh& mesh, const Grid& canonical);

}  // namespace semrecon
