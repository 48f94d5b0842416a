#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "semrecon/grid.hpp"

namespace semrecon {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Face = std::array<int, 3>;

/// Triangle mesh with OBJ-style texture coordinates: `face_uvs[f][k]` indexes
/// `uvs` for corner k of face f. Seam vertices therefore keep a single
/// position while carrying one uv per side of the seam.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;  // counter-clockwise seen from outside
  std::vector<Vec2> uvs;
  std::vector<Face> face_uvs;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_faces() const { return static_cast<int>(faces.size()); }
  bool has_uv() const { return !uvs.empty() && face_uvs.size() == faces.size(); }
};

/// Per-vertex displacement applied to a template.
struct Deformation {
  std::vector<Vec3> offsets;
};

/// Surface point addressed by a UV texel.
struct TexelMapping {
  int face = -1;
  Vec3 bary = Vec3::Zero();
  bool covered = false;  // false when inherited from the nearest covered texel
};

/// The fixed UV-to-surface map: one surface point per texel of an H x W grid.
/// It only references face indices and barycentrics, so it is independent of
/// vertex positions.
struct UVMapping {
  int height = 0;
  int width = 0;
  std::vector<TexelMapping> texels;  // row-major

  const TexelMapping& at(int row, int col) const { return texels[static_cast<std::size_t>(row) * width + col]; }
  std::size_t size() const { return texels.size(); }
};

using Edge = std::pair<int, int>;

/// Throws ParameterError unless face indices are in range and non-degenerate
/// and uv coordinates lie in [0, 1]^2.
void validate(const Mesh& mesh);

/// Unique undirected edges, each as (min, max), sorted.
std::vector<Edge> unique_edges(const Mesh& mesh);

/// Every edge is shared by exactly two faces.
bool is_watertight(const Mesh& mesh);

/// Unit icosphere with 20 * 4^subdivisions faces and a longitude/latitude
/// uv layout. The pole axis is +y and the seam lies on the -z meridian.
Mesh make_sphere(int subdivisions);

/// Rasterizes the uv triangles of `mesh` into an h_uv x w_uv texel grid.
UVMapping build_uv_mapping(const Mesh& mesh, int h_uv, int w_uv);

Mesh apply_deformation(const Mesh& mesh, const Deformation& d);

/// Sum over non-isolated vertices of |v_i - mean(neighbors(v_i))|^2.
/// When `grad` is non-empty the gradient w.r.t. vertices is added to it.
double laplacian_energy(const Mesh& mesh, std::span<Vec3> grad = {});

/// Mean squared length over the unique edges. Adds its gradient to `grad`.
double edge_regularizer(const Mesh& mesh, std::span<Vec3> grad = {});

/// One representative uv per vertex: the uv of the first face corner that
/// references the vertex.
std::vector<Vec2> vertex_uvs(const Mesh& mesh);

/// Bilinear sample of a UV-space map (H_uv x W_uv x C) at `uv`.
std::vector<double> sample_uv_map(const Grid& map, const Vec2& uv);

/// Per-vertex argmax of `canonical` (H_uv x W_uv x N_p) sampled at each
/// vertex's representative uv; ties go to the lowest part index.
std::vector<int> vertex_part_labels(const Mesh& mesh, const Grid& canonical);

/// Wavefront OBJ with `v`, `vt` and `f i/ti j/tj k/tk` records.
void write_obj(const std::filesystem::path& path, const Mesh& mesh);
Mesh read_obj(const std::filesystem::path& path);

}  // namespace semrecon
