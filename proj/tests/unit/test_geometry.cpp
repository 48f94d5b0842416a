#include <fstream>
#include <set>

#include "semrecon/errors.hpp"
#include "semrecon/geometry.hpp"
#include "semrecon/sampling.hpp"
#include "test_util.hpp"

using namespace semrecon;
using namespace semrecon::testing;

namespace {

Mesh single_triangle(const Vec2& ta, const Vec2& tb, const Vec2& tc) {
  Mesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  m.faces = {Face{0, 1, 2}};
  m.uvs = {ta, tb, tc};
  m.face_uvs = {Face{0, 1, 2}};
  return m;
}

Mesh icosahedron() { return make_sphere(0); }

// Neighbor sets straight from the face list.
std::vector<std::set<int>> neighbors(const Mesh& m) {
  std::vector<std::set<int>> nb(m.vertices.size());
  for (const Face& f : m.faces) {
    for (int k = 0; k < 3; ++k) {
      nb[f[k]].insert(f[(k + 1) % 3]);
      nb[f[k]].insert(f[(k + 2) % 3]);
    }
  }
  return nb;
}

double laplacian_oracle(const Mesh& m) {
  const auto nb = neighbors(m);
  double e = 0.0;
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    if (nb[i].empty()) continue;
    Vec3 mean = Vec3::Zero();
    for (int j : nb[i]) mean += m.vertices[j];
    mean /= static_cast<double>(nb[i].size());
    e += (m.vertices[i] - mean).squaredNorm();
  }
  return e;
}

double edge_oracle(const Mesh& m) {
  std::set<std::pair<int, int>> edges;
  for (const Face& f : m.faces) {
    for (int k = 0; k < 3; ++k) {
      const int a = f[k], b = f[(k + 1) % 3];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  }
  double s = 0.0;
  for (const auto& [a, b] : edges) s += (m.vertices[a] - m.vertices[b]).squaredNorm();
  return s / static_cast<double>(edges.size());
}

Mesh scaled(Mesh m, double s) {
  for (Vec3& v : m.vertices) v *= s;
  return m;
}

}  // namespace

TEST(MakeSphere, IcosahedronCounts) {
  const Mesh m = make_sphere(0);
  EXPECT_EQ(m.num_faces(), 20);
  EXPECT_EQ(m.num_vertices(), 12);
  EXPECT_GE(m.uvs.size(), 12u);
}

TEST(MakeSphere, FaceCountQuadruplesPerLevel) {
  for (int s = 0; s <= 3; ++s) {
    const Mesh m = make_sphere(s);
    EXPECT_EQ(m.num_faces(), 20 * (1 << (2 * s)));
    EXPECT_EQ(m.num_vertices(), 10 * (1 << (2 * s)) + 2);  // Euler: V - E + F = 2
  }
  EXPECT_EQ(make_sphere(1).num_faces(), 80);
}

TEST(MakeSphere, UnitRadiusWatertightValid) {
  for (int s = 0; s <= 3; ++s) {
    const Mesh m = make_sphere(s);
    for (const Vec3& v : m.vertices) EXPECT_NEAR(v.norm(), 1.0, 1e-6);
    EXPECT_TRUE(is_watertight(m));
    EXPECT_NO_THROW(validate(m));
    EXPECT_EQ(unique_edges(m).size(), static_cast<std::size_t>(3 * m.num_faces() / 2));
  }
}

TEST(MakeSphere, OutwardOrientation) {
  const Mesh m = make_sphere(2);
  for (const Face& f : m.faces) {
    const Vec3 n = (m.vertices[f[1]] - m.vertices[f[0]]).cross(m.vertices[f[2]] - m.vertices[f[0]]);
    EXPECT_GT(n.dot(m.vertices[f[0]] + m.vertices[f[1]] + m.vertices[f[2]]), 0.0);
  }
}

TEST(MakeSphere, RejectsOutOfRange) {
  EXPECT_THROW(make_sphere(-1), ParameterError);
  EXPECT_THROW(make_sphere(7), ParameterError);
}

TEST(Validate, RejectsBadFaces) {
  Mesh m = single_triangle({0, 0}, {1, 0}, {0, 1});
  m.faces[0] = {0, 0, 1};
  EXPECT_THROW(validate(m), ParameterError);
  m.faces[0] = {0, 1, 3};
  EXPECT_THROW(validate(m), ParameterError);
  m = single_triangle({0, 0}, {1.5, 0}, {0, 1});
  EXPECT_THROW(validate(m), ParameterError);
}

TEST(Watertight, OpenTriangleIsNot) { EXPECT_FALSE(is_watertight(single_triangle({0, 0}, {1, 0}, {0, 1}))); }

TEST(UVMapping, CentroidTexelHasEqualBarycentrics) {
  // Texel (3, 3) of an 8x8 grid has its center at (0.4375, 0.4375).
  const Vec2 c(0.4375, 0.4375);
  const Mesh m = single_triangle(c + Vec2(-0.3, -0.2), c + Vec2(0.35, -0.15), c + Vec2(-0.05, 0.35));
  const UVMapping map = build_uv_mapping(m, 8, 8);
  const TexelMapping& t = map.at(3, 3);
  EXPECT_EQ(t.face, 0);
  EXPECT_TRUE(t.covered);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(t.bary[k], 1.0 / 3.0, 1e-6);
}

TEST(UVMapping, TexelOnVertexHasUnitWeight) {
  // Texel (1, 4) has its center at (0.5625, 0.1875).
  const Mesh m = single_triangle({0.5625, 0.1875}, {0.9, 0.3}, {0.6, 0.8});
  const UVMapping map = build_uv_mapping(m, 8, 8);
  const TexelMapping& t = map.at(1, 4);
  EXPECT_EQ(t.face, 0);
  EXPECT_NEAR(t.bary[0], 1.0, 1e-6);
  EXPECT_NEAR(t.bary[1], 0.0, 1e-6);
  EXPECT_NEAR(t.bary[2], 0.0, 1e-6);
}

TEST(UVMapping, SphereGridFullyMapped) {
  const Mesh m = make_sphere(1);
  const UVMapping map = build_uv_mapping(m, 32, 32);
  ASSERT_EQ(map.size(), 32u * 32u);
  int covered = 0;
  for (const TexelMapping& t : map.texels) {
    ASSERT_GE(t.face, 0);
    ASSERT_LT(t.face, m.num_faces());
    EXPECT_NEAR(t.bary.sum(), 1.0, 1e-6);
    EXPECT_GE(t.bary.minCoeff(), -1e-12);
    covered += t.covered ? 1 : 0;
  }
  EXPECT_GT(covered, 32 * 32 / 2);
}

TEST(UVMapping, UncoveredTexelsInheritACoveredEntry) {
  const Mesh m = single_triangle({0.1, 0.1}, {0.5, 0.1}, {0.1, 0.5});
  const UVMapping map = build_uv_mapping(m, 16, 16);
  const TexelMapping& far = map.at(15, 15);
  EXPECT_FALSE(far.covered);
  EXPECT_EQ(far.face, 0);
  EXPECT_NEAR(far.bary.sum(), 1.0, 1e-9);
}

TEST(UVMapping, IndependentOfDeformation) {
  const Mesh m = make_sphere(1);
  Rng rng(3);
  Deformation d;
  for (int i = 0; i < m.num_vertices(); ++i) d.offsets.emplace_back(rng.normal(), rng.normal(), rng.normal());
  const UVMapping a = build_uv_mapping(m, 16, 16);
  const UVMapping b = build_uv_mapping(apply_deformation(m, d), 16, 16);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.texels[i].face, b.texels[i].face);
    EXPECT_EQ(a.texels[i].bary, b.texels[i].bary);
  }
}

TEST(UVMapping, Errors) {
  Mesh m = make_sphere(0);
  EXPECT_THROW(build_uv_mapping(m, 4, 16), ParameterError);
  m.uvs.clear();
  EXPECT_THROW(build_uv_mapping(m, 16, 16), ParameterError);
}

TEST(ApplyDeformation, ZeroIsIdentity) {
  const Mesh m = make_sphere(1);
  const Mesh d = apply_deformation(m, {std::vector<Vec3>(m.vertices.size(), Vec3::Zero())});
  EXPECT_EQ(d.vertices, m.vertices);
  EXPECT_EQ(d.faces, m.faces);
  EXPECT_EQ(d.uvs, m.uvs);
}

TEST(ApplyDeformation, TranslationShiftsCentroid) {
  const Mesh m = make_sphere(1);
  const Mesh d = apply_deformation(m, {std::vector<Vec3>(m.vertices.size(), Vec3(0.5, 0, 0))});
  Vec3 c0 = Vec3::Zero(), c1 = Vec3::Zero();
  for (int i = 0; i < m.num_vertices(); ++i) {
    c0 += m.vertices[i];
    c1 += d.vertices[i];
  }
  EXPECT_TRUE(((c1 - c0) / m.num_vertices()).isApprox(Vec3(0.5, 0, 0), 1e-12));
}

TEST(ApplyDeformation, NegatedOffsetsInvert) {
  const Mesh m = make_sphere(2);
  Rng rng(11);
  Deformation d;
  for (int i = 0; i < m.num_vertices(); ++i) d.offsets.emplace_back(rng.normal(), rng.normal(), rng.normal());
  Deformation neg = d;
  for (Vec3& o : neg.offsets) o = -o;
  const Mesh back = apply_deformation(apply_deformation(m, d), neg);
  for (int i = 0; i < m.num_vertices(); ++i) EXPECT_LT((back.vertices[i] - m.vertices[i]).norm(), 1e-12);
}

TEST(ApplyDeformation, LengthMismatch) {
  EXPECT_THROW(apply_deformation(make_sphere(0), {std::vector<Vec3>(3)}), ParameterError);
}

TEST(Laplacian, MatchesNeighborMeanOracle) {
  EXPECT_NEAR(laplacian_energy(icosahedron()), laplacian_oracle(icosahedron()), 1e-12);
  Rng rng(5);
  Mesh m = make_sphere(1);
  for (Vec3& v : m.vertices) v += Vec3(rng.normal(0, 0.1), rng.normal(0, 0.1), rng.normal(0, 0.1));
  EXPECT_NEAR(laplacian_energy(m), laplacian_oracle(m), 1e-12);
}

TEST(Laplacian, FlatGridInteriorContributesNothing) {
  // 3x3 vertex grid; only the center is interior, and it is its neighbors' mean.
  Mesh m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m.vertices.emplace_back(c, r, 0);
  }
  auto id = [](int r, int c) { return 3 * r + c; };
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      m.faces.push_back({id(r, c), id(r, c + 1), id(r + 1, c + 1)});
      m.faces.push_back({id(r, c), id(r + 1, c + 1), id(r + 1, c)});
    }
  }
  EXPECT_NEAR(laplacian_energy(m), laplacian_oracle(m), 1e-12);
  const auto nb = neighbors(m);
  Vec3 mean = Vec3::Zero();
  for (int j : nb[id(1, 1)]) mean += m.vertices[j];
  mean /= static_cast<double>(nb[id(1, 1)].size());
  EXPECT_NEAR((m.vertices[id(1, 1)] - mean).squaredNorm(), 0.0, 1e-12);
}

TEST(Laplacian, HomogeneousOfDegreeTwo) {
  const Mesh m = make_sphere(2);
  EXPECT_NEAR(laplacian_energy(scaled(m, 2.0)), 4.0 * laplacian_energy(m), 1e-10);
}

TEST(Laplacian, IsolatedVertexExcluded) {
  Mesh m = icosahedron();
  const double e = laplacian_energy(m);
  m.vertices.emplace_back(5, 5, 5);
  EXPECT_NEAR(laplacian_energy(m), e, 1e-14);
}

TEST(Laplacian, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  Mesh m = make_sphere(1);
  for (Vec3& v : m.vertices) v += Vec3(rng.normal(0, 0.1), rng.normal(0, 0.1), rng.normal(0, 0.1));
  std::vector<Vec3> g(m.vertices.size(), Vec3::Zero());
  laplacian_energy(m, g);
  const auto fd = numeric_gradient(
      [&](const std::vector<double>& x) {
        Mesh t = m;
        t.vertices = unflatten3(x);
        return laplacian_energy(t);
      },
      flatten(m.vertices));
  EXPECT_LT(max_relative_error(flatten(g), fd), 1e-4);
}

TEST(EdgeRegularizer, MatchesEnumerationOracle) {
  EXPECT_NEAR(edge_regularizer(icosahedron()), edge_oracle(icosahedron()), 1e-12);
  Rng rng(9);
  Mesh m = make_sphere(2);
  for (Vec3& v : m.vertices) v *= rng.uniform(0.8, 1.2);
  EXPECT_NEAR(edge_regularizer(m), edge_oracle(m), 1e-12);
}

TEST(EdgeRegularizer, EquilateralTriangle) {
  const double s = 0.7;
  Mesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(s, 0, 0), Vec3(s / 2, s * std::sqrt(3.0) / 2, 0)};
  m.faces = {Face{0, 1, 2}};
  EXPECT_NEAR(edge_regularizer(m), s * s, 1e-12);
}

TEST(EdgeRegularizer, ScalesQuadratically) {
  const Mesh m = make_sphere(1);
  EXPECT_NEAR(edge_regularizer(scaled(m, 2.0)), 4.0 * edge_regularizer(m), 1e-12);
}

TEST(EdgeRegularizer, GradientMatchesFiniteDifferences) {
  Rng rng(13);
  Mesh m = make_sphere(1);
  for (Vec3& v : m.vertices) v += Vec3(rng.normal(0, 0.1), rng.normal(0, 0.1), rng.normal(0, 0.1));
  std::vector<Vec3> g(m.vertices.size(), Vec3::Zero());
  edge_regularizer(m, g);
  const auto fd = numeric_gradient(
      [&](const std::vector<double>& x) {
        Mesh t = m;
        t.vertices = unflatten3(x);
        return edge_regularizer(t);
      },
      flatten(m.vertices));
  EXPECT_LT(max_relative_error(flatten(g), fd), 1e-4);
}

TEST(VertexPartLabels, UniformMapTiesToZero) {
  const Mesh m = make_sphere(2);
  const Grid canonical(16, 16, 4, 0.25);
  for (int l : vertex_part_labels(m, canonical)) EXPECT_EQ(l, 0);
}

TEST(VertexPartLabels, OneHotPartTwo) {
  const Mesh m = make_sphere(2);
  Grid canonical(16, 16, 4);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) canonical(r, c, 2) = 1.0;
  }
  for (int l : vertex_part_labels(m, canonical)) EXPECT_EQ(l, 2);
}

TEST(VertexPartLabels, HalfSplitMatchesThresholdOracle) {
  const Mesh m = make_sphere(3);
  const int w = 32;
  Grid canonical(16, w, 2);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < w; ++c) canonical(r, c, c < w / 2 ? 0 : 1) = 1.0;
  }
  const std::vector<int> labels = vertex_part_labels(m, canonical);
  const std::vector<Vec2> uv = vertex_uvs(m);
  for (int i = 0; i < m.num_vertices(); ++i) {
    // Bilinear weight of part 1 along u, from the texel-center convention.
    const double x = std::clamp(uv[i].x() * w - 0.5, 0.0, static_cast<double>(w - 1));
    const double part1 = std::clamp(x - (w / 2 - 1), 0.0, 1.0);
    EXPECT_EQ(labels[i], part1 > 0.5 ? 1 : 0) << "vertex " << i << " u=" << uv[i].x();
  }
}

TEST(SampleUVMap, TexelCentersAreExact) {
  Rng rng(2);
  const Grid g = random_grid(rng, 8, 8, 3);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      const auto v = sample_uv_map(g, texel_center(r, c, 8, 8));
      for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(v[ch], g(r, c, ch), 1e-12);
    }
  }
}

TEST(Obj, RoundTripPreservesTopologyAndNineDigits) {
  Rng rng(17);
  Mesh m = make_sphere(2);
  for (Vec3& v : m.vertices) v *= rng.uniform(0.5, 1.5);
  const auto path = scratch_dir("obj") / "m.obj";
  write_obj(path, m);
  const Mesh r = read_obj(path);
  ASSERT_EQ(r.faces, m.faces);
  ASSERT_EQ(r.face_uvs, m.face_uvs);
  ASSERT_EQ(r.vertices.size(), m.vertices.size());
  for (int i = 0; i < m.num_vertices(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const double a = m.vertices[i][k];
      EXPECT_LE(std::abs(r.vertices[i][k] - a), 5e-9 * std::max(std::abs(a), 1e-300));
    }
  }
  for (std::size_t i = 0; i < m.uvs.size(); ++i) EXPECT_LT((r.uvs[i] - m.uvs[i]).norm(), 1e-8);
  EXPECT_TRUE(is_watertight(r));
}

TEST(Obj, RejectsQuads) {
  const auto path = scratch_dir("objquad") / "q.obj";
  {
    std::ofstream out(path);
    out << "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
  }
  EXPECT_THROW(read_obj(path), ParameterError);
  EXPECT_THROW(read_obj(path.parent_path() / "missing.obj"), ParameterError);
}
