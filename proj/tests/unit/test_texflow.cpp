#include "semrecon/errors.hpp"
#include "semrecon/losses.hpp"
#include "semrecon/sampling.hpp"
#include "semrecon/texflow.hpp"
#include "test_util.hpp"

using namespace semrecon;
using namespace semrecon::testing;

namespace {

PartMap one_hot_parts(const std::vector<int>& labels, int h, int w, int np) {
  PartMap p;
  p.probs = Grid(h, w, np + 1);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) p.probs(r, c, labels[r * w + c]) = 1.0;
  }
  return p;
}

PartMap random_parts(Rng& rng, int h, int w, int np) {
  PartMap p;
  p.probs = random_grid(rng, h, w, np + 1, 0.01, 1.0);
  p.normalize();
  return p;
}

TextureFlow random_flow(Rng& rng, int h, int w) {
  TextureFlow f;
  f.grid = random_grid(rng, h, w, 2, -1.0, 1.0);
  return f;
}

// Texels on faces seen within ~84 degrees of edge-on; grazing faces are dropped.
UVMapping visible_texels(const Mesh& mesh, const Camera& cam, UVMapping mapping) {
  const Eigen::Matrix3d r = rotation_matrix(cam.quat);
  for (TexelMapping& t : mapping.texels) {
    const Face& f = mesh.faces[t.face];
    const Vec3 n = r * (mesh.vertices[f[1]] - mesh.vertices[f[0]]).cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]);
    if (n.normalized().z() < 0.1) t.face = -1;
  }
  return mapping;
}

}  // namespace

TEST(SampleImage, PixelCenterReturnsPixel) {
  Rng rng(1);
  const Grid img = random_grid(rng, 6, 9, 3);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 9; ++c) {
      const std::vector<Vec2> at = {pixel_center(r, c, 6, 9)};
      const auto v = sample_image(img, at);
      for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(v[ch], img(r, c, ch), 1e-12);
    }
  }
}

TEST(SampleImage, MidwayIsMean) {
  Rng rng(2);
  const Grid img = random_grid(rng, 4, 4, 2);
  const std::vector<Vec2> at = {(pixel_center(1, 1, 4, 4) + pixel_center(1, 2, 4, 4)) / 2.0};
  const auto v = sample_image(img, at);
  for (int ch = 0; ch < 2; ++ch) EXPECT_NEAR(v[ch], (img(1, 1, ch) + img(1, 2, ch)) / 2.0, 1e-12);
}

TEST(SampleImage, ConstantImageAnywhere) {
  const Grid img(5, 7, 2, 0.3);
  Rng rng(3);
  std::vector<Vec2> coords;
  for (int i = 0; i < 50; ++i) coords.emplace_back(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
  for (double v : sample_image(img, coords)) EXPECT_NEAR(v, 0.3, 1e-12);
}

TEST(SampleImage, BorderClamp) {
  Rng rng(4);
  const Grid img = random_grid(rng, 4, 4, 1);
  const std::vector<Vec2> at = {Vec2(-1.0, 1.0), Vec2(5.0, -5.0)};
  const auto v = sample_image(img, at);
  EXPECT_NEAR(v[0], img(0, 0), 1e-12);
  EXPECT_NEAR(v[1], img(3, 3), 1e-12);
  EXPECT_THROW(sample_image(Grid{}, at), ParameterError);
}

TEST(SampleImage, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  const Grid img = random_grid(rng, 8, 8, 3);
  std::vector<Vec2> coords;
  while (coords.size() < 20) {
    const Vec2 p(rng.uniform(-0.85, 0.85), rng.uniform(-0.85, 0.85));
    const Vec2 idx = image_index_from_normalized(p, 8, 8);
    // Stay away from pixel-grid lines where the bilinear weights kink.
    const double fx = idx.x() - std::floor(idx.x()), fy = idx.y() - std::floor(idx.y());
    if (std::min({fx, 1 - fx, fy, 1 - fy}) > 0.05) coords.push_back(p);
  }
  std::vector<double> w(coords.size() * 3);
  for (double& x : w) x = rng.normal();
  auto loss = [&](const std::vector<double>& x) {
    std::vector<Vec2> c(coords.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = Vec2(x[2 * i], x[2 * i + 1]);
    const auto v = sample_image(img, c);
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * w[i];
    return s;
  };
  std::vector<double> x0;
  for (const Vec2& p : coords) x0.insert(x0.end(), {p.x(), p.y()});
  const auto g = sample_image_backward(img, coords, w);
  std::vector<double> analytic;
  for (const Vec2& p : g) analytic.insert(analytic.end(), {p.x(), p.y()});
  EXPECT_LT(max_relative_error(analytic, numeric_gradient(loss, x0), 1e-6), 1e-3);
}

TEST(SemanticUV, IdentityFlowReproducesPartition) {
  Rng rng(6);
  const int n = 12, np = 3;
  std::vector<int> labels(n * n);
  for (int& l : labels) l = static_cast<int>(rng.uniform(0.0, np + 1.0 - 1e-9));
  const PartMap parts = one_hot_parts(labels, n, n, np);
  TextureFlow flow;
  flow.grid = Grid(n, n, 2);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) flow.set(r, c, pixel_center(r, c, n, n));
  }
  const Grid uv = semantic_uv(flow, parts);
  ASSERT_EQ(uv.channels(), np);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      for (int p = 0; p < np; ++p) EXPECT_NEAR(uv(r, c, p), labels[r * n + c] == p ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(SemanticUV, UniformPartsGiveUniformMap) {
  PartMap parts;
  parts.probs = Grid(8, 8, 5, 0.2);
  Rng rng(7);
  const Grid uv = semantic_uv(random_flow(rng, 6, 6), parts);
  for (double v : uv.data()) EXPECT_NEAR(v, 0.2, 1e-12);
}

TEST(SemanticUV, FlowAtOnePixelGivesConstantMap) {
  Rng rng(8);
  const PartMap parts = random_parts(rng, 8, 8, 3);
  TextureFlow flow;
  flow.grid = Grid(5, 5, 2);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) flow.set(r, c, pixel_center(2, 5, 8, 8));
  }
  const Grid uv = semantic_uv(flow, parts);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) {
      for (int p = 0; p < 3; ++p) EXPECT_NEAR(uv(r, c, p), parts.probs(2, 5, p), 1e-12);
    }
  }
}

TEST(SemanticUV, LinearInParts) {
  Rng rng(9);
  const PartMap a = random_parts(rng, 10, 10, 4), b = random_parts(rng, 10, 10, 4);
  const TextureFlow flow = random_flow(rng, 7, 7);
  const double alpha = 0.3, beta = 1.7;
  PartMap mix;
  mix.probs = Grid(10, 10, 5);
  for (std::size_t i = 0; i < mix.probs.size(); ++i) {
    mix.probs.data()[i] = alpha * a.probs.data()[i] + beta * b.probs.data()[i];
  }
  const Grid ua = semantic_uv(flow, a), ub = semantic_uv(flow, b), um = semantic_uv(flow, mix);
  for (std::size_t i = 0; i < um.size(); ++i) {
    EXPECT_NEAR(um.data()[i], alpha * ua.data()[i] + beta * ub.data()[i], 1e-6);
  }
}

TEST(AggregateCanonical, SingleMapIsItself) {
  Rng rng(10);
  const std::vector<Grid> maps = {random_grid(rng, 6, 6, 3)};
  const CanonicalUV c = aggregate_canonical(maps);
  EXPECT_EQ(c.probs.data(), maps[0].data());
  EXPECT_EQ(c.sample_count, 1);
}

TEST(AggregateCanonical, TwoMapsAverage) {
  Rng rng(11);
  const std::vector<Grid> maps = {random_grid(rng, 6, 6, 3), random_grid(rng, 6, 6, 3)};
  const CanonicalUV c = aggregate_canonical(maps);
  for (std::size_t i = 0; i < c.probs.size(); ++i) {
    EXPECT_DOUBLE_EQ(c.probs.data()[i], (maps[0].data()[i] + maps[1].data()[i]) / 2.0);
  }
}

TEST(AggregateCanonical, CopiesAreIdempotent) {
  Rng rng(12);
  const Grid m = random_grid(rng, 6, 6, 4);
  const std::vector<Grid> maps(7, m);
  const CanonicalUV c = aggregate_canonical(maps);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(c.probs.data()[i], m.data()[i], 1e-7);
  EXPECT_EQ(c.sample_count, 7);
}

TEST(AggregateCanonical, PermutationInvariant) {
  Rng rng(13);
  std::vector<Grid> maps;
  for (int i = 0; i < 5; ++i) maps.push_back(random_grid(rng, 4, 4, 2));
  const CanonicalUV a = aggregate_canonical(maps);
  std::reverse(maps.begin(), maps.end());
  std::swap(maps[0], maps[2]);
  const CanonicalUV b = aggregate_canonical(maps);
  for (std::size_t i = 0; i < a.probs.size(); ++i) EXPECT_NEAR(a.probs.data()[i], b.probs.data()[i], 1e-12);
}

TEST(AggregateCanonical, Errors) {
  EXPECT_THROW(aggregate_canonical(std::vector<Grid>{}), ParameterError);
  const std::vector<Grid> mismatched = {Grid(4, 4, 2), Grid(4, 5, 2)};
  EXPECT_THROW(aggregate_canonical(mismatched), ParameterError);
}

TEST(InitFlow, IdentityCameraDropsZ) {
  const Mesh m = make_sphere(2);
  const UVMapping mapping = build_uv_mapping(m, 16, 16);
  const TextureFlow flow = init_flow_from_projection(m, Camera{}, mapping);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      const Vec3 p = surface_point(m, mapping.at(r, c));
      EXPECT_LT((flow.at(r, c) - p.head<2>()).norm(), 1e-12);
    }
  }
}

TEST(InitFlow, TranslationShiftsCoordinates) {
  const Mesh m = make_sphere(1);
  const UVMapping mapping = build_uv_mapping(m, 16, 16);
  Camera cam;
  cam.scale = 0.5;
  const TextureFlow a = init_flow_from_projection(m, cam, mapping);
  cam.translation = Vec2(0.2, 0.0);
  const TextureFlow b = init_flow_from_projection(m, cam, mapping);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) EXPECT_LT((b.at(r, c) - a.at(r, c) - Vec2(0.2, 0.0)).norm(), 1e-12);
  }
}

TEST(InitFlow, CoordinatesAreClamped) {
  const Mesh m = make_sphere(1);
  const UVMapping mapping = build_uv_mapping(m, 16, 16);
  Camera cam;
  cam.scale = 3.0;
  const TextureFlow flow = init_flow_from_projection(m, cam, mapping);
  for (double v : flow.grid.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(InitFlow, TextureCycleVanishesOnVisibleFaces) {
  const Mesh m = make_sphere(1);
  const UVMapping mapping = build_uv_mapping(m, 512, 512);
  RasterConfig cfg;
  cfg.height = cfg.width = 512;
  cfg.sigma = 1e-7;
  Rng rng(14);
  for (int trial = 0; trial < 2; ++trial) {
    Camera cam;
    cam.scale = rng.uniform(0.5, 0.9);
    cam.translation = Vec2(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
    cam.quat = Quat(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
    const RasterOutput raster =
        rasterize(m, cam, AttributeTable::per_vertex(m, std::vector<double>(m.vertices.size(), 1.0), 1), cfg);
    const TextureFlow flow = init_flow_from_projection(m, cam, mapping);
    EXPECT_LT(texture_cycle_loss(flow, visible_texels(m, cam, mapping), raster), 1e-6);
  }
}

TEST(FlowAtUV, GradientMatchesFiniteDifferences) {
  Rng rng(15);
  const TextureFlow flow = random_flow(rng, 6, 6);
  const Vec2 uv(0.37, 0.61), g(0.7, -1.3);
  Grid g_flow(6, 6, 2);
  flow_at_uv_backward(flow, uv, g, g_flow);
  const auto fd = numeric_gradient(
      [&](const std::vector<double>& x) {
        TextureFlow f = flow;
        f.grid.data() = x;
        return flow_at_uv(f, uv).dot(g);
      },
      flow.grid.data());
  EXPECT_LT(max_relative_error(g_flow.data(), fd, 1e-6), 1e-6);
}

TEST(PartMap, NormalizeOntoSimplex) {
  Rng rng(16);
  PartMap p;
  p.probs = random_grid(rng, 5, 5, 4, 0.0, 3.0);
  for (int ch = 0; ch < 4; ++ch) p.probs(0, 0, ch) = 0.0;
  p.normalize();
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) {
      double s = 0.0;
      for (int ch = 0; ch < 4; ++ch) {
        EXPECT_GE(p.probs(r, c, ch), 0.0);
        s += p.probs(r, c, ch);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
  EXPECT_EQ(p.probs(0, 0, 3), 1.0);
}
