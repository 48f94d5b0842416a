#include <map>
#include <numbers>

#include "semrecon/errors.hpp"
#include "semrecon/sampling.hpp"
#include "semrecon/softras.hpp"
#include "test_util.hpp"

using namespace semrecon;
using namespace semrecon::testing;

namespace {

RasterConfig config(int size, double sigma, double gamma = 1e-4) {
  RasterConfig c;
  c.height = c.width = size;
  c.sigma = sigma;
  c.gamma = gamma;
  return c;
}

// Two overlapping triangles at different depths.
Mesh two_triangles() {
  Mesh m;
  m.vertices = {Vec3(-0.6, -0.5, 0.1), Vec3(0.5, -0.4, 0.2), Vec3(-0.1, 0.6, 0.0),
                Vec3(-0.3, -0.2, 0.5), Vec3(0.7, 0.1, 0.4),  Vec3(0.2, 0.7, 0.6)};
  m.faces = {Face{0, 1, 2}, Face{3, 4, 5}};
  return m;
}

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

bool point_in_triangle(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  const double d1 = cross2(b - a, p - a), d2 = cross2(c - b, p - b), d3 = cross2(a - c, p - c);
  const bool neg = d1 < 0 || d2 < 0 || d3 < 0;
  const bool pos = d1 > 0 || d2 > 0 || d3 > 0;
  return !(neg && pos);
}

double point_segment_distance2(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 e = b - a;
  const double t = std::clamp((p - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
  return (p - a - t * e).squaredNorm();
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

AttributeTable ones(const Mesh& m) {
  return AttributeTable::per_vertex(m, std::vector<double>(m.vertices.size(), 1.0), 1);
}

}  // namespace

TEST(Rasterize, DeepInsideSaturates) {
  Mesh m;
  m.vertices = {Vec3(-0.9, -0.9, 0), Vec3(0.9, -0.9, 0), Vec3(0.0, 0.9, 0)};
  m.faces = {Face{0, 1, 2}};
  const RasterOutput out = rasterize(m, Camera{}, ones(m), config(8, 1e-4));
  const int center = 4 * 8 + 4;
  double prob = 0.0;
  for (const auto& e : out.face_row(0)) {
    if (e.pixel == center) prob = e.prob;
  }
  EXPECT_GE(prob, 0.999);
}

TEST(Rasterize, FarOutsideIsEmpty) {
  Mesh m;
  m.vertices = {Vec3(-0.2, -0.2, 0), Vec3(0.2, -0.2, 0), Vec3(0.0, 0.2, 0)};
  m.faces = {Face{0, 1, 2}};
  const Grid s = render_silhouette(m, Camera{}, config(16, 1e-4));
  EXPECT_LT(s(0, 0), 1e-3);
  EXPECT_LT(s(15, 15), 1e-3);
}

TEST(Rasterize, CoverageMatchesClosedFormDistance) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    // One pixel at the origin; a random triangle near it.
    Mesh m;
    for (int k = 0; k < 3; ++k) m.vertices.emplace_back(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 0.0);
    m.faces = {Face{0, 1, 2}};
    const Vec2 a = m.vertices[0].head<2>(), b = m.vertices[1].head<2>(), c = m.vertices[2].head<2>();
    if (std::abs(cross2(b - a, c - a)) < 1e-3) continue;
    const double sigma = rng.uniform(1e-3, 1e-2);
    const RasterOutput out = rasterize(m, Camera{}, ones(m), config(1, sigma));

    const Vec2 p = Vec2::Zero();
    const double d2 = std::min({point_segment_distance2(p, a, b), point_segment_distance2(p, b, c),
                                point_segment_distance2(p, c, a)});
    const bool inside = point_in_triangle(p, a, b, c);
    const double expected = sigmoid((inside ? d2 : -d2) / sigma);
    const double radius = 3.5 * std::sqrt(sigma);
    if (!inside && d2 > radius * radius) {
      EXPECT_TRUE(out.coverage.empty());
      continue;
    }
    ASSERT_EQ(out.coverage.size(), 1u);
    EXPECT_NEAR(out.coverage[0].prob, expected, 1e-9);
  }
}

TEST(Rasterize, SilhouetteIsProductOfCoverages) {
  Rng rng(2);
  Mesh m = make_sphere(2);
  for (Vec3& v : m.vertices) v *= rng.uniform(0.9, 1.1);
  Camera cam;
  cam.scale = 0.6;
  cam.quat = Quat(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  const RasterOutput out = rasterize(m, cam, ones(m), config(24, 1e-3));
  std::vector<double> keep(24 * 24, 1.0);
  for (const auto& e : out.coverage) keep[e.pixel] *= 1.0 - e.prob;
  for (int px = 0; px < 24 * 24; ++px) EXPECT_NEAR(out.silhouette.data()[px], 1.0 - keep[px], 1e-12);
}

TEST(Rasterize, CoverageRowsStayInDilatedBox) {
  const Mesh m = make_sphere(1);
  Camera cam;
  cam.scale = 0.5;
  const RasterConfig cfg = config(32, 1e-3);
  const RasterOutput out = rasterize(m, cam, ones(m), cfg);
  const Projection proj = project(m.vertices, cam);
  const double r = cfg.support * std::sqrt(cfg.sigma);
  for (int f = 0; f < m.num_faces(); ++f) {
    Vec2 lo(1e9, 1e9), hi(-1e9, -1e9);
    for (int k = 0; k < 3; ++k) {
      lo = lo.cwiseMin(proj.points[m.faces[f][k]]);
      hi = hi.cwiseMax(proj.points[m.faces[f][k]]);
    }
    for (const auto& e : out.face_row(f)) {
      EXPECT_EQ(e.face, f);
      EXPECT_GE(e.prob, 0.0);
      EXPECT_LE(e.prob, 1.0);
      const Vec2 p = pixel_center(e.pixel / 32, e.pixel % 32, 32, 32);
      EXPECT_GE(p.x(), lo.x() - r - 1e-12);
      EXPECT_LE(p.x(), hi.x() + r + 1e-12);
      EXPECT_GE(p.y(), lo.y() - r - 1e-12);
      EXPECT_LE(p.y(), hi.y() + r + 1e-12);
    }
  }
}

TEST(Rasterize, DegenerateFaceContributesNothing) {
  Mesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(0.5, 0, 0), Vec3(1.0, 0, 0)};
  m.faces = {Face{0, 1, 2}};
  const RasterOutput out = rasterize(m, Camera{}, ones(m), config(16, 1e-3));
  EXPECT_TRUE(out.coverage.empty());
}

TEST(RenderSilhouette, EmptyMeshIsZero) {
  const Grid s = render_silhouette(Mesh{}, Camera{}, config(8, 1e-4));
  for (double v : s.data()) EXPECT_EQ(v, 0.0);
}

TEST(RenderSilhouette, FilledSphereInteriorSaturates) {
  Camera cam;
  cam.scale = 0.9;
  const Grid s = render_silhouette(make_sphere(3), cam, config(32, 1e-8));
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      if (pixel_center(r, c, 32, 32).norm() < 0.8) {
        EXPECT_GT(s(r, c), 0.99);
      }
    }
  }
}

TEST(RenderSilhouette, TranslationMovesCentroid) {
  const int n = 32;
  const RasterConfig cfg = config(n, 1e-4);
  Camera cam;
  cam.scale = 0.4;
  auto centroid_col = [&](const Camera& c) {
    const Grid s = render_silhouette(make_sphere(2), c, cfg);
    double mass = 0.0, col = 0.0;
    for (int r = 0; r < n; ++r) {
      for (int cc = 0; cc < n; ++cc) {
        mass += s(r, cc);
        col += s(r, cc) * cc;
      }
    }
    return col / mass;
  };
  const double delta = 0.25;
  Camera moved = cam;
  moved.translation.x() += delta;
  EXPECT_NEAR(centroid_col(moved) - centroid_col(cam), delta * n / 2.0, 0.05);
}

TEST(RenderSilhouette, MatchesHardRasterizationAtSharpLimit) {
  Rng rng(3);
  for (int trial = 0; trial < 3; ++trial) {
    Mesh m = make_sphere(2);
    for (Vec3& v : m.vertices) v *= rng.uniform(0.8, 1.2);
    Camera cam;
    cam.scale = 0.6;
    cam.translation = Vec2(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
    cam.quat = Quat(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    const int n = 48;
    const Grid s = render_silhouette(m, cam, config(n, 1e-5));
    const Projection proj = project(m.vertices, cam);
    int agree = 0;
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const Vec2 p = pixel_center(r, c, n, n);
        bool hard = false;
        for (const Face& f : m.faces) {
          hard = hard || point_in_triangle(p, proj.points[f[0]], proj.points[f[1]], proj.points[f[2]]);
        }
        agree += (s(r, c) > 0.5) == hard ? 1 : 0;
      }
    }
    EXPECT_GE(agree, 0.99 * n * n);
  }
}

TEST(RenderSilhouette, ValuesInUnitInterval) {
  const Mesh m = make_sphere(2);
  Camera cam;
  cam.scale = 0.5;
  const Grid s = render_silhouette(m, cam, config(32, 1e-3));
  for (double v : s.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(RenderSilhouette, SingleTriangleSharpensWithSigma) {
  Mesh m;
  m.vertices = {Vec3(-0.7, -0.6, 0), Vec3(0.6, -0.5, 0), Vec3(0.1, 0.7, 0)};
  m.faces = {Face{0, 1, 2}};
  const Grid soft = render_silhouette(m, Camera{}, config(32, 1e-3));
  const Grid sharp = render_silhouette(m, Camera{}, config(32, 1e-4));
  for (std::size_t i = 0; i < soft.size(); ++i) {
    if (soft.data()[i] > 0.5) EXPECT_GE(sharp.data()[i], soft.data()[i] - 1e-12);
    if (soft.data()[i] < 0.5) EXPECT_LE(sharp.data()[i], soft.data()[i] + 1e-12);
  }
}

// The aggregated silhouette of a closed mesh can dip near shared interior edges, so
// monotonicity is checked per face.
TEST(Rasterize, FaceCoverageSharpensWithSigma) {
  const Mesh m = make_sphere(2);
  Camera cam;
  cam.scale = 0.5;
  cam.quat = quat_from_axis_angle(Vec3(1, 1, 0).normalized(), 0.5);
  const RasterOutput soft = rasterize(m, cam, ones(m), config(32, 1e-3));
  const RasterOutput sharp = rasterize(m, cam, ones(m), config(32, 1e-4));
  for (int f = 0; f < m.num_faces(); ++f) {
    std::map<int, double> sharp_row;
    for (const auto& e : sharp.face_row(f)) sharp_row[e.pixel] = e.prob;
    for (const auto& e : soft.face_row(f)) {
      const auto it = sharp_row.find(e.pixel);
      const double v = it == sharp_row.end() ? 0.0 : it->second;
      if (e.prob > 0.5) EXPECT_GE(v, e.prob - 1e-12);
      if (e.prob < 0.5) EXPECT_LE(v, e.prob + 1e-12);
    }
  }
}

TEST(RasterizeBackward, SilhouetteGradientMatchesFiniteDifferences) {
  const Mesh m = two_triangles();
  Camera cam;
  cam.scale = 0.9;
  cam.translation = Vec2(0.05, -0.03);
  cam.quat = quat_from_axis_angle(Vec3(0.3, 1.0, 0.2).normalized(), 0.4);
  const RasterConfig cfg = config(16, 1e-3, 1e-2);
  const AttributeTable attrs = ones(m);
  auto loss = [&](const std::vector<Vec3>& v, const Camera& c) {
    Mesh t = m;
    t.vertices = v;
    const Grid s = render_silhouette(t, c, cfg);
    double sum = 0.0;
    for (double x : s.data()) sum += x;
    return sum;
  };

  const Projection proj = project(m.vertices, cam);
  const RasterOutput out = rasterize_projected(proj, m.faces, attrs, cfg);
  const Grid g_sil(16, 16, 1, 1.0);
  const RasterGradient g = rasterize_backward(proj, m.faces, attrs, cfg, out, &g_sil, nullptr, {});
  std::vector<Vec3> g_v(m.vertices.size(), Vec3::Zero());
  std::array<double, Camera::kNumParams> g_cam{};
  project_backward(m.vertices, cam, g.points, g.depth, g_v, g_cam);

  const auto fd_v =
      numeric_gradient([&](const std::vector<double>& x) { return loss(unflatten3(x), cam); }, flatten(m.vertices));
  EXPECT_LT(max_relative_error(flatten(g_v), fd_v, 1e-6), 1e-3);
  const auto arr = cam.to_array();
  const auto fd_cam = numeric_gradient(
      [&](const std::vector<double>& x) { return loss(m.vertices, Camera::from_array(x)); },
      std::vector<double>(arr.begin(), arr.end()));
  EXPECT_LT(max_relative_error(std::vector<double>(g_cam.begin(), g_cam.end()), fd_cam, 1e-6), 1e-3);
}

TEST(RasterizeBackward, AttributeGradientMatchesFiniteDifferences) {
  const Mesh m = two_triangles();
  Camera cam;
  cam.scale = 0.9;
  cam.quat = quat_from_axis_angle(Vec3(1.0, 0.2, 0.1).normalized(), 0.3);
  const RasterConfig cfg = config(16, 1e-3, 1e-2);
  Rng rng(4);
  std::vector<double> values;
  for (std::size_t i = 0; i < 2 * m.vertices.size(); ++i) values.push_back(rng.uniform());
  const Grid w = random_grid(rng, 16, 16, 2, -1.0, 1.0);

  auto loss = [&](const std::vector<Vec3>& v, const std::vector<double>& vals) {
    Mesh t = m;
    t.vertices = v;
    const RasterOutput o = rasterize(t, cam, AttributeTable::per_vertex(t, vals, 2), cfg);
    double s = 0.0;
    for (std::size_t i = 0; i < o.attributes.size(); ++i) s += o.attributes.data()[i] * w.data()[i];
    return s;
  };

  const AttributeTable attrs = AttributeTable::per_vertex(m, values, 2);
  const Projection proj = project(m.vertices, cam);
  const RasterOutput out = rasterize_projected(proj, m.faces, attrs, cfg);
  const RasterGradient g = rasterize_backward(proj, m.faces, attrs, cfg, out, nullptr, &w, {});
  std::vector<Vec3> g_v(m.vertices.size(), Vec3::Zero());
  std::array<double, Camera::kNumParams> g_cam{};
  project_backward(m.vertices, cam, g.points, g.depth, g_v, g_cam);

  const auto fd_v = numeric_gradient([&](const std::vector<double>& x) { return loss(unflatten3(x), values); },
                                     flatten(m.vertices));
  EXPECT_LT(max_relative_error(flatten(g_v), fd_v, 1e-6), 1e-3);
  const auto fd_a = numeric_gradient([&](const std::vector<double>& x) { return loss(m.vertices, x); }, values);
  EXPECT_LT(max_relative_error(g.attributes, fd_a, 1e-6), 1e-3);
}

TEST(RenderPartProbs, OneHotEqualsSilhouette) {
  const Mesh m = make_sphere(2);
  const UVMapping mapping = build_uv_mapping(m, 16, 16);
  Grid canonical(16, 16, 3);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) canonical(r, c, 0) = 1.0;
  }
  Camera cam;
  cam.scale = 0.6;
  cam.quat = quat_from_axis_angle(Vec3::UnitY(), 0.7);
  const RasterConfig cfg = config(32, 1e-4);
  const Grid probs = render_part_probs(m, cam, canonical, mapping, cfg);
  const Grid sil = render_silhouette(m, cam, cfg);
  for (std::size_t px = 0; px < sil.pixels(); ++px) {
    EXPECT_NEAR(probs.data()[3 * px], sil.data()[px], 1e-5);
    EXPECT_NEAR(probs.data()[3 * px + 1], 0.0, 1e-12);
  }
}

TEST(RenderPartProbs, ZeroCanonicalRendersZero) {
  const Mesh m = make_sphere(1);
  const UVMapping mapping = build_uv_mapping(m, 16, 16);
  const Grid probs = render_part_probs(m, Camera{}, Grid(16, 16, 4), mapping, config(16, 1e-4));
  for (double v : probs.data()) EXPECT_EQ(v, 0.0);
}

TEST(RenderPartProbs, HemisphereLabelsMatchNearestFaceOracle) {
  // Part 0 on the +x hemisphere, part 1 elsewhere, viewed at an angle.
  const Mesh m = make_sphere(3);
  const int uv = 64;
  const UVMapping mapping = build_uv_mapping(m, uv, uv);
  Grid canonical(uv, uv, 2);
  for (int r = 0; r < uv; ++r) {
    for (int c = 0; c < uv; ++c) {
      const TexelMapping& t = mapping.at(r, c);
      const Face& f = m.faces[t.face];
      const Vec3 p = t.bary[0] * m.vertices[f[0]] + t.bary[1] * m.vertices[f[1]] + t.bary[2] * m.vertices[f[2]];
      canonical(r, c, p.x() > 0.0 ? 0 : 1) = 1.0;
    }
  }
  Camera cam;
  cam.scale = 0.8;
  cam.quat = quat_from_axis_angle(Vec3(0.2, 1.0, 0.0).normalized(), 0.6);
  const int n = 48;
  const RasterConfig cfg = config(n, 1e-5, 1e-5);
  const Grid probs = render_part_probs(m, cam, canonical, mapping, cfg);

  const Projection proj = project(m.vertices, cam);
  int counted = 0, agree = 0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const Vec2 p = pixel_center(r, c, n, n);
      int front = -1;
      double best_z = -1e9;
      for (int f = 0; f < m.num_faces(); ++f) {
        const Face& face = m.faces[f];
        if (!point_in_triangle(p, proj.points[face[0]], proj.points[face[1]], proj.points[face[2]])) continue;
        const double z = (proj.depth[face[0]] + proj.depth[face[1]] + proj.depth[face[2]]) / 3.0;
        if (z > best_z) {
          best_z = z;
          front = f;
        }
      }
      if (front < 0) continue;
      const Face& face = m.faces[front];
      const Vec3 centroid = (m.vertices[face[0]] + m.vertices[face[1]] + m.vertices[face[2]]) / 3.0;
      // Skip faces straddling the part boundary.
      if (std::abs(centroid.x()) < 0.15) continue;
      ++counted;
      const int oracle = centroid.x() > 0.0 ? 0 : 1;
      const int rendered = probs(r, c, 0) >= probs(r, c, 1) ? 0 : 1;
      agree += oracle == rendered ? 1 : 0;
    }
  }
  ASSERT_GT(counted, n * n / 4);
  EXPECT_GE(agree, 0.99 * counted);
}

TEST(RasterConfig, Validation) {
  RasterConfig c;
  EXPECT_NO_THROW(c.validate());
  c.sigma = 0.0;
  EXPECT_THROW(c.validate(), ParameterError);
  c = RasterConfig{};
  c.gamma = -1.0;
  EXPECT_THROW(c.validate(), ParameterError);
  c = RasterConfig{};
  c.height = 0;
  EXPECT_THROW(c.validate(), ParameterError);
}
