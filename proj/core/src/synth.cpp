#include "semrecon/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "semrecon/errors.hpp"
#include "semrecon/rng.hpp"

namespace semrecon {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

const Vec3 kHeadAxis = Vec3(1.0, 0.15, 0.0).normalized();
const Vec3 kTailAxis = Vec3(-1.0, 0.2, 0.0).normalized();

constexpr double kPartColors[kSynthParts][3] = {
    {0.85, 0.25, 0.20},  // head
    {0.20, 0.35, 0.85},  // tail
    {0.25, 0.75, 0.30},  // upper body
    {0.90, 0.80, 0.25},  // lower body
};

double angle_between(const Vec3& a, const Vec3& b) { return std::atan2(a.cross(b).norm(), a.dot(b)); }

double bump(const Vec3& n, const Vec3& axis, double amplitude, double width) {
  const double t = angle_between(n, axis);
  return amplitude * std::exp(-t * t / (2.0 * width * width));
}

// Outward unit normal per vertex: area-weighted sum of incident face normals.
std::vector<Vec3> vertex_normals(const Mesh& mesh) {
  std::vector<Vec3> n(mesh.vertices.size(), Vec3::Zero());
  for (const Face& f : mesh.faces) {
    const Vec3 fn = (mesh.vertices[f[1]] - mesh.vertices[f[0]]).cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]);
    for (int k = 0; k < 3; ++k) n[f[k]] += fn;
  }
  for (Vec3& v : n) v.normalize();
  return n;
}

Camera sample_camera(Rng& rng, const SynthConfig& cfg) {
  const double az = rng.uniform(-cfg.azimuth_deg, cfg.azimuth_deg) * kDeg;
  const double el = rng.uniform(-cfg.elevation_deg, cfg.elevation_deg) * kDeg;
  const double roll = rng.uniform(-cfg.roll_deg, cfg.roll_deg) * kDeg;
  Camera cam;
  cam.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  cam.translation = Vec2(rng.uniform(-cfg.translation, cfg.translation), rng.uniform(-cfg.translation, cfg.translation));
  const Quat qa = quat_from_axis_angle(Vec3::UnitY(), az);
  const Quat qe = quat_from_axis_angle(Vec3::UnitX(), el);
  const Quat qr = quat_from_axis_angle(Vec3::UnitZ(), roll);
  cam.quat = quat_multiply(qr, quat_multiply(qe, qa));
  return cam;
}

}  // namespace

void SynthConfig::validate() const {
  if (image_size < 8) throw ParameterError("synth: image_size must be >= 8");
  if (subdivisions < 0 || subdivisions > 6) throw ParameterError("synth: subdivisions must be in [0, 6]");
  if (!(scale_min > 0.0) || !(scale_max >= scale_min)) throw ParameterError("synth: invalid scale range");
  if (!(sigma > 0.0) || !(gamma > 0.0)) throw ParameterError("synth: sigma and gamma must be positive");
  if (uv_size < 8) throw ParameterError("synth: uv_size must be >= 8");
  if (azimuth_deg < 0.0 || elevation_deg < 0.0 || roll_deg < 0.0 || translation < 0.0) {
    throw ParameterError("synth: camera ranges must be non-negative");
  }
}

std::vector<Vec3> synth_offsets(int subdivisions, std::uint64_t seed) {
  const Mesh sphere = make_sphere(subdivisions);
  Rng rng(seed);
  const Vec3 head = Vec3(1.0, 0.15 + rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)).normalized();
  const Vec3 tail = Vec3(-1.0, 0.2 + rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)).normalized();
  const double head_amp = 0.55 * rng.uniform(0.85, 1.15);
  const double head_width = 0.5 * rng.uniform(0.9, 1.1);
  const double tail_amp = 0.3 * rng.uniform(0.85, 1.15);
  const double tail_width = 0.35 * rng.uniform(0.9, 1.1);
  const double sy = 0.85 * rng.uniform(0.95, 1.05);
  const double sz = 0.8 * rng.uniform(0.95, 1.05);

  std::vector<Vec3> offsets(sphere.vertices.size());
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    const Vec3& n = sphere.vertices[i];
    Vec3 v = n * (1.0 + bump(n, head, head_amp, head_width) + bump(n, tail, tail_amp, tail_width));
    v.y() *= sy;
    v.z() *= sz;
    offsets[i] = v - n;
  }
  return offsets;
}

std::vector<int> synth_face_parts(const Mesh& sphere) {
  const double head_cos = std::cos(50.0 * kDeg);
  const double tail_cos = std::cos(45.0 * kDeg);
  std::vector<int> parts(sphere.faces.size());
  for (std::size_t f = 0; f < parts.size(); ++f) {
    const Face& face = sphere.faces[f];
    const Vec3 n = (sphere.vertices[face[0]] + sphere.vertices[face[1]] + sphere.vertices[face[2]]).normalized();
    if (n.dot(kHeadAxis) > head_cos) {
      parts[f] = 0;
    } else if (n.dot(kTailAxis) > tail_cos) {
      parts[f] = 1;
    } else {
      parts[f] = n.y() >= 0.0 ? 2 : 3;
    }
  }
  return parts;
}

KeypointVertices synth_keypoint_vertices(const Mesh& sphere) {
  const std::pair<const char*, Vec3> dirs[] = {
      {"head", kHeadAxis},
      {"tail", kTailAxis},
      {"top", Vec3::UnitY()},
      {"bottom", -Vec3::UnitY()},
      {"front", Vec3::UnitZ()},
      {"back", -Vec3::UnitZ()},
      {"head_top", Vec3(0.6, 0.8, 0.0)},
      {"head_front", Vec3(0.6, 0.0, 0.8)},
  };
  KeypointVertices kv;
  for (const auto& [name, d] : dirs) {
    const Vec3 u = d.normalized();
    int best = 0;
    for (int i = 1; i < sphere.num_vertices(); ++i) {
      if (sphere.vertices[i].dot(u) > sphere.vertices[best].dot(u)) best = i;
    }
    kv.names.emplace_back(name);
    kv.vertices.push_back(best);
  }
  return kv;
}

namespace {

PartMap part_map(const Grid& attributes, const Grid& silhouette, int num_parts) {
  PartMap pm;
  pm.probs = Grid(silhouette.height(), silhouette.width(), num_parts + 1);
  for (std::size_t m = 0; m < pm.probs.pixels(); ++m) {
    for (int p = 0; p < num_parts; ++p) pm.probs.data()[m * (num_parts + 1) + p] = attributes.data()[m * num_parts + p];
    pm.probs.data()[m * (num_parts + 1) + num_parts] = 1.0 - silhouette.data()[m];
  }
  pm.normalize();
  return pm;
}

}  // namespace

PartMap render_face_parts(const Mesh& mesh, const Camera& cam, std::span<const int> face_parts, int num_parts,
                          const RasterConfig& cfg) {
  if (face_parts.size() != mesh.faces.size()) throw ParameterError("render_face_parts: one label per face needed");
  AttributeTable table;
  table.channels = num_parts;
  table.values.assign(mesh.faces.size() * num_parts, 0.0);
  table.index.resize(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    if (face_parts[f] < 0 || face_parts[f] >= num_parts) throw ParameterError("render_face_parts: label out of range");
    table.values[f * num_parts + face_parts[f]] = 1.0;
    const int fi = static_cast<int>(f);
    table.index[f] = {fi, fi, fi};
  }
  RasterConfig rc = cfg;
  rc.background = 0.0;
  const RasterOutput out = rasterize(mesh, cam, table, rc);
  return part_map(out.attributes, out.silhouette, num_parts);
}

PartMap render_truth_parts(const SceneTruth& truth, int uv_size, const RasterConfig& cfg) {
  const Mesh mesh = truth.mesh();
  const UVMapping mapping = build_uv_mapping(mesh, uv_size, uv_size);
  const Grid canonical = canonical_from_face_parts(mapping, truth.face_parts, truth.num_parts);
  RasterConfig rc = cfg;
  rc.background = 0.0;
  const RasterOutput out = rasterize(mesh, truth.camera, canonical_attributes(mesh, canonical), rc);
  return part_map(out.attributes, out.silhouette, truth.num_parts);
}

Grid canonical_from_face_parts(const UVMapping& mapping, std::span<const int> face_parts, int num_parts) {
  Grid g(mapping.height, mapping.width, num_parts);
  for (int r = 0; r < mapping.height; ++r) {
    for (int c = 0; c < mapping.width; ++c) {
      const int f = mapping.at(r, c).face;
      if (f < 0 || f >= static_cast<int>(face_parts.size())) {
        throw ParameterError("canonical_from_face_parts: mapping references an unknown face");
      }
      g(r, c, face_parts[f]) = 1.0;
    }
  }
  return g;
}

CategoryState truth_state(const SceneTruth& truth, int uv_size) {
  CategoryState s;
  s.tmpl = truth.mesh();
  s.mapping = build_uv_mapping(s.tmpl, uv_size, uv_size);
  CanonicalUV c;
  c.probs = canonical_from_face_parts(s.mapping, truth.face_parts, truth.num_parts);
  c.sample_count = 1;
  s.labels = vertex_part_labels(s.tmpl, c.probs);
  s.canonical = std::move(c);
  s.round = 1;
  return s;
}

SceneBundle render_scene(const SceneTruth& truth, const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Mesh mesh = truth.mesh();
  const int n = cfg.image_size;
  RasterConfig rc;
  rc.height = rc.width = n;
  rc.sigma = cfg.sigma;
  rc.gamma = cfg.gamma;

  Rng rng(seed);
  double colors[kSynthParts][3];
  for (int p = 0; p < kSynthParts; ++p) {
    for (int ch = 0; ch < 3; ++ch) colors[p][ch] = std::clamp(kPartColors[p][ch] + rng.uniform(-0.05, 0.05), 0.0, 1.0);
  }
  const double bg[3] = {rng.uniform(0.35, 0.5), rng.uniform(0.35, 0.5), rng.uniform(0.35, 0.5)};

  // Flat shading by the rotated face normal.
  const Eigen::Matrix3d rot = rotation_matrix(truth.camera.quat);
  AttributeTable table;
  table.channels = 3;
  table.values.resize(mesh.faces.size() * 3);
  table.index.resize(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& face = mesh.faces[f];
    const Vec3 fn = (mesh.vertices[face[1]] - mesh.vertices[face[0]])
                        .cross(mesh.vertices[face[2]] - mesh.vertices[face[0]])
                        .normalized();
    const double shade = 0.45 + 0.55 * std::max(0.0, (rot * fn).z());
    for (int ch = 0; ch < 3; ++ch) table.values[f * 3 + ch] = shade * colors[truth.face_parts[f]][ch];
    const int fi = static_cast<int>(f);
    table.index[f] = {fi, fi, fi};
  }
  const RasterOutput out = rasterize(mesh, truth.camera, table, rc);

  SceneBundle s;
  s.obs.image = Grid(n, n, 3);
  s.obs.mask = Grid(n, n, 1);
  for (std::size_t m = 0; m < s.obs.mask.pixels(); ++m) {
    const double sil = out.silhouette.data()[m];
    s.obs.mask.data()[m] = sil > 0.5 ? 1.0 : 0.0;
    for (int ch = 0; ch < 3; ++ch) {
      s.obs.image.data()[3 * m + ch] = out.attributes.data()[3 * m + ch] + (1.0 - sil) * bg[ch];
    }
  }
  s.obs.parts = render_truth_parts(truth, cfg.uv_size, rc);

  const KeypointVertices kv = synth_keypoint_vertices(make_sphere(truth.subdivisions));
  const std::vector<Vec3> normals = vertex_normals(mesh);
  const Projection proj = project(mesh.vertices, truth.camera);
  KeypointSet kp;
  for (std::size_t i = 0; i < kv.names.size(); ++i) {
    const int v = kv.vertices[i];
    const Vec2 p = proj.points[v];
    const bool inside = std::abs(p.x()) <= 1.0 && std::abs(p.y()) <= 1.0;
    kp.names.push_back(kv.names[i]);
    kp.points.push_back(p);
    kp.visible.push_back(inside && (rot * normals[v]).z() > 0.0);
  }
  s.keypoints = std::move(kp);
  s.truth = truth;
  return s;
}

std::vector<SceneBundle> synth(int n, std::uint64_t seed, const SynthConfig& cfg) {
  if (n < 1) throw ParameterError("synth: need at least one scene");
  cfg.validate();
  const Mesh sphere = make_sphere(cfg.subdivisions);
  const std::vector<int> parts = synth_face_parts(sphere);
  Rng master(seed);
  std::vector<SceneBundle> out;
  for (int i = 0; i < n; ++i) {
    const std::uint64_t shape_seed = master.below(UINT64_MAX);
    const std::uint64_t render_seed = master.below(UINT64_MAX);
    Rng cam_rng(master.below(UINT64_MAX));
    SceneTruth truth;
    truth.subdivisions = cfg.subdivisions;
    truth.offsets = synth_offsets(cfg.subdivisions, shape_seed);
    truth.face_parts = parts;
    truth.num_parts = kSynthParts;
    truth.camera = sample_camera(cam_rng, cfg);
    SceneBundle s = render_scene(truth, cfg, render_seed);
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03d", i);
    s.name = name;
    out.push_back(std::move(s));
  }
  return out;
}

std::unique_ptr<GradcheckScene> make_gradcheck_scene(std::uint64_t seed, const RasterConfig& raster,
                                                     int subdivisions, int uv_size) {
  raster.validate();
  auto sc = std::make_unique<GradcheckScene>();
  Rng rng(seed);
  sc->tmpl = make_sphere(subdivisions);
  sc->mapping = build_uv_mapping(sc->tmpl, uv_size, uv_size);
  std::vector<Vec3> offsets(sc->tmpl.vertices.size());
  for (Vec3& o : offsets) o = Vec3(rng.normal(0.0, 0.05), rng.normal(0.0, 0.05), rng.normal(0.0, 0.05));

  Camera cam;
  cam.scale = rng.uniform(0.5, 0.7);
  cam.translation = Vec2(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
  cam.quat = Quat(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();

  const int h = raster.height, w = raster.width;
  sc->obs.image = Grid(h, w, 3);
  for (double& v : sc->obs.image.data()) v = rng.uniform();
  sc->obs.mask = Grid(h, w, 1);
  for (int r = h / 5; r < h - h / 5; ++r) {
    for (int c = w / 4; c < w - w / 4; ++c) sc->obs.mask(r, c) = 1.0;
  }
  sc->obs.parts.probs = Grid(h, w, kSynthParts + 1);
  for (double& v : sc->obs.parts.probs.data()) v = rng.uniform();
  sc->obs.parts.normalize();
  sc->canonical = Grid(uv_size, uv_size, kSynthParts);
  for (double& v : sc->canonical.data()) v = rng.uniform();

  TextureFlow flow = init_flow_from_projection(apply_deformation(sc->tmpl, {offsets}), cam, sc->mapping);
  for (double& v : flow.grid.data()) v += rng.normal(0.0, 0.05);
  flow.clamp();

  InstanceObjective& obj = sc->objective;
  obj.obs = &sc->obs;
  obj.ctx.tmpl = &sc->tmpl;
  obj.ctx.mapping = &sc->mapping;
  obj.ctx.raster = raster;
  obj.ctx.canonical = &sc->canonical;
  obj.ctx.labels = vertex_part_labels(sc->tmpl, sc->canonical);
  obj.ctx.part_samples = sample_part_pixels(sc->obs.parts, 256, rng.below(UINT64_MAX));
  sc->params = ParamVector::pack(offsets, std::vector<Camera>{cam}, flow);
  return sc;
}

}  // namespace semrecon
