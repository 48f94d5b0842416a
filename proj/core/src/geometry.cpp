#include "semrecon/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <tuple>

#include "semrecon/errors.hpp"
#include "semrecon/sampling.hpp"

namespace semrecon {

void validate(const Mesh& mesh) {
  const int nv = mesh.num_vertices();
  for (const Face& f : mesh.faces) {
    for (int i : f) {
      if (i < 0 || i >= nv) throw ParameterError("mesh: face index out of range");
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
      throw ParameterError("mesh: degenerate face");
    }
  }
  if (!mesh.face_uvs.empty()) {
    if (mesh.face_uvs.size() != mesh.faces.size()) {
      throw ParameterError("mesh: face_uvs size does not match faces");
    }
    const int nt = static_cast<int>(mesh.uvs.size());
    for (const Face& f : mesh.face_uvs) {
      for (int i : f) {
        if (i < 0 || i >= nt) throw ParameterError("mesh: uv index out of range");
      }
    }
  }
  for (const Vec2& uv : mesh.uvs) {
    if (!(uv.x() >= 0.0 && uv.x() <= 1.0 && uv.y() >= 0.0 && uv.y() <= 1.0)) {
      throw ParameterError("mesh: uv coordinate outside [0,1]^2");
    }
  }
}

std::vector<Edge> unique_edges(const Mesh& mesh) {
  std::vector<Edge> edges;
  edges.reserve(mesh.faces.size() * 3);
  for (const Face& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      const int a = f[k];
      const int b = f[(k + 1) % 3];
      edges.emplace_back(std::min(a, b), std::max(a, b));
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

bool is_watertight(const Mesh& mesh) {
  std::map<Edge, int> count;
  for (const Face& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      const int a = f[k];
      const int b = f[(k + 1) % 3];
      ++count[{std::min(a, b), std::max(a, b)}];
    }
  }
  if (count.empty()) return false;
  return std::all_of(count.begin(), count.end(), [](const auto& kv) { return kv.second == 2; });
}

namespace {

Mesh icosahedron() {
  Mesh m;
  const double y = 1.0 / std::sqrt(5.0);
  const double r = 2.0 / std::sqrt(5.0);
  const double step = 2.0 * std::numbers::pi / 5.0;
  m.vertices.emplace_back(0.0, 1.0, 0.0);
  for (int k = 0; k < 5; ++k) {
    const double a = k * step;
    m.vertices.emplace_back(r * std::sin(a), y, r * std::cos(a));
  }
  for (int k = 0; k < 5; ++k) {
    const double a = (k + 0.5) * step;
    m.vertices.emplace_back(r * std::sin(a), -y, r * std::cos(a));
  }
  m.vertices.emplace_back(0.0, -1.0, 0.0);
  for (int k = 0; k < 5; ++k) {
    const int u0 = 1 + k;
    const int u1 = 1 + (k + 1) % 5;
    const int l0 = 6 + k;
    const int l1 = 6 + (k + 1) % 5;
    m.faces.push_back({0, u0, u1});
    m.faces.push_back({u0, l0, u1});
    m.faces.push_back({u1, l0, l1});
    m.faces.push_back({11, l1, l0});
  }
  return m;
}

void subdivide(Mesh& m) {
  std::map<Edge, int> midpoint;
  auto mid = [&](int a, int b) {
    const Edge key{std::min(a, b), std::max(a, b)};
    if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
    const int idx = m.num_vertices();
    m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
    midpoint.emplace(key, idx);
    return idx;
  };
  std::vector<Face> faces;
  faces.reserve(m.faces.size() * 4);
  for (const Face& f : m.faces) {
    const int ab = mid(f[0], f[1]);
    const int bc = mid(f[1], f[2]);
    const int ca = mid(f[2], f[0]);
    faces.push_back({f[0], ab, ca});
    faces.push_back({f[1], bc, ab});
    faces.push_back({f[2], ca, bc});
    faces.push_back({ab, bc, ca});
  }
  m.faces = std::move(faces);
}

void orient_outward(Mesh& m) {
  for (Face& f : m.faces) {
    const Vec3& a = m.vertices[f[0]];
    const Vec3& b = m.vertices[f[1]];
    const Vec3& c = m.vertices[f[2]];
    if ((b - a).cross(c - a).dot(a + b + c) < 0.0) std::swap(f[1], f[2]);
  }
}

// Longitude u in [0, 1] with the seam on the -z meridian; latitude v = 0 at +y.
void assign_spherical_uv(Mesh& m) {
  constexpr double kPoleEps = 1e-12;
  auto is_pole = [&](int v) {
    const Vec3& p = m.vertices[v];
    return std::abs(p.x()) < kPoleEps && std::abs(p.z()) < kPoleEps;
  };
  auto longitude = [&](int v) {
    const Vec3& p = m.vertices[v];
    return 0.5 + std::atan2(p.x(), p.z()) / (2.0 * std::numbers::pi);
  };

  std::map<std::tuple<int, double, double>, int> uv_index;
  m.uvs.clear();
  m.face_uvs.assign(m.faces.size(), Face{});
  for (std::size_t fi = 0; fi < m.faces.size(); ++fi) {
    const Face& f = m.faces[fi];
    std::array<double, 3> u{};
    std::array<bool, 3> pole{};
    double lo = 2.0, hi = -1.0;
    for (int k = 0; k < 3; ++k) {
      pole[k] = is_pole(f[k]);
      if (pole[k]) continue;
      u[k] = longitude(f[k]);
      lo = std::min(lo, u[k]);
      hi = std::max(hi, u[k]);
    }
    if (hi - lo > 0.5) {
      double mean = 0.0;
      int n = 0;
      for (int k = 0; k < 3; ++k) {
        if (pole[k]) continue;
        if (u[k] < 0.5) u[k] += 1.0;
        mean += u[k];
        ++n;
      }
      if (mean / n >= 1.0) {
        for (int k = 0; k < 3; ++k) u[k] -= 1.0;
      }
    }
    double mean = 0.0;
    int n = 0;
    for (int k = 0; k < 3; ++k) {
      if (!pole[k]) {
        mean += u[k];
        ++n;
      }
    }
    for (int k = 0; k < 3; ++k) {
      if (pole[k]) u[k] = n > 0 ? mean / n : 0.5;
      u[k] = std::clamp(u[k], 0.0, 1.0);
      const double y = std::clamp(m.vertices[f[k]].normalized().y(), -1.0, 1.0);
      const double v = std::acos(y) / std::numbers::pi;
      const auto key = std::make_tuple(f[k], u[k], v);
      auto it = uv_index.find(key);
      if (it == uv_index.end()) {
        it = uv_index.emplace(key, static_cast<int>(m.uvs.size())).first;
        m.uvs.emplace_back(u[k], v);
      }
      m.face_uvs[fi][k] = it->second;
    }
  }
}

// Barycentric coordinates of p w.r.t. (a, b, c); returns false for a degenerate triangle.
bool barycentric(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c, Vec3& out) {
  auto cross = [](const Vec2& x, const Vec2& y) { return x.x() * y.y() - x.y() * y.x(); };
  const double area = cross(b - a, c - a);
  if (std::abs(area) < 1e-18) return false;
  out = Vec3(cross(b - p, c - p), cross(c - p, a - p), cross(a - p, b - p)) / area;
  return true;
}

}  // namespace

Mesh make_sphere(int subdivisions) {
  if (subdivisions < 0 || subdivisions > 6) {
    throw ParameterError("make_sphere: subdivisions must be in [0, 6]");
  }
  Mesh m = icosahedron();
  for (int i = 0; i < subdivisions; ++i) subdivide(m);
  orient_outward(m);
  assign_spherical_uv(m);
  return m;
}

UVMapping build_uv_mapping(const Mesh& mesh, int h_uv, int w_uv) {
  if (!mesh.has_uv()) throw ParameterError("build_uv_mapping: mesh has no uv coordinates");
  if (h_uv < 8 || w_uv < 8) throw ParameterError("build_uv_mapping: grid dims must be >= 8");

  UVMapping map;
  map.height = h_uv;
  map.width = w_uv;
  map.texels.assign(static_cast<std::size_t>(h_uv) * w_uv, TexelMapping{});

  constexpr double kInsideTol = -1e-12;
  for (int fi = 0; fi < mesh.num_faces(); ++fi) {
    const Face& t = mesh.face_uvs[fi];
    const Vec2& a = mesh.uvs[t[0]];
    const Vec2& b = mesh.uvs[t[1]];
    const Vec2& c = mesh.uvs[t[2]];
    const double umin = std::min({a.x(), b.x(), c.x()});
    const double umax = std::max({a.x(), b.x(), c.x()});
    const double vmin = std::min({a.y(), b.y(), c.y()});
    const double vmax = std::max({a.y(), b.y(), c.y()});
    const int c0 = std::max(0, static_cast<int>(std::ceil(umin * w_uv - 0.5)));
    const int c1 = std::min(w_uv - 1, static_cast<int>(std::floor(umax * w_uv - 0.5)));
    const int r0 = std::max(0, static_cast<int>(std::ceil(vmin * h_uv - 0.5)));
    const int r1 = std::min(h_uv - 1, static_cast<int>(std::floor(vmax * h_uv - 0.5)));
    for (int r = r0; r <= r1; ++r) {
      for (int col = c0; col <= c1; ++col) {
        TexelMapping& texel = map.texels[static_cast<std::size_t>(r) * w_uv + col];
        if (texel.covered) continue;
        Vec3 bary;
        if (!barycentric(texel_center(r, col, h_uv, w_uv), a, b, c, bary)) continue;
        if (bary.minCoeff() < kInsideTol) continue;
        bary = bary.cwiseMax(0.0);
        texel.face = fi;
        texel.bary = bary / bary.sum();
        texel.covered = true;
      }
    }
  }

  std::vector<int> covered;
  for (std::size_t i = 0; i < map.texels.size(); ++i) {
    if (map.texels[i].covered) covered.push_back(static_cast<int>(i));
  }
  if (covered.empty()) throw ParameterError("build_uv_mapping: no texel is covered by the uv layout");

  // Nearest covered texel by expanding square rings; a hit at Chebyshev radius
  // r can still be beaten up to Euclidean radius r * sqrt(2).
  const int max_radius = std::max(h_uv, w_uv);
  for (int r = 0; r < h_uv; ++r) {
    for (int col = 0; col < w_uv; ++col) {
      TexelMapping& texel = map.texels[static_cast<std::size_t>(r) * w_uv + col];
      if (texel.covered) continue;
      long best_d2 = std::numeric_limits<long>::max();
      int best = -1;
      int stop = max_radius;
      for (int ring = 1; ring <= std::min(stop, max_radius); ++ring) {
        for (int dr = -ring; dr <= ring; ++dr) {
          for (int dc = -ring; dc <= ring; ++dc) {
            if (std::max(std::abs(dr), std::abs(dc)) != ring) continue;
            const int rr = r + dr;
            const int cc = col + dc;
            if (rr < 0 || rr >= h_uv || cc < 0 || cc >= w_uv) continue;
            const int idx = rr * w_uv + cc;
            if (!map.texels[idx].covered) continue;
            const long d2 = static_cast<long>(dr) * dr + static_cast<long>(dc) * dc;
            if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
              best_d2 = d2;
              best = idx;
            }
          }
        }
        if (best >= 0 && stop == max_radius) {
          stop = static_cast<int>(std::ceil(ring * std::numbers::sqrt2));
        }
      }
      texel.face = map.texels[best].face;
      texel.bary = map.texels[best].bary;
    }
  }
  return map;
}

Mesh apply_deformation(const Mesh& mesh, const Deformation& d) {
  if (d.offsets.size() != mesh.vertices.size()) {
    throw ParameterError("apply_deformation: offsets length does not match vertex count");
  }
  Mesh out = mesh;
  for (std::size_t i = 0; i < out.vertices.size(); ++i) out.vertices[i] += d.offsets[i];
  return out;
}

double laplacian_energy(const Mesh& mesh, std::span<Vec3> grad) {
  const int nv = mesh.num_vertices();
  std::vector<std::vector<int>> nbrs(nv);
  for (const auto& [a, b] : unique_edges(mesh)) {
    nbrs[a].push_back(b);
    nbrs[b].push_back(a);
  }
  std::vector<Vec3> residual(nv, Vec3::Zero());
  double energy = 0.0;
  for (int i = 0; i < nv; ++i) {
    if (nbrs[i].empty()) continue;
    Vec3 mean = Vec3::Zero();
    for (int j : nbrs[i]) mean += mesh.vertices[j];
    mean /= static_cast<double>(nbrs[i].size());
    residual[i] = mesh.vertices[i] - mean;
    energy += residual[i].squaredNorm();
  }
  if (!grad.empty()) {
    for (int i = 0; i < nv; ++i) {
      if (nbrs[i].empty()) continue;
      grad[i] += 2.0 * residual[i];
      const Vec3 share = 2.0 * residual[i] / static_cast<double>(nbrs[i].size());
      for (int j : nbrs[i]) grad[j] -= share;
    }
  }
  return energy;
}

double edge_regularizer(const Mesh& mesh, std::span<Vec3> grad) {
  const auto edges = unique_edges(mesh);
  if (edges.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(edges.size());
  double sum = 0.0;
  for (const auto& [a, b] : edges) {
    const Vec3 d = mesh.vertices[a] - mesh.vertices[b];
    sum += d.squaredNorm();
    if (!grad.empty()) {
      grad[a] += 2.0 * inv * d;
      grad[b] -= 2.0 * inv * d;
    }
  }
  return sum * inv;
}

std::vector<Vec2> vertex_uvs(const Mesh& mesh) {
  if (!mesh.has_uv()) throw ParameterError("vertex_uvs: mesh has no uv coordinates");
  std::vector<Vec2> out(mesh.vertices.size(), Vec2::Zero());
  std::vector<bool> seen(mesh.vertices.size(), false);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int v = mesh.faces[f][k];
      if (seen[v]) continue;
      seen[v] = true;
      out[v] = mesh.uvs[mesh.face_uvs[f][k]];
    }
  }
  return out;
}

std::vector<double> sample_uv_map(const Grid& map, const Vec2& uv) {
  const Vec2 idx = uv_index(uv, map.height(), map.width());
  std::vector<double> out(map.channels());
  gather(map, bilinear_taps(idx.x(), idx.y(), map.height(), map.width()), out);
  return out;
}

std::vector<int> vertex_part_labels(const Mesh& mesh, const Grid& canonical) {
  const auto uvs = vertex_uvs(mesh);
  std::vector<int> labels(uvs.size(), 0);
  for (std::size_t v = 0; v < uvs.size(); ++v) {
    const auto probs = sample_uv_map(canonical, uvs[v]);
    int best = 0;
    for (int p = 1; p < static_cast<int>(probs.size()); ++p) {
      if (probs[p] > probs[best]) best = p;
    }
    labels[v] = best;
  }
  return labels;
}

}  // namespace semrecon
