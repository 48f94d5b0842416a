#include "semrecon/softras.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "semrecon/errors.hpp"
#include "semrecon/sampling.hpp"

namespace semrecon {

void RasterConfig::validate() const {
  if (height < 1 || width < 1) throw ParameterError("RasterConfig: image must have at least one pixel");
  if (!(sigma > 0.0) || !(gamma > 0.0)) throw ParameterError("RasterConfig: sigma and gamma must be > 0");
  if (!(support > 0.0) || !(depth_scale > 0.0)) {
    throw ParameterError("RasterConfig: support and depth_scale must be > 0");
  }
}

AttributeTable AttributeTable::per_vertex(const Mesh& mesh, std::vector<double> values, int channels) {
  if (channels > 0 && values.size() != mesh.vertices.size() * channels) {
    throw ParameterError("AttributeTable: attribute count does not match vertex count");
  }
  return {channels, std::move(values), mesh.faces};
}

AttributeTable AttributeTable::per_uv(const Mesh& mesh, std::vector<double> values, int channels) {
  if (!mesh.has_uv()) throw ParameterError("AttributeTable: mesh has no uv coordinates");
  if (channels > 0 && values.size() != mesh.uvs.size() * channels) {
    throw ParameterError("AttributeTable: attribute count does not match uv count");
  }
  return {channels, std::move(values), mesh.face_uvs};
}

namespace {

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kMinArea = 1e-14;

}  // namespace

RasterOutput rasterize_projected(const Projection& proj, std::span<const Face> faces,
                                 const AttributeTable& attrs, const RasterConfig& cfg) {
  cfg.validate();
  const int H = cfg.height;
  const int W = cfg.width;
  const int C = attrs.channels;
  const int nf = static_cast<int>(faces.size());
  if (C > 0 && attrs.index.size() != faces.size()) {
    throw ParameterError("rasterize: attribute index does not match faces");
  }

  RasterOutput out;
  out.height = H;
  out.width = W;
  out.silhouette = Grid(H, W, 1);
  out.attributes = Grid(H, W, C, cfg.background);
  out.blend = Grid(H, W, C);
  out.face_offsets.assign(nf + 1, 0);

  const double radius = cfg.support * std::sqrt(cfg.sigma);
  const double radius2 = radius * radius;

  for (int f = 0; f < nf; ++f) {
    out.face_offsets[f] = out.coverage.size();
    const Vec2& a = proj.points[faces[f][0]];
    const Vec2& b = proj.points[faces[f][1]];
    const Vec2& c = proj.points[faces[f][2]];
    const double area = cross2(b - a, c - a);
    if (std::abs(area) < kMinArea || !std::isfinite(area)) continue;
    const Vec2 lo = a.cwiseMin(b).cwiseMin(c).array() - radius;
    const Vec2 hi = a.cwiseMax(b).cwiseMax(c).array() + radius;
    // Column index grows with x, row index shrinks with y.
    const int c0 = std::max(0, static_cast<int>(std::ceil((lo.x() + 1.0) * 0.5 * W - 0.5)));
    const int c1 = std::min(W - 1, static_cast<int>(std::floor((hi.x() + 1.0) * 0.5 * W - 0.5)));
    const int r0 = std::max(0, static_cast<int>(std::ceil((1.0 - hi.y()) * 0.5 * H - 0.5)));
    const int r1 = std::min(H - 1, static_cast<int>(std::floor((1.0 - lo.y()) * 0.5 * H - 0.5)));
    const Vec2* corner[3] = {&a, &b, &c};
    for (int r = r0; r <= r1; ++r) {
      for (int col = c0; col <= c1; ++col) {
        const Vec2 p = pixel_center(r, col, H, W);
        RasterOutput::Sample s{};
        s.lambda[0] = cross2(b - p, c - p) / area;
        s.lambda[1] = cross2(c - p, a - p) / area;
        s.lambda[2] = cross2(a - p, b - p) / area;
        s.inside = s.lambda[0] >= 0.0 && s.lambda[1] >= 0.0 && s.lambda[2] >= 0.0;
        double d2 = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 3; ++k) {
          const Vec2& u = *corner[k];
          const Vec2& v = *corner[(k + 1) % 3];
          const Vec2 e = v - u;
          const double len2 = e.squaredNorm();
          const double t = len2 > 0.0 ? std::clamp((p - u).dot(e) / len2, 0.0, 1.0) : 0.0;
          const double dk = (p - (u + t * e)).squaredNorm();
          if (dk < d2) {
            d2 = dk;
            s.edge = k;
            s.edge_t = t;
          }
        }
        if (!s.inside && d2 > radius2) continue;
        const double prob = sigmoid((s.inside ? d2 : -d2) / cfg.sigma);
        s.mu_sum = 0.0;
        for (int k = 0; k < 3; ++k) s.mu_sum += std::max(s.lambda[k], 0.0);
        for (int k = 0; k < 3; ++k) s.beta[k] = std::max(s.lambda[k], 0.0) / s.mu_sum;
        s.z = 0.0;
        for (int k = 0; k < 3; ++k) s.z += s.beta[k] * proj.depth[faces[f][k]];
        out.coverage.push_back({f, r * W + col, prob});
        out.samples.push_back(s);
      }
    }
  }
  out.face_offsets[nf] = out.coverage.size();

  // Group coverage entries by pixel (stable counting sort).
  const std::size_t npix = static_cast<std::size_t>(H) * W;
  out.pixel_offsets.assign(npix + 1, 0);
  for (const auto& e : out.coverage) ++out.pixel_offsets[e.pixel + 1];
  for (std::size_t i = 0; i < npix; ++i) out.pixel_offsets[i + 1] += out.pixel_offsets[i];
  out.pixel_entries.resize(out.coverage.size());
  {
    std::vector<std::size_t> cursor(out.pixel_offsets.begin(), out.pixel_offsets.end() - 1);
    for (std::size_t i = 0; i < out.coverage.size(); ++i) {
      out.pixel_entries[cursor[out.coverage[i].pixel]++] = static_cast<int>(i);
    }
  }
  out.pixel_norm.assign(npix, 0.0);

  const double zeta_scale = cfg.depth_scale / cfg.gamma;
  std::vector<double> attr(C);
  for (std::size_t m = 0; m < npix; ++m) {
    const std::size_t begin = out.pixel_offsets[m];
    const std::size_t end = out.pixel_offsets[m + 1];
    if (begin == end) continue;
    double keep = 1.0;
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t i = begin; i < end; ++i) {
      const int e = out.pixel_entries[i];
      keep *= 1.0 - out.coverage[e].prob;
      zmax = std::max(zmax, out.samples[e].z * zeta_scale);
    }
    const double sil = 1.0 - keep;
    out.silhouette.data()[m] = sil;
    if (C == 0) continue;

    double norm = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const int e = out.pixel_entries[i];
      auto& s = out.samples[e];
      s.expz = std::exp(s.z * zeta_scale - zmax);
      norm += out.coverage[e].prob * s.expz;
    }
    out.pixel_norm[m] = norm;
    double* blend = out.blend.data().data() + m * C;
    for (std::size_t i = begin; i < end; ++i) {
      const int e = out.pixel_entries[i];
      auto& s = out.samples[e];
      s.weight = out.coverage[e].prob * s.expz / norm;
      const Face& idx = attrs.index[out.coverage[e].face];
      for (int ch = 0; ch < C; ++ch) {
        double v = 0.0;
        for (int k = 0; k < 3; ++k) v += s.beta[k] * attrs.values[idx[k] * C + ch];
        blend[ch] += s.weight * v;
      }
    }
    double* dst = out.attributes.data().data() + m * C;
    for (int ch = 0; ch < C; ++ch) dst[ch] = sil * blend[ch] + (1.0 - sil) * cfg.background;
  }
  return out;
}

RasterOutput rasterize(const Mesh& mesh, const Camera& cam, const AttributeTable& attrs,
                       const RasterConfig& cfg) {
  if (attrs.channels > 0) {
    const int rows = attrs.rows();
    for (const Face& f : attrs.index) {
      for (int i : f) {
        if (i < 0 || i >= rows) throw ParameterError("rasterize: attribute index out of range");
      }
    }
  }
  return rasterize_projected(project(mesh.vertices, cam), mesh.faces, attrs, cfg);
}

RasterGradient rasterize_backward(const Projection& proj, std::span<const Face> faces,
                                  const AttributeTable& attrs, const RasterConfig& cfg,
                                  const RasterOutput& out, const Grid* g_silhouette,
                                  const Grid* g_attributes, std::span<const double> g_coverage) {
  const int C = attrs.channels;
  const std::size_t npix = static_cast<std::size_t>(out.height) * out.width;
  RasterGradient grad;
  grad.points.assign(proj.points.size(), Vec2::Zero());
  grad.depth.assign(proj.points.size(), 0.0);
  grad.attributes.assign(attrs.values.size(), 0.0);

  const double zeta_scale = cfg.depth_scale / cfg.gamma;
  const std::size_t n = out.coverage.size();
  std::vector<double> g_prob(n, 0.0);
  std::vector<double> g_z(n, 0.0);
  std::vector<double> g_beta(n * 3, 0.0);
  if (!g_coverage.empty()) {
    for (std::size_t e = 0; e < n; ++e) g_prob[e] = g_coverage[e];
  }

  std::vector<double> prefix, g_blend(C), g_w;
  for (std::size_t m = 0; m < npix; ++m) {
    const std::size_t begin = out.pixel_offsets[m];
    const std::size_t end = out.pixel_offsets[m + 1];
    if (begin == end) continue;
    const std::size_t cnt = end - begin;
    const double sil = out.silhouette.data()[m];

    double g_sil = g_silhouette ? g_silhouette->data()[m] : 0.0;
    if (C > 0 && g_attributes) {
      const double* ga = g_attributes->data().data() + m * C;
      const double* blend = out.blend.data().data() + m * C;
      for (int ch = 0; ch < C; ++ch) {
        g_sil += ga[ch] * (blend[ch] - cfg.background);
        g_blend[ch] = ga[ch] * sil;
      }
      // blend = sum_j w_j C_j, w_j = D_j exp(zeta_j) / sum_k D_k exp(zeta_k)
      g_w.assign(cnt, 0.0);
      double wsum = 0.0;
      for (std::size_t i = 0; i < cnt; ++i) {
        const int e = out.pixel_entries[begin + i];
        const auto& s = out.samples[e];
        const Face& idx = attrs.index[out.coverage[e].face];
        for (int ch = 0; ch < C; ++ch) {
          double v = 0.0;
          for (int k = 0; k < 3; ++k) {
            v += s.beta[k] * attrs.values[idx[k] * C + ch];
            grad.attributes[idx[k] * C + ch] += g_blend[ch] * s.weight * s.beta[k];
            g_beta[e * 3 + k] += g_blend[ch] * s.weight * attrs.values[idx[k] * C + ch];
          }
          g_w[i] += g_blend[ch] * v;
        }
        wsum += g_w[i] * s.weight;
      }
      const double norm = out.pixel_norm[m];
      for (std::size_t i = 0; i < cnt; ++i) {
        const int e = out.pixel_entries[begin + i];
        const auto& s = out.samples[e];
        const double g_e = (g_w[i] - wsum) / norm;
        g_prob[e] += g_e * s.expz;
        g_z[e] += g_e * out.coverage[e].prob * s.expz * zeta_scale;
      }
    }

    if (g_sil != 0.0) {
      // d sil / d D_j = prod_{k != j} (1 - D_k), via prefix/suffix products.
      prefix.assign(cnt + 1, 1.0);
      for (std::size_t i = 0; i < cnt; ++i) {
        prefix[i + 1] = prefix[i] * (1.0 - out.coverage[out.pixel_entries[begin + i]].prob);
      }
      double suffix = 1.0;
      for (std::size_t i = cnt; i-- > 0;) {
        const int e = out.pixel_entries[begin + i];
        g_prob[e] += g_sil * prefix[i] * suffix;
        suffix *= 1.0 - out.coverage[e].prob;
      }
    }
  }

  for (std::size_t e = 0; e < n; ++e) {
    const auto& s = out.samples[e];
    const auto& entry = out.coverage[e];
    const Face& f = faces[entry.face];
    const Vec2* corner[3] = {&proj.points[f[0]], &proj.points[f[1]], &proj.points[f[2]]};
    Vec2 g_corner[3] = {Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};
    const Vec2 p = pixel_center(entry.pixel / out.width, entry.pixel % out.width, out.height, out.width);

    // Coverage: D = sigmoid(sign * d^2 / sigma), d^2 to the nearest edge.
    if (g_prob[e] != 0.0) {
      const double D = entry.prob;
      const double g_d2 = g_prob[e] * D * (1.0 - D) * (s.inside ? 1.0 : -1.0) / cfg.sigma;
      if (g_d2 != 0.0) {
        const int k = s.edge;
        const Vec2& u = *corner[k];
        const Vec2& v = *corner[(k + 1) % 3];
        const Vec2 diff = p - (u + s.edge_t * (v - u));
        g_corner[k] += -2.0 * g_d2 * (1.0 - s.edge_t) * diff;
        g_corner[(k + 1) % 3] += -2.0 * g_d2 * s.edge_t * diff;
      }
    }

    // Interpolated depth and attributes through the clamped barycentrics.
    double gb[3];
    for (int k = 0; k < 3; ++k) {
      gb[k] = g_beta[e * 3 + k] + g_z[e] * proj.depth[f[k]];
      grad.depth[f[k]] += g_z[e] * s.beta[k];
    }
    const double gbdot = gb[0] * s.beta[0] + gb[1] * s.beta[1] + gb[2] * s.beta[2];
    double gl[3];
    bool any = false;
    for (int k = 0; k < 3; ++k) {
      gl[k] = s.lambda[k] > 0.0 ? (gb[k] - gbdot) / s.mu_sum : 0.0;
      any = any || gl[k] != 0.0;
    }
    if (any) {
      const Vec2& a = *corner[0];
      const Vec2& b = *corner[1];
      const Vec2& c = *corner[2];
      const double area = cross2(b - a, c - a);
      const double gn[3] = {gl[0] / area, gl[1] / area, gl[2] / area};
      const double g_area = -(gl[0] * s.lambda[0] + gl[1] * s.lambda[1] + gl[2] * s.lambda[2]) / area;
      auto d_cross = [](const Vec2& x, const Vec2& y, double g, Vec2& gx, Vec2& gy) {
        gx += g * Vec2(y.y(), -y.x());
        gy += g * Vec2(-x.y(), x.x());
      };
      const Vec2 pa = a - p, pb = b - p, pc = c - p;
      d_cross(pb, pc, gn[0], g_corner[1], g_corner[2]);
      d_cross(pc, pa, gn[1], g_corner[2], g_corner[0]);
      d_cross(pa, pb, gn[2], g_corner[0], g_corner[1]);
      Vec2 ge1 = Vec2::Zero(), ge2 = Vec2::Zero();
      d_cross(b - a, c - a, g_area, ge1, ge2);
      g_corner[1] += ge1;
      g_corner[2] += ge2;
      g_corner[0] -= ge1 + ge2;
    }
    for (int k = 0; k < 3; ++k) grad.points[f[k]] += g_corner[k];
  }
  return grad;
}

Grid render_silhouette(const Mesh& mesh, const Camera& cam, const RasterConfig& cfg) {
  return rasterize(mesh, cam, AttributeTable{}, cfg).silhouette;
}

AttributeTable canonical_attributes(const Mesh& mesh, const Grid& canonical) {
  if (!mesh.has_uv()) throw ParameterError("canonical_attributes: mesh has no uv coordinates");
  const int np = canonical.channels();
  std::vector<double> values(mesh.uvs.size() * np);
  std::vector<double> sample(np);
  for (std::size_t t = 0; t < mesh.uvs.size(); ++t) {
    const Vec2 idx = uv_index(mesh.uvs[t], canonical.height(), canonical.width());
    gather(canonical, bilinear_taps(idx.x(), idx.y(), canonical.height(), canonical.width()), sample);
    std::copy(sample.begin(), sample.end(), values.begin() + t * np);
  }
  return AttributeTable::per_uv(mesh, std::move(values), np);
}

Grid render_part_probs(const Mesh& mesh, const Camera& cam, const Grid& canonical,
                       const UVMapping& mapping, const RasterConfig& cfg) {
  if (canonical.height() != mapping.height || canonical.width() != mapping.width) {
    throw ParameterError("render_part_probs: canonical map does not match the uv mapping grid");
  }
  return rasterize(mesh, cam, canonical_attributes(mesh, canonical), cfg).attributes;
}

}  // namespace semrecon
