#include "semrecon/texflow.hpp"

#include <algorithm>

#include "semrecon/errors.hpp"
#include "semrecon/sampling.hpp"

namespace semrecon {

void TextureFlow::clamp() {
  for (double& v : grid.data()) v = std::clamp(v, -1.0, 1.0);
}

void PartMap::normalize() {
  const int c = probs.channels();
  for (int r = 0; r < probs.height(); ++r) {
    for (int col = 0; col < probs.width(); ++col) {
      auto px = probs.pixel(r, col);
      double sum = 0.0;
      for (double& v : px) {
        v = std::max(v, 0.0);
        sum += v;
      }
      if (sum <= 0.0) {
        std::fill(px.begin(), px.end(), 0.0);
        px[c - 1] = 1.0;
      } else {
        for (double& v : px) v /= sum;
      }
    }
  }
}

std::vector<double> sample_image(const Grid& image, std::span<const Vec2> coords) {
  if (image.empty()) throw ParameterError("sample_image: empty image");
  const int c = image.channels();
  std::vector<double> out(coords.size() * c);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const Vec2 idx = image_index_from_normalized(coords[i], image.height(), image.width());
    gather(image, bilinear_taps(idx.x(), idx.y(), image.height(), image.width()),
           std::span<double>(out.data() + i * c, c));
  }
  return out;
}

std::vector<Vec2> sample_image_backward(const Grid& image, std::span<const Vec2> coords,
                                        std::span<const double> g_samples) {
  const int c = image.channels();
  const double sx = 0.5 * image.width();
  const double sy = -0.5 * image.height();
  std::vector<Vec2> grad(coords.size(), Vec2::Zero());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const Vec2 idx = image_index_from_normalized(coords[i], image.height(), image.width());
    const auto taps = bilinear_taps(idx.x(), idx.y(), image.height(), image.width());
    double gcol = 0.0, grow = 0.0;
    for (int k = 0; k < 4; ++k) {
      const auto px = image.pixel(taps.row[k], taps.col[k]);
      for (int ch = 0; ch < c; ++ch) {
        const double g = g_samples[i * c + ch] * px[ch];
        gcol += g * taps.dweight_dcol[k];
        grow += g * taps.dweight_drow[k];
      }
    }
    grad[i] = Vec2(gcol * sx, grow * sy);
  }
  return grad;
}

Grid semantic_uv(const TextureFlow& flow, const PartMap& parts) {
  const int np = parts.num_parts();
  if (np < 1) throw ParameterError("semantic_uv: part map needs at least one part channel");
  Grid out(flow.height(), flow.width(), np);
  std::vector<double> sample(parts.probs.channels());
  for (int r = 0; r < flow.height(); ++r) {
    for (int c = 0; c < flow.width(); ++c) {
      const Vec2 idx = image_index_from_normalized(flow.at(r, c), parts.probs.height(), parts.probs.width());
      gather(parts.probs, bilinear_taps(idx.x(), idx.y(), parts.probs.height(), parts.probs.width()), sample);
      std::copy(sample.begin(), sample.begin() + np, out.pixel(r, c).begin());
    }
  }
  return out;
}

CanonicalUV aggregate_canonical(std::span<const Grid> maps) {
  if (maps.empty()) throw ParameterError("aggregate_canonical: no maps to aggregate");
  CanonicalUV out;
  out.probs = Grid(maps[0].height(), maps[0].width(), maps[0].channels());
  for (const Grid& m : maps) {
    if (!m.same_shape(maps[0])) throw ParameterError("aggregate_canonical: map dimensions differ");
    for (std::size_t i = 0; i < m.size(); ++i) out.probs.data()[i] += m.data()[i];
  }
  const double inv = 1.0 / static_cast<double>(maps.size());
  for (double& v : out.probs.data()) v *= inv;
  out.sample_count = static_cast<int>(maps.size());
  return out;
}

Vec3 surface_point(const Mesh& mesh, const TexelMapping& texel) {
  const Face& f = mesh.faces[texel.face];
  return texel.bary[0] * mesh.vertices[f[0]] + texel.bary[1] * mesh.vertices[f[1]] +
         texel.bary[2] * mesh.vertices[f[2]];
}

TextureFlow init_flow_from_projection(const Mesh& mesh, const Camera& cam, const UVMapping& mapping) {
  std::vector<Vec3> points(mapping.size());
  for (std::size_t i = 0; i < mapping.size(); ++i) points[i] = surface_point(mesh, mapping.texels[i]);
  const Projection proj = project(points, cam);
  TextureFlow flow{Grid(mapping.height, mapping.width, 2)};
  for (std::size_t i = 0; i < mapping.size(); ++i) {
    flow.grid.data()[2 * i] = proj.points[i].x();
    flow.grid.data()[2 * i + 1] = proj.points[i].y();
  }
  flow.clamp();
  return flow;
}

Vec2 flow_at_uv(const TextureFlow& flow, const Vec2& uv) {
  const Vec2 idx = uv_index(uv, flow.height(), flow.width());
  double out[2];
  gather(flow.grid, bilinear_taps(idx.x(), idx.y(), flow.height(), flow.width()), out);
  return {out[0], out[1]};
}

void flow_at_uv_backward(const TextureFlow& flow, const Vec2& uv, const Vec2& g, Grid& g_flow) {
  const Vec2 idx = uv_index(uv, flow.height(), flow.width());
  const auto taps = bilinear_taps(idx.x(), idx.y(), flow.height(), flow.width());
  for (int k = 0; k < 4; ++k) {
    g_flow(taps.row[k], taps.col[k], 0) += taps.weight[k] * g.x();
    g_flow(taps.row[k], taps.col[k], 1) += taps.weight[k] * g.y();
  }
}

}  // namespace semrecon
