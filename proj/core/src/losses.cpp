#include "semrecon/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "semrecon/errors.hpp"
#include "semrecon/rng.hpp"
#include "semrecon/sampling.hpp"

namespace semrecon {

void LossWeights::validate() const {
  for (double w : {iou, img, sp, sv, tcyc, lap, edge}) {
    if (!std::isfinite(w) || w < 0.0) throw ParameterError("LossWeights: weights must be finite and >= 0");
  }
}

double LossReport::weighted_sum(const LossWeights& w) const {
  return w.iou * iou + w.img * img + w.sp * sp + w.sv * sv + w.tcyc * tcyc + w.lap * lap + w.edge * edge;
}

double neg_iou(const Grid& rendered, const Grid& gt, Grid* grad) {
  if (rendered.pixels() != gt.pixels()) throw ParameterError("neg_iou: dimension mismatch");
  const auto& r = rendered.data();
  const auto& g = gt.data();
  double inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    inter += r[i] * g[i];
    uni += r[i] + g[i] - r[i] * g[i];
  }
  if (grad) *grad = Grid(rendered.height(), rendered.width(), rendered.channels());
  if (uni <= 0.0) return 0.0;
  if (grad) {
    auto& out = grad->data();
    for (std::size_t i = 0; i < r.size(); ++i) {
      out[i] = -g[i] / uni + inter * (1.0 - g[i]) / (uni * uni);
    }
  }
  return -inter / uni;
}

double image_loss(const Grid& rendered, const Grid& target, const Grid& mask, Grid* grad,
                  std::array<double, 3>* per_scale) {
  if (!rendered.same_shape(target) || rendered.pixels() != mask.pixels()) {
    throw ParameterError("image_loss: rendered, target and mask must align");
  }
  const int H = rendered.height();
  const int W = rendered.width();
  const int C = rendered.channels();
  if (grad) *grad = Grid(H, W, C);
  if (per_scale) per_scale->fill(0.0);

  constexpr int kFactors[3] = {1, 2, 4};
  double total = 0.0;
  int used = 0;
  struct Pooled {
    int row, col;
    std::vector<double> diff;
  };
  std::vector<Pooled> fg;
  for (int s = 0; s < 3; ++s) {
    const int f = kFactors[s];
    const int h = H / f;
    const int w = W / f;
    const double inv_area = 1.0 / (f * f);
    fg.clear();
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        double m = 0.0;
        std::vector<double> diff(C, 0.0);
        for (int dr = 0; dr < f; ++dr) {
          for (int dc = 0; dc < f; ++dc) {
            const int rr = r * f + dr;
            const int cc = c * f + dc;
            m += mask(rr, cc);
            for (int ch = 0; ch < C; ++ch) diff[ch] += rendered(rr, cc, ch) - target(rr, cc, ch);
          }
        }
        if (m * inv_area < 0.5) continue;
        for (double& d : diff) d *= inv_area;
        fg.push_back({r, c, std::move(diff)});
      }
    }
    if (fg.empty()) continue;
    const double norm = 1.0 / (static_cast<double>(fg.size()) * C);
    double sum = 0.0;
    for (const auto& p : fg) {
      for (double d : p.diff) sum += d * d;
    }
    const double value = sum * norm;
    if (per_scale) (*per_scale)[s] = value;
    total += value;
    ++used;
    if (grad) {
      // Scaled by the final 1/used below.
      for (const auto& p : fg) {
        for (int dr = 0; dr < f; ++dr) {
          for (int dc = 0; dc < f; ++dc) {
            for (int ch = 0; ch < C; ++ch) {
              (*grad)(p.row * f + dr, p.col * f + dc, ch) += 2.0 * p.diff[ch] * norm * inv_area;
            }
          }
        }
      }
    }
  }
  if (used == 0) return 0.0;
  if (grad) {
    for (double& g : grad->data()) g /= used;
  }
  return total / used;
}

double semantic_prob_loss(const PartMap& parts, const Grid& rendered, Grid* grad) {
  const int np = parts.num_parts();
  if (rendered.channels() != np || rendered.pixels() != parts.probs.pixels()) {
    throw ParameterError("semantic_prob_loss: rendered map does not match the part channels");
  }
  if (grad) *grad = Grid(rendered.height(), rendered.width(), np);
  const double norm = 1.0 / static_cast<double>(rendered.size());
  double sum = 0.0;
  for (int r = 0; r < rendered.height(); ++r) {
    for (int c = 0; c < rendered.width(); ++c) {
      for (int p = 0; p < np; ++p) {
        const double d = rendered(r, c, p) - parts.probs(r, c, p);
        sum += d * d;
        if (grad) (*grad)(r, c, p) = 2.0 * d * norm;
      }
    }
  }
  return sum * norm;
}

double chamfer(std::span<const Vec2> x, std::span<const Vec2> y, std::span<Vec2> grad_x) {
  if (x.empty() || y.empty()) return 0.0;
  const double inv_x = 1.0 / static_cast<double>(x.size());
  const double inv_y = 1.0 / static_cast<double>(y.size());
  double forward = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      const double d = (x[i] - y[j]).squaredNorm();
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    forward += best;
    if (!grad_x.empty()) grad_x[i] += 2.0 * inv_x * (x[i] - y[arg]);
  }
  double backward = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = (x[i] - y[j]).squaredNorm();
      if (d < best) {
        best = d;
        arg = i;
      }
    }
    backward += best;
    if (!grad_x.empty()) grad_x[arg] += 2.0 * inv_y * (x[arg] - y[j]);
  }
  return forward * inv_x + backward * inv_y;
}

PartSamples sample_part_pixels(const PartMap& parts, int samples_per_part, std::uint64_t seed) {
  const int np = parts.num_parts();
  const int H = parts.probs.height();
  const int W = parts.probs.width();
  PartSamples out;
  out.points.resize(std::max(np, 0));
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const auto px = parts.probs.pixel(r, c);
      int best = 0;
      for (int k = 1; k < static_cast<int>(px.size()); ++k) {
        if (px[k] > px[best]) best = k;
      }
      if (best < np) out.points[best].push_back(pixel_center(r, c, H, W));
    }
  }
  Rng rng(seed);
  for (auto& pts : out.points) {
    const std::size_t keep = std::min<std::size_t>(pts.size(), std::max(samples_per_part, 0));
    for (std::size_t i = 0; i < keep; ++i) {
      const std::size_t j = i + rng.below(pts.size() - i);
      std::swap(pts[i], pts[j]);
    }
    pts.resize(keep);
  }
  return out;
}

double semantic_vertex_loss(const Mesh& tmpl, std::span<const int> labels, const Camera& cam,
                            const PartSamples& samples, std::array<double, Camera::kNumParams>* g_cam,
                            std::span<Vec3> g_vertices) {
  if (labels.size() != tmpl.vertices.size()) {
    throw ParameterError("semantic_vertex_loss: labels length does not match the template");
  }
  const Projection proj = project(tmpl.vertices, cam);
  const bool want_grad = g_cam != nullptr || !g_vertices.empty();
  std::vector<Vec2> g_proj(want_grad ? proj.points.size() : 0, Vec2::Zero());
  double total = 0.0;
  const int np = static_cast<int>(samples.points.size());
  std::vector<Vec2> part_pts;
  std::vector<int> part_idx;
  std::vector<Vec2> part_grad;
  for (int p = 0; p < np; ++p) {
    if (samples.points[p].empty()) continue;
    part_pts.clear();
    part_idx.clear();
    for (std::size_t v = 0; v < labels.size(); ++v) {
      if (labels[v] == p) {
        part_pts.push_back(proj.points[v]);
        part_idx.push_back(static_cast<int>(v));
      }
    }
    if (part_pts.empty()) continue;
    const double inv = 1.0 / static_cast<double>(part_pts.size());
    part_grad.assign(want_grad ? part_pts.size() : 0, Vec2::Zero());
    total += inv * chamfer(part_pts, samples.points[p], part_grad);
    for (std::size_t k = 0; k < part_grad.size(); ++k) g_proj[part_idx[k]] += inv * part_grad[k];
  }
  if (want_grad) {
    std::array<double, Camera::kNumParams> gc{};
    project_backward(tmpl.vertices, cam, g_proj, {}, g_vertices, gc);
    if (g_cam) {
      for (int k = 0; k < Camera::kNumParams; ++k) (*g_cam)[k] += gc[k];
    }
  }
  return total;
}

double semantic_vertex_loss(const Mesh& tmpl, std::span<const int> labels, const Camera& cam,
                            const PartMap& parts, int samples_per_part, std::uint64_t seed) {
  return semantic_vertex_loss(tmpl, labels, cam, sample_part_pixels(parts, samples_per_part, seed));
}

double texture_cycle_loss(const TextureFlow& flow, const UVMapping& mapping, const RasterOutput& raster,
                          Grid* g_flow, std::vector<double>* g_coverage, const TextureCycleOptions& opts) {
  if (flow.height() != mapping.height || flow.width() != mapping.width) {
    throw ParameterError("texture_cycle_loss: flow grid does not match the uv mapping");
  }
  const int nf = static_cast<int>(raster.face_offsets.size()) - 1;
  if (g_flow) *g_flow = Grid(flow.height(), flow.width(), 2);
  if (g_coverage) g_coverage->assign(raster.coverage.size(), 0.0);

  std::vector<Vec2> c_in(std::max(nf, 0), Vec2::Zero());
  std::vector<int> n_in(std::max(nf, 0), 0);
  for (int r = 0; r < mapping.height; ++r) {
    for (int c = 0; c < mapping.width; ++c) {
      const TexelMapping& t = mapping.at(r, c);
      if (t.face < 0 || t.face >= nf) continue;
      if (!t.covered && !opts.include_inherited_texels) continue;
      c_in[t.face] += flow.at(r, c);
      ++n_in[t.face];
    }
  }

  struct FaceTerm {
    int face;
    Vec2 diff;
    double mass;
    Vec2 c_out;
  };
  std::vector<FaceTerm> terms;
  for (int j = 0; j < nf; ++j) {
    if (n_in[j] == 0) continue;
    double mass = 0.0;
    Vec2 moment = Vec2::Zero();
    for (const auto& e : raster.face_row(j)) {
      mass += e.prob;
      moment += e.prob * pixel_center(e.pixel / raster.width, e.pixel % raster.width, raster.height, raster.width);
    }
    if (mass < opts.min_coverage) continue;
    const Vec2 c_out = moment / mass;
    terms.push_back({j, c_in[j] / n_in[j] - c_out, mass, c_out});
  }
  if (terms.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(terms.size());
  double loss = 0.0;
  for (const auto& t : terms) loss += t.diff.squaredNorm();

  if (g_flow || g_coverage) {
    std::vector<Vec2> g_in(std::max(nf, 0), Vec2::Zero());
    for (const auto& t : terms) {
      const Vec2 g = 2.0 * inv * t.diff;
      g_in[t.face] = g / n_in[t.face];
      if (g_coverage) {
        // d c_out / d W_m = (G_m - c_out) / mass
        for (std::size_t e = raster.face_offsets[t.face]; e < raster.face_offsets[t.face + 1]; ++e) {
          const int m = raster.coverage[e].pixel;
          const Vec2 gm = pixel_center(m / raster.width, m % raster.width, raster.height, raster.width);
          (*g_coverage)[e] = -g.dot(gm - t.c_out) / t.mass;
        }
      }
    }
    if (g_flow) {
      for (int r = 0; r < mapping.height; ++r) {
        for (int c = 0; c < mapping.width; ++c) {
          const TexelMapping& t = mapping.at(r, c);
          if (t.face < 0 || t.face >= nf) continue;
          if (!t.covered && !opts.include_inherited_texels) continue;
          (*g_flow)(r, c, 0) = g_in[t.face].x();
          (*g_flow)(r, c, 1) = g_in[t.face].y();
        }
      }
    }
  }
  return loss * inv;
}

namespace {

void check_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericalError(std::string("non-finite loss term: ") + term);
}

}  // namespace

LossReport total_loss(const ObjectiveContext& ctx, const Observation& obs, const InstanceParams& params,
                      ParamGradient* grad) {
  if (!ctx.tmpl || !ctx.mapping) throw ParameterError("total_loss: context needs a template and uv mapping");
  const Mesh& tmpl = *ctx.tmpl;
  const LossWeights& w = ctx.weights;
  if (params.offsets.size() != tmpl.vertices.size()) {
    throw ParameterError("total_loss: offsets length does not match the template");
  }
  const int H = ctx.raster.height;
  const int W = ctx.raster.width;

  Mesh mesh = tmpl;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) mesh.vertices[i] += params.offsets[i];

  if (grad) {
    grad->offsets.assign(mesh.vertices.size(), Vec3::Zero());
    grad->camera.fill(0.0);
    grad->flow = Grid(params.flow.height(), params.flow.width(), 2);
  }

  LossReport rep;
  const bool use_img = w.img > 0.0;
  const bool use_sp = w.sp > 0.0 && ctx.canonical != nullptr;
  const bool use_raster = w.iou > 0.0 || use_img || use_sp || w.tcyc > 0.0;

  if (use_raster) {
    const Projection proj = project(mesh.vertices, params.camera);

    // uv-indexed attributes: sampled image color [3] followed by canonical parts [N_p].
    const int c_rgb = use_img ? 3 : 0;
    const int c_parts = use_sp ? ctx.canonical->channels() : 0;
    const int channels = c_rgb + c_parts;
    const std::size_t n_uv = mesh.uvs.size();
    std::vector<Vec2> coords;
    AttributeTable table;
    table.channels = channels;
    table.index = mesh.face_uvs;
    table.values.assign(n_uv * channels, 0.0);
    if (use_img) {
      coords.resize(n_uv);
      for (std::size_t t = 0; t < n_uv; ++t) coords[t] = flow_at_uv(params.flow, mesh.uvs[t]);
      const auto colors = sample_image(obs.image, coords);
      for (std::size_t t = 0; t < n_uv; ++t) {
        for (int ch = 0; ch < 3; ++ch) table.values[t * channels + ch] = colors[t * 3 + ch];
      }
    }
    if (use_sp) {
      const AttributeTable parts = canonical_attributes(mesh, *ctx.canonical);
      for (std::size_t t = 0; t < n_uv; ++t) {
        for (int ch = 0; ch < c_parts; ++ch) {
          table.values[t * channels + c_rgb + ch] = parts.values[t * c_parts + ch];
        }
      }
    }

    RasterConfig cfg = ctx.raster;
    const RasterOutput rast = rasterize_projected(proj, mesh.faces, table, cfg);

    Grid g_sil(H, W, 1);
    Grid g_attr(H, W, channels);
    std::vector<double> g_cov;

    if (w.iou > 0.0) {
      Grid g;
      rep.iou = neg_iou(rast.silhouette, obs.mask, grad ? &g : nullptr);
      check_finite(rep.iou, "iou");
      if (grad) {
        for (std::size_t i = 0; i < g.size(); ++i) g_sil.data()[i] += w.iou * g.data()[i];
      }
    }
    if (use_img) {
      Grid rgb(H, W, 3);
      for (std::size_t m = 0; m < rgb.pixels(); ++m) {
        for (int ch = 0; ch < 3; ++ch) rgb.data()[m * 3 + ch] = rast.attributes.data()[m * channels + ch];
      }
      Grid g;
      rep.img = image_loss(rgb, obs.image, obs.mask, grad ? &g : nullptr);
      check_finite(rep.img, "img");
      if (grad) {
        for (std::size_t m = 0; m < rgb.pixels(); ++m) {
          for (int ch = 0; ch < 3; ++ch) g_attr.data()[m * channels + ch] += w.img * g.data()[m * 3 + ch];
        }
      }
    }
    if (use_sp) {
      Grid rendered(H, W, c_parts);
      for (std::size_t m = 0; m < rendered.pixels(); ++m) {
        for (int ch = 0; ch < c_parts; ++ch) {
          rendered.data()[m * c_parts + ch] = rast.attributes.data()[m * channels + c_rgb + ch];
        }
      }
      Grid g;
      rep.sp = semantic_prob_loss(obs.parts, rendered, grad ? &g : nullptr);
      check_finite(rep.sp, "sp");
      if (grad) {
        for (std::size_t m = 0; m < rendered.pixels(); ++m) {
          for (int ch = 0; ch < c_parts; ++ch) {
            g_attr.data()[m * channels + c_rgb + ch] += w.sp * g.data()[m * c_parts + ch];
          }
        }
      }
    }
    if (w.tcyc > 0.0) {
      Grid g_flow;
      rep.tcyc = texture_cycle_loss(params.flow, *ctx.mapping, rast, grad ? &g_flow : nullptr,
                                    grad ? &g_cov : nullptr, ctx.tcyc);
      check_finite(rep.tcyc, "tcyc");
      if (grad) {
        for (std::size_t i = 0; i < g_flow.size(); ++i) grad->flow.data()[i] += w.tcyc * g_flow.data()[i];
        for (double& g : g_cov) g *= w.tcyc;
      }
    }

    if (grad) {
      const RasterGradient rg = rasterize_backward(proj, mesh.faces, table, cfg, rast, &g_sil,
                                                   channels > 0 ? &g_attr : nullptr, g_cov);
      project_backward(mesh.vertices, params.camera, rg.points, rg.depth, grad->offsets, grad->camera);
      if (use_img) {
        std::vector<double> g_colors(n_uv * 3);
        for (std::size_t t = 0; t < n_uv; ++t) {
          for (int ch = 0; ch < 3; ++ch) g_colors[t * 3 + ch] = rg.attributes[t * channels + ch];
        }
        const auto g_coords = sample_image_backward(obs.image, coords, g_colors);
        for (std::size_t t = 0; t < n_uv; ++t) {
          flow_at_uv_backward(params.flow, mesh.uvs[t], g_coords[t], grad->flow);
        }
      }
    }
  }

  if (w.sv > 0.0 && !ctx.labels.empty()) {
    std::array<double, Camera::kNumParams> gc{};
    rep.sv = semantic_vertex_loss(tmpl, ctx.labels, params.camera, ctx.part_samples, grad ? &gc : nullptr);
    check_finite(rep.sv, "sv");
    if (grad) {
      for (int k = 0; k < Camera::kNumParams; ++k) grad->camera[k] += w.sv * gc[k];
    }
  }
  if (w.lap > 0.0) {
    std::vector<Vec3> g(grad ? mesh.vertices.size() : 0, Vec3::Zero());
    rep.lap = laplacian_energy(mesh, g);
    check_finite(rep.lap, "lap");
    for (std::size_t i = 0; i < g.size(); ++i) grad->offsets[i] += w.lap * g[i];
  }
  if (w.edge > 0.0) {
    std::vector<Vec3> g(grad ? mesh.vertices.size() : 0, Vec3::Zero());
    rep.edge = edge_regularizer(mesh, g);
    check_finite(rep.edge, "edge");
    for (std::size_t i = 0; i < g.size(); ++i) grad->offsets[i] += w.edge * g[i];
  }
  rep.total = rep.weighted_sum(w);
  check_finite(rep.total, "total");
  return rep;
}

}  // namespace semrecon
