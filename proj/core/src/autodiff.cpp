#include "semrecon/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "semrecon/errors.hpp"
#include "semrecon/rng.hpp"

namespace semrecon {

ParamVector ParamVector::pack(std::span<const Vec3> offsets, std::span<const Camera> cameras,
                              const TextureFlow& flow) {
  if (cameras.empty()) throw ParameterError("ParamVector::pack: at least one camera is required");
  ParamLayout layout{static_cast<int>(offsets.size()), static_cast<int>(cameras.size()), flow.height(),
                     flow.width()};
  ParamVector p(layout);
  p.set_offsets(offsets);
  for (int k = 0; k < layout.num_cameras; ++k) p.set_camera(k, cameras[k]);
  p.set_flow(flow);
  return p;
}

std::vector<Vec3> ParamVector::offsets() const {
  std::vector<Vec3> out(layout_.num_vertices);
  for (int i = 0; i < layout_.num_vertices; ++i) {
    out[i] = Vec3(values_[3 * i], values_[3 * i + 1], values_[3 * i + 2]);
  }
  return out;
}

Camera ParamVector::camera(int k) const {
  if (k < 0 || k >= layout_.num_cameras) throw ParameterError("ParamVector: camera index out of range");
  return Camera::from_array(std::span<const double>(values_.data() + layout_.camera_begin(k), Camera::kNumParams));
}

std::vector<Camera> ParamVector::cameras() const {
  std::vector<Camera> out;
  for (int k = 0; k < layout_.num_cameras; ++k) out.push_back(camera(k));
  return out;
}

TextureFlow ParamVector::flow() const {
  TextureFlow f{Grid(layout_.flow_height, layout_.flow_width, 2)};
  std::copy(values_.begin() + layout_.flow_begin(), values_.end(), f.grid.data().begin());
  return f;
}

InstanceParams ParamVector::instance(int k) const { return {offsets(), camera(k), flow()}; }

void ParamVector::set_camera(int k, const Camera& cam) {
  if (k < 0 || k >= layout_.num_cameras) throw ParameterError("ParamVector: camera index out of range");
  const auto a = cam.to_array();
  std::copy(a.begin(), a.end(), values_.begin() + layout_.camera_begin(k));
}

void ParamVector::set_offsets(std::span<const Vec3> offsets) {
  if (static_cast<int>(offsets.size()) != layout_.num_vertices) {
    throw ParameterError("ParamVector: offsets length does not match the layout");
  }
  for (int i = 0; i < layout_.num_vertices; ++i) {
    for (int d = 0; d < 3; ++d) values_[3 * i + d] = offsets[i][d];
  }
}

void ParamVector::set_flow(const TextureFlow& flow) {
  if (flow.height() != layout_.flow_height || flow.width() != layout_.flow_width) {
    throw ParameterError("ParamVector: flow grid does not match the layout");
  }
  std::copy(flow.grid.data().begin(), flow.grid.data().end(), values_.begin() + layout_.flow_begin());
}

double InstanceObjective::value(const ParamVector& params) const { return evaluate(params).total; }

LossReport InstanceObjective::evaluate(const ParamVector& params, ParamVector* grad_out) const {
  if (!obs) throw ParameterError("InstanceObjective: no observation");
  const InstanceParams inst = params.instance(hypothesis);
  if (!grad_out) return total_loss(ctx, *obs, inst);
  ParamGradient g;
  const LossReport rep = total_loss(ctx, *obs, inst, &g);
  *grad_out = ParamVector(params.layout());
  grad_out->set_offsets(g.offsets);
  auto& v = grad_out->values();
  std::copy(g.camera.begin(), g.camera.end(), v.begin() + params.layout().camera_begin(hypothesis));
  std::copy(g.flow.data().begin(), g.flow.data().end(), v.begin() + params.layout().flow_begin());
  return rep;
}

ParamVector grad(const InstanceObjective& objective, const ParamVector& params) {
  ParamVector g;
  objective.evaluate(params, &g);
  return g;
}

double fd_check(const ScalarFunction& f, std::span<const double> x, std::span<const double> analytic,
                double step, std::span<const std::size_t> indices) {
  if (!(step > 0.0)) throw ParameterError("fd_check: step must be > 0");
  std::vector<double> probe(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t i : indices) {
    const double x0 = probe[i];
    probe[i] = x0 + step;
    const double fp = f(probe);
    probe[i] = x0 - step;
    const double fm = f(probe);
    probe[i] = x0;
    const double g_fd = (fp - fm) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(g_fd), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - g_fd) / denom);
  }
  return worst;
}

double fd_check(const InstanceObjective& objective, const ParamVector& params, double step,
                std::span<const std::size_t> indices) {
  const ParamVector g = grad(objective, params);
  ParamVector probe = params;
  auto f = [&](std::span<const double> x) {
    std::copy(x.begin(), x.end(), probe.values().begin());
    return objective.value(probe);
  };
  return fd_check(f, params.values(), g.values(), step, indices);
}

const std::vector<std::string>& loss_term_names() {
  static const std::vector<std::string> names = {"iou", "img", "sp", "sv", "tcyc", "lap", "edge"};
  return names;
}

InstanceObjective single_term(const InstanceObjective& objective, const std::string& term) {
  InstanceObjective out = objective;
  LossWeights w{0, 0, 0, 0, 0, 0, 0};
  const LossWeights& src = objective.ctx.weights;
  if (term == "iou") w.iou = src.iou;
  else if (term == "img") w.img = src.img;
  else if (term == "sp") w.sp = src.sp;
  else if (term == "sv") w.sv = src.sv;
  else if (term == "tcyc") w.tcyc = src.tcyc;
  else if (term == "lap") w.lap = src.lap;
  else if (term == "edge") w.edge = src.edge;
  else throw ParameterError("single_term: unknown term '" + term + "'");
  out.ctx.weights = w;
  return out;
}

std::map<std::string, double> gradcheck_terms(const InstanceObjective& objective, const ParamVector& params,
                                              double step, std::size_t samples_per_segment, std::uint64_t seed) {
  const ParamLayout& layout = params.layout();
  struct Segment {
    const char* name;
    std::size_t begin, end;
  };
  const Segment segments[] = {
      {"offsets", layout.offsets_begin(), layout.cameras_begin()},
      {"camera", layout.camera_begin(objective.hypothesis), layout.camera_begin(objective.hypothesis + 1)},
      {"flow", layout.flow_begin(), layout.size()},
  };
  std::map<std::string, double> table;
  for (const auto& term : loss_term_names()) {
    const InstanceObjective single = single_term(objective, term);
    const ParamVector g = grad(single, params);
    Rng rng(seed);
    for (const auto& seg : segments) {
      // Coordinates with a non-zero analytic gradient first, then random fill.
      std::vector<std::size_t> active, idle;
      for (std::size_t i = seg.begin; i < seg.end; ++i) (g.values()[i] != 0.0 ? active : idle).push_back(i);
      std::vector<std::size_t> picked;
      auto take = [&](std::vector<std::size_t>& pool, std::size_t n) {
        for (std::size_t k = 0; k < n && !pool.empty(); ++k) {
          const std::size_t j = rng.below(pool.size());
          picked.push_back(pool[j]);
          pool[j] = pool.back();
          pool.pop_back();
        }
      };
      take(active, samples_per_segment);
      take(idle, samples_per_segment > picked.size() ? std::min<std::size_t>(4, samples_per_segment - picked.size()) : 0);
      ParamVector probe = params;
      auto f = [&](std::span<const double> x) {
        std::copy(x.begin(), x.end(), probe.values().begin());
        return single.value(probe);
      };
      table[term + "/" + seg.name] = fd_check(f, params.values(), g.values(), step, picked);
    }
  }
  return table;
}

}  // namespace semrecon
