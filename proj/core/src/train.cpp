#include "semrecon/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "semrecon/errors.hpp"

namespace semrecon {

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::uint64_t x = a ^ (b * 0x9E3779B97F4A7C15ULL) ^ (c * 0xC2B2AE3D27D4EB4FULL);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::string log_line(int round, const std::string& instance, int hypothesis, int step, const LossReport& r) {
  nlohmann::ordered_json j;
  j["round"] = round;
  j["instance"] = instance;
  j["hypothesis"] = hypothesis;
  j["step"] = step;
  j["iou"] = r.iou;
  j["img"] = r.img;
  j["sp"] = r.sp;
  j["sv"] = r.sv;
  j["tcyc"] = r.tcyc;
  j["lap"] = r.lap;
  j["edge"] = r.edge;
  j["total"] = r.total;
  return j.dump();
}

// Keeps the packed parameters inside their valid domain after an update.
void project_params(ParamVector& p) {
  const ParamLayout& lay = p.layout();
  auto& v = p.values();
  for (int k = 0; k < lay.num_cameras; ++k) {
    Camera cam = normalize_rotation(p.camera(k));
    cam.scale = std::max(cam.scale, 1e-3);
    p.set_camera(k, cam);
  }
  for (std::size_t i = lay.flow_begin(); i < lay.size(); ++i) v[i] = std::clamp(v[i], -1.0, 1.0);
}

struct HypothesisResult {
  ParamVector params;
  LossReport report;
  double score = std::numeric_limits<double>::infinity();
  bool ok = false;
  std::vector<std::string> lines;
};

}  // namespace

void TrainConfig::validate() const {
  if (rounds < 1) throw ParameterError("train: rounds must be >= 1");
  if (e_epochs < 0) throw ParameterError("train: e_epochs must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ParameterError("train: lr must be positive");
  if (!(offsets_lr_scale >= 0.0) || !std::isfinite(offsets_lr_scale)) {
    throw ParameterError("train: offsets_lr_scale must be >= 0");
  }
  if (lr_halve_every < 1) throw ParameterError("train: lr_halve_every must be >= 1");
  if (k_select < 0) throw ParameterError("train: k_select must be >= 0");
  if (k_hyp < 1) throw ParameterError("train: k_hyp must be >= 1");
  if (samples_per_part < 1) throw ParameterError("train: samples_per_part must be >= 1");
  if (template_subdivisions < 0 || template_subdivisions > 6) {
    throw ParameterError("train: template_subdivisions must be in [0, 6]");
  }
  if (uv_size < 8) throw ParameterError("train: uv_size must be >= 8");
  if (!(init_scale > 0.0)) throw ParameterError("train: init_scale must be positive");
  if (threads < 1) throw ParameterError("train: threads must be >= 1");
  weights.validate();
}

int TrainConfig::select_count(int n) const {
  const int k = k_select > 0 ? k_select : std::max(3, static_cast<int>(std::ceil(0.2 * n)));
  return std::min(k, n);
}

double TrainConfig::learning_rate(int epoch) const { return lr * std::pow(0.5, epoch / lr_halve_every); }

void Adam::step(std::span<double> x, std::span<const double> g, double lr) {
  const std::vector<double> rates(x.size(), lr);
  step(x, g, rates);
}

void Adam::step(std::span<double> x, std::span<const double> g, std::span<const double> lr) {
  if (x.size() != m_.size() || g.size() != m_.size() || lr.size() != m_.size()) {
    throw ParameterError("Adam: size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < x.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g[i] * g[i];
    x[i] -= lr[i] * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& task) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

CategoryState initial_state(const TrainConfig& cfg) {
  CategoryState s;
  s.tmpl = make_sphere(cfg.template_subdivisions);
  s.mapping = build_uv_mapping(s.tmpl, cfg.uv_size, cfg.uv_size);
  return s;
}

Mesh instance_mesh(const Instance& inst, const CategoryState& state) {
  return apply_deformation(state.tmpl, {inst.params.offsets()});
}

Instance make_instance(std::string name, Observation obs, const CategoryState& state, const TrainConfig& cfg) {
  const int h = obs.image.height(), w = obs.image.width();
  if (obs.mask.height() != h || obs.mask.width() != w || obs.parts.probs.height() != h ||
      obs.parts.probs.width() != w) {
    throw ParameterError("instance " + name + ": image, mask and parts sizes differ");
  }
  Instance inst;
  inst.name = std::move(name);
  inst.obs = std::move(obs);
  Camera cam;
  cam.scale = cfg.init_scale;
  const std::vector<Vec3> offsets(state.tmpl.vertices.size(), Vec3::Zero());
  const TextureFlow flow = init_flow_from_projection(state.tmpl, cam, state.mapping);
  inst.params = ParamVector::pack(offsets, std::vector<Camera>{cam}, flow);
  inst.hypotheses.cameras = {cam};
  inst.hypotheses.scores = {std::numeric_limits<double>::infinity()};
  return inst;
}

ObjectiveContext make_context(const CategoryState& state, const TrainConfig& cfg, const RasterConfig& raster,
                              int round) {
  ObjectiveContext ctx;
  ctx.tmpl = &state.tmpl;
  ctx.mapping = &state.mapping;
  ctx.raster = raster;
  ctx.weights = cfg.weights;
  ctx.tcyc = cfg.tcyc;
  if (round <= 1 || !state.canonical) {
    ctx.weights.sp = 0.0;
    ctx.weights.sv = 0.0;
  } else {
    ctx.canonical = &state.canonical->probs;
    ctx.labels = state.labels;
  }
  return ctx;
}

PartSamples instance_part_samples(const Instance& inst, const TrainConfig& cfg, std::size_t index) {
  return sample_part_pixels(inst.obs.parts, cfg.samples_per_part, mix_seed(cfg.seed, index, 0x5A17));
}

void e_step(std::vector<Instance>& instances, const CategoryState& state, const TrainConfig& cfg,
            const RasterConfig& raster, std::vector<std::string>* log) {
  cfg.validate();
  raster.validate();
  if (cfg.e_epochs == 0) return;
  const int round = state.round + 1;
  const int num_hyp = round == 1 ? 1 : cfg.k_hyp;
  const ObjectiveContext base = make_context(state, cfg, raster, round);

  struct Task {
    std::size_t instance;
    int hypothesis;
  };
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].failed) continue;
    for (int k = 0; k < num_hyp; ++k) tasks.push_back({i, k});
  }
  std::vector<HypothesisResult> results(tasks.size());

  parallel_for(tasks.size(), cfg.threads, [&](std::size_t t) {
    const Instance& inst = instances[tasks[t].instance];
    const int k = tasks[t].hypothesis;
    HypothesisResult& res = results[t];

    const Camera prev = inst.params.camera(0);
    Camera cam = prev;
    if (num_hyp > 1) {
      const CameraHypotheses h = init_hypotheses(num_hyp, mix_seed(cfg.seed, tasks[t].instance, round));
      cam.quat = quat_multiply(h.cameras[k].quat, prev.quat);
    }
    std::vector<Vec3> offsets = inst.params.offsets();
    if (round == 2 && cfg.reset_offsets) std::fill(offsets.begin(), offsets.end(), Vec3::Zero());
    TextureFlow flow = inst.params.flow();
    if (round == 2 && cfg.reinit_flow) {
      flow = init_flow_from_projection(apply_deformation(state.tmpl, {offsets}), cam, state.mapping);
    }
    ParamVector p = ParamVector::pack(offsets, std::vector<Camera>{cam}, flow);
    project_params(p);

    InstanceObjective obj;
    obj.ctx = base;
    obj.ctx.part_samples = instance_part_samples(inst, cfg, tasks[t].instance);
    obj.obs = &inst.obs;

    try {
      Adam adam(p.size());
      ParamVector g;
      std::vector<double> rates(p.size());
      const std::size_t n_off = p.layout().cameras_begin();
      for (int e = 0; e < cfg.e_epochs; ++e) {
        const LossReport rep = obj.evaluate(p, &g);
        if (log) res.lines.push_back(log_line(round, inst.name, k, e, rep));
        const double lr = cfg.learning_rate(e);
        std::fill(rates.begin(), rates.begin() + n_off, lr * cfg.offsets_lr_scale);
        std::fill(rates.begin() + n_off, rates.end(), lr);
        adam.step(p.values(), g.values(), rates);
        project_params(p);
      }
      res.report = obj.evaluate(p);
      res.score = res.report.total;
      res.params = std::move(p);
      res.ok = true;
    } catch (const NumericalError&) {
      res.ok = false;
    }
  });

  std::size_t t = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    Instance& inst = instances[i];
    if (inst.failed) continue;
    CameraHypotheses hyps;
    int best = -1;
    for (int k = 0; k < num_hyp; ++k, ++t) {
      HypothesisResult& res = results[t];
      if (log) log->insert(log->end(), res.lines.begin(), res.lines.end());
      hyps.cameras.push_back(res.ok ? res.params.camera(0) : inst.params.camera(0));
      hyps.scores.push_back(res.ok ? res.score : std::numeric_limits<double>::infinity());
      if (res.ok && (best < 0 || res.score < results[t - k + best].score)) best = k;
    }
    if (best < 0) {
      inst.failed = true;
      continue;
    }
    HypothesisResult& chosen = results[t - num_hyp + best];
    inst.params = std::move(chosen.params);
    inst.report = chosen.report;
    inst.hypotheses = std::move(hyps);
  }
}

std::vector<int> rank_shape_subset(std::span<const Grid> rendered, std::span<const Grid> masks, int k) {
  if (rendered.size() != masks.size()) throw ParameterError("rank_shape_subset: size mismatch");
  const int n = static_cast<int>(rendered.size());
  if (n == 0 || k < 1) return {};
  int exemplar = 0;
  double best = -1.0;
  for (int i = 0; i < n; ++i) {
    const double iou = mask_iou(rendered[i], masks[i]);
    if (iou > best) {
      best = iou;
      exemplar = i;
    }
  }
  std::vector<double> sim(n);
  for (int i = 0; i < n; ++i) sim[i] = mask_iou(rendered[i], rendered[exemplar]);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (a == exemplar || b == exemplar) return a == exemplar && b != exemplar;
    return sim[a] > sim[b];
  });
  order.resize(std::min(k, n));
  return order;
}

std::vector<int> rank_uv_subset(std::span<const double> image_losses, std::span<const Grid> uv_maps, int k) {
  if (image_losses.size() != uv_maps.size()) throw ParameterError("rank_uv_subset: size mismatch");
  const int n = static_cast<int>(uv_maps.size());
  if (n == 0 || k < 1) return {};
  const int exemplar = static_cast<int>(std::min_element(image_losses.begin(), image_losses.end()) - image_losses.begin());
  std::vector<double> dist(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (!uv_maps[i].same_shape(uv_maps[exemplar])) throw ParameterError("rank_uv_subset: uv maps differ in shape");
    double s = 0.0;
    for (std::size_t j = 0; j < uv_maps[i].size(); ++j) {
      const double d = uv_maps[i].data()[j] - uv_maps[exemplar].data()[j];
      s += d * d;
    }
    dist[i] = std::sqrt(s);
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (a == exemplar || b == exemplar) return a == exemplar && b != exemplar;
    return dist[a] < dist[b];
  });
  order.resize(std::min(k, n));
  return order;
}

namespace {

std::vector<int> usable(const std::vector<Instance>& instances) {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(instances.size()); ++i) {
    if (!instances[i].failed) idx.push_back(i);
  }
  return idx;
}

}  // namespace

std::vector<int> select_shape_subset(const std::vector<Instance>& instances, const CategoryState& state,
                                     const RasterConfig& raster, int k) {
  const std::vector<int> idx = usable(instances);
  std::vector<Grid> rendered, masks;
  for (int i : idx) {
    rendered.push_back(render_silhouette(instance_mesh(instances[i], state), instances[i].params.camera(0), raster));
    masks.push_back(instances[i].obs.mask);
  }
  std::vector<int> out;
  for (int r : rank_shape_subset(rendered, masks, k)) out.push_back(idx[r]);
  return out;
}

std::vector<int> select_uv_subset(const std::vector<Instance>& instances, const CategoryState& state,
                                  const RasterConfig& raster, int k) {
  const std::vector<int> idx = usable(instances);
  ObjectiveContext ctx;
  ctx.tmpl = &state.tmpl;
  ctx.mapping = &state.mapping;
  ctx.raster = raster;
  ctx.weights = {0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  std::vector<double> losses;
  std::vector<Grid> maps;
  for (int i : idx) {
    const Instance& inst = instances[i];
    losses.push_back(total_loss(ctx, inst.obs, inst.params.instance(0)).img);
    maps.push_back(semantic_uv(inst.params.flow(), inst.obs.parts));
  }
  std::vector<int> out;
  for (int r : rank_uv_subset(losses, maps, k)) out.push_back(idx[r]);
  return out;
}

MStepResult m_step(std::vector<Instance>& instances, CategoryState& state, const TrainConfig& cfg,
                   const RasterConfig& raster) {
  MStepResult res;
  const int n = static_cast<int>(usable(instances).size());
  const int k = cfg.select_count(n);
  res.shape_subset = select_shape_subset(instances, state, raster, k);
  res.uv_subset = select_uv_subset(instances, state, raster, k);
  if (res.shape_subset.empty() || res.uv_subset.empty()) return res;

  std::vector<Vec3> mean(state.tmpl.vertices.size(), Vec3::Zero());
  for (int i : res.shape_subset) {
    const std::vector<Vec3> off = instances[i].params.offsets();
    for (std::size_t v = 0; v < mean.size(); ++v) mean[v] += off[v];
  }
  for (Vec3& m : mean) m /= static_cast<double>(res.shape_subset.size());
  for (std::size_t v = 0; v < mean.size(); ++v) state.tmpl.vertices[v] += mean[v];
  for (Instance& inst : instances) {
    std::vector<Vec3> off = inst.params.offsets();
    for (std::size_t v = 0; v < off.size(); ++v) off[v] -= mean[v];
    inst.params.set_offsets(off);
  }

  std::vector<Grid> maps;
  for (int i : res.uv_subset) maps.push_back(semantic_uv(instances[i].params.flow(), instances[i].obs.parts));
  state.canonical = aggregate_canonical(maps);
  state.labels = vertex_part_labels(state.tmpl, state.canonical->probs);
  ++state.round;
  return res;
}

std::vector<PseudoLabel> pseudo_labels(const std::vector<Instance>& instances, const CategoryState& state,
                                       const TrainConfig& cfg, const RasterConfig& raster, double threshold) {
  if (!state.canonical) throw ParameterError("pseudo_labels: no canonical semantic uv map yet");
  ObjectiveContext base = make_context(state, cfg, raster, 2);
  base.weights = {0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0};
  std::vector<PseudoLabel> out(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const Instance& inst = instances[i];
    PseudoLabel& pl = out[i];
    if (inst.failed) continue;
    ObjectiveContext ctx = base;
    ctx.part_samples = instance_part_samples(inst, cfg, i);
    const LossReport rep = total_loss(ctx, inst.obs, inst.params.instance(0));
    pl.score = rep.sp + rep.sv;
    pl.selected = pl.score < threshold;
    if (!pl.selected) continue;
    const Mesh mesh = instance_mesh(inst, state);
    const Camera cam = inst.params.camera(0);
    const Grid probs = render_part_probs(mesh, cam, state.canonical->probs, state.mapping, raster);
    const Grid sil = render_silhouette(mesh, cam, raster);
    const int np = probs.channels();
    pl.labels = Grid(raster.height, raster.width, 1);
    for (std::size_t m = 0; m < pl.labels.pixels(); ++m) {
      int best = 0;
      for (int p = 1; p < np; ++p) {
        if (probs.data()[m * np + p] > probs.data()[m * np + best]) best = p;
      }
      pl.labels.data()[m] = sil.data()[m] < 0.5 ? np : best;
    }
  }
  return out;
}

void fit(std::vector<Instance>& instances, CategoryState& state, const TrainConfig& cfg, const RasterConfig& raster,
         const RoundCallback& on_round) {
  cfg.validate();
  for (int r = 0; r < cfg.rounds; ++r) {
    std::vector<std::string> log;
    e_step(instances, state, cfg, raster, &log);
    m_step(instances, state, cfg, raster);
    if (on_round) on_round(state, instances, log);
  }
}

}  // namespace semrecon
