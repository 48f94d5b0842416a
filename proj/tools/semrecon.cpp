#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "semrecon/checkpoint.hpp"
#include "semrecon/config.hpp"
#include "semrecon/errors.hpp"
#include "semrecon/eval.hpp"
#include "semrecon/io.hpp"
#include "semrecon/scene.hpp"
#include "semrecon/synth.hpp"
#include "semrecon/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace semrecon;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> instances;
  std::optional<int> rounds;
  std::optional<int> threads;
  std::string data;
  std::string checkpoint;
  std::string params;
  std::optional<double> threshold;
  std::string parts_out;
};

void print_error(const char* kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

RunConfig resolve(const Options& o) {
  RunConfig c = o.config.empty() ? parse_config(json::object()) : load_config(o.config);
  if (o.seed) c.train.seed = *o.seed;
  if (o.rounds) c.train.rounds = *o.rounds;
  if (o.threads) c.train.threads = *o.threads;
  if (!o.data.empty()) c.data = o.data;
  if (!o.checkpoint.empty()) c.checkpoint = o.checkpoint;
  if (o.threshold) c.pseudo_threshold = *o.threshold;
  c.train.validate();
  return c;
}

fs::path require_out(const Options& o) {
  if (o.out.empty()) throw ParameterError("--out is required");
  return o.out;
}

// Directory outputs get config.json inside; file outputs get <file>.config.json.
void write_resolved(const fs::path& out, bool is_dir, const RunConfig& c) {
  if (is_dir) {
    fs::create_directories(out);
    write_json(out / "config.json", to_json(c));
  } else {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_json(fs::path(out.string() + ".config.json"), to_json(c));
  }
}

// Loads the scenes and sizes the raster to their images.
std::vector<SceneBundle> load_data(RunConfig& c, const Options& o) {
  if (c.data.empty()) throw ParameterError("no scene directory: pass --data or set paths.data");
  std::vector<SceneBundle> scenes = load_scenes(c.data);
  if (scenes.empty()) throw ParameterError("no scenes found in " + c.data);
  if (o.instances) {
    if (*o.instances < 1) throw ParameterError("--instances must be >= 1");
    if (static_cast<std::size_t>(*o.instances) < scenes.size()) scenes.resize(*o.instances);
  }
  c.raster.height = scenes.front().obs.image.height();
  c.raster.width = scenes.front().obs.image.width();
  for (const SceneBundle& s : scenes) {
    if (s.obs.image.height() != c.raster.height || s.obs.image.width() != c.raster.width) {
      throw ParameterError("scene " + s.name + ": every scene must have the same image size");
    }
  }
  c.raster.validate();
  return scenes;
}

std::vector<Instance> make_instances(std::vector<SceneBundle>& scenes, const CategoryState& state,
                                     const RunConfig& c) {
  std::vector<Instance> instances;
  for (SceneBundle& s : scenes) {
    Instance inst = make_instance(s.name, std::move(s.obs), state, c.train);
    inst.keypoints = s.keypoints;
    instances.push_back(std::move(inst));
  }
  return instances;
}

struct Loaded {
  Checkpoint ckpt;
  std::vector<Instance> instances;
};

Loaded load_fitted(RunConfig& c, const Options& o) {
  if (c.checkpoint.empty()) throw ParameterError("no checkpoint: pass --checkpoint or set paths.checkpoint");
  Loaded l;
  l.ckpt = load_checkpoint(c.checkpoint);
  std::vector<SceneBundle> scenes = load_data(c, o);
  l.instances = make_instances(scenes, l.ckpt.state, c);
  restore_instances(l.instances, l.ckpt);
  return l;
}

double instance_iou(const Instance& inst, const CategoryState& state, const RasterConfig& raster) {
  return mask_iou(render_silhouette(instance_mesh(inst, state), inst.params.camera(0), raster), inst.obs.mask);
}

json round_summary(int round, const std::vector<Instance>& instances, const CategoryState& state,
                   const RasterConfig& raster) {
  double sum = 0.0;
  int n = 0, failed = 0;
  for (const Instance& inst : instances) {
    if (inst.failed) {
      ++failed;
      continue;
    }
    sum += instance_iou(inst, state, raster);
    ++n;
  }
  return {{"round", round}, {"mean_iou", n ? sum / n : 0.0}, {"fitted", n}, {"failed", failed}};
}

int cmd_synth(const Options& o) {
  RunConfig c = resolve(o);
  const fs::path out = require_out(o);
  const int n = o.instances.value_or(8);
  const std::vector<SceneBundle> scenes = synth(n, c.train.seed, c.synth);
  write_resolved(out, true, c);
  for (const SceneBundle& s : scenes) save_scene(out / s.name, s);
  std::cout << json{{"scenes", n}, {"out", out.string()}}.dump() << std::endl;
  return 0;
}

int cmd_fit(const Options& o) {
  RunConfig c = resolve(o);
  const fs::path out = require_out(o);
  std::vector<SceneBundle> scenes = load_data(c, o);
  write_resolved(out, true, c);

  CategoryState state;
  std::vector<Instance> instances;
  if (!c.checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(c.checkpoint);
    state = ck.state;
    instances = make_instances(scenes, state, c);
    restore_instances(instances, ck);
  } else {
    state = initial_state(c.train);
    instances = make_instances(scenes, state, c);
  }
  while (state.round < c.train.rounds) {
    std::vector<std::string> log;
    e_step(instances, state, c.train, c.raster, &log);
    m_step(instances, state, c.train, c.raster);
    save_checkpoint(out / ("round" + std::to_string(state.round)), state, instances, log);
    std::cout << round_summary(state.round, instances, state, c.raster).dump() << std::endl;
  }
  return 0;
}

int cmd_template_update(const Options& o) {
  RunConfig c = resolve(o);
  const fs::path out = require_out(o);
  Loaded l = load_fitted(c, o);
  const int round = l.ckpt.state.round;
  const MStepResult res = m_step(l.instances, l.ckpt.state, c.train, c.raster);
  if (l.ckpt.state.round == round) throw ParameterError("template-update: no usable instances");
  write_resolved(out, true, c);
  save_checkpoint(out, l.ckpt.state, l.instances, {});
  std::cout << json{{"round", l.ckpt.state.round}, {"shape_subset", res.shape_subset}, {"uv_subset", res.uv_subset}}
                   .dump()
            << std::endl;
  return 0;
}

int cmd_canonical_uv(const Options& o) {
  RunConfig c = resolve(o);
  const fs::path out = require_out(o);
  Loaded l = load_fitted(c, o);
  int usable = 0;
  for (const Instance& inst : l.instances) usable += inst.failed ? 0 : 1;
  const std::vector<int> subset =
      select_uv_subset(l.instances, l.ckpt.state, c.raster, c.train.select_count(usable));
  if (subset.empty()) throw ParameterError("canonical-uv: no usable instances");
  std::vector<Grid> maps;
  for (int i : subset) maps.push_back(semantic_uv(l.instances[i].params.flow(), l.instances[i].obs.parts));
  const CanonicalUV canonical = aggregate_canonical(maps);
  write_resolved(out, true, c);
  write_tnsr(out / "canonical.tnsr", to_tensor(canonical.probs));
  write_png(out / "canonical.png", part_preview(canonical.probs));
  std::cout << json{{"uv_subset", subset}, {"sample_count", canonical.sample_count}}.dump() << std::endl;
  return 0;
}

int cmd_render(const Options& o) {
  RunConfig c = resolve(o);
  const fs::path out = require_out(o);
  if (o.params.empty()) throw ParameterError("--params is required");
  const json p = read_json(o.params);
  Mesh mesh;
  Camera cam;
  std::optional<Grid> canonical;
  UVMapping mapping;
  if (p.contains("subdivisions") && p.contains("face_parts")) {
    const SceneTruth truth = truth_from_json(p);
    mesh = truth.mesh();
    cam = truth.camera;
    mapping = build_uv_mapping(mesh, c.synth.uv_size, c.synth.uv_size);
    canonical = canonical_from_face_parts(mapping, truth.face_parts, truth.num_parts);
  } else {
    if (c.checkpoint.empty()) throw ParameterError("render: instance parameters need --checkpoint for the template");
    const Checkpoint ck = load_checkpoint(c.checkpoint);
    const InstanceRecord rec = instance_record_from_json(p);
    if (rec.params.layout().num_vertices != ck.state.tmpl.num_vertices()) {
      throw ParameterError("render: parameters do not match the checkpoint template");
    }
    mesh = apply_deformation(ck.state.tmpl, {rec.params.offsets()});
    cam = rec.params.camera(0);
    if (ck.state.canonical) canonical = ck.state.canonical->probs;
    mapping = ck.state.mapping;
  }
  cam = normalize_rotation(cam);
  write_resolved(out, false, c);
  write_png(out, render_silhouette(mesh, cam, c.raster));
  if (!o.parts_out.empty()) {
    if (!canonical) throw ParameterError("render: --parts-out needs a checkpoint with a canonical map");
    write_png(o.parts_out, part_preview(render_part_probs(mesh, cam, *canonical, mapping, c.raster), 0.5));
  }
  return 0;
}

int cmd_gradcheck(const Options& o) {
  RunConfig c = resolve(o);
  RasterConfig raster = c.raster;
  if (o.config.empty()) {
    raster.height = raster.width = 16;
    raster.sigma = 1e-2;
    raster.gamma = 1e-2;
  }
  const double threshold = o.threshold.value_or(1e-3);
  const std::uint64_t seed = o.seed.value_or(0);
  if (o.out.empty()) {
    std::cout << "config: " << to_json(c).dump() << '\n';
  } else {
    write_resolved(o.out, true, c);
  }
  const auto scene = make_gradcheck_scene(seed, raster);
  const auto errors = gradcheck_terms(scene->objective, scene->params, 1e-6, 48, seed);

  double worst = 0.0;
  std::printf("%-8s %12s %12s %12s\n", "term", "offsets", "camera", "flow");
  for (const std::string& term : loss_term_names()) {
    std::printf("%-8s", term.c_str());
    for (const char* seg : {"offsets", "camera", "flow"}) {
      const auto it = errors.find(term + "/" + seg);
      const double e = it == errors.end() ? 0.0 : it->second;
      worst = std::max(worst, e);
      std::printf(" %12.3e", e);
    }
    std::printf("\n");
  }
  json result = {{"seed", seed}, {"max_error", worst}, {"threshold", threshold}, {"pass", worst < threshold}};
  if (!o.out.empty()) write_json(fs::path(o.out) / "gradcheck.json", result);
  std::cout << result.dump() << std::endl;
  if (worst >= threshold) {
    print_error("check", "gradient error " + std::to_string(worst) + " exceeds " + std::to_string(threshold));
    return kExitCheckFailed;
  }
  return 0;
}

json eval_summary(RunConfig& c, const Options& o, bool keypoints) {
  Loaded l = load_fitted(c, o);
  const CategoryState& state = l.ckpt.state;
  double iou = 0.0;
  int n = 0;
  for (const Instance& inst : l.instances) {
    if (inst.failed) continue;
    iou += instance_iou(inst, state, c.raster);
    ++n;
  }
  json summary = {{"pck_flow", nullptr}, {"pck_camera", nullptr}, {"mean_iou", n ? iou / n : 0.0}, {"n_pairs", 0}};
  if (!keypoints) return summary;

  std::vector<TextureFlow> flows;
  for (const Instance& inst : l.instances) flows.push_back(inst.params.flow());
  PckResult flow_pck, cam_pck;
  int pairs = 0;
  const int h = c.raster.height, w = c.raster.width;
  for (std::size_t i = 0; i < l.instances.size(); ++i) {
    for (std::size_t j = 0; j < l.instances.size(); ++j) {
      const Instance& a = l.instances[i];
      const Instance& b = l.instances[j];
      if (i == j || a.failed || b.failed || !a.keypoints || !b.keypoints) continue;
      const FittedView src{&flows[i], a.params.camera(0), &*a.keypoints};
      const FittedView tgt{&flows[j], b.params.camera(0), &*b.keypoints};
      flow_pck += kt_flow(src, tgt, state.mapping, c.pck_alpha, h, w);
      cam_pck += kt_camera(src, tgt, state.tmpl, c.pck_alpha, h, w);
      ++pairs;
    }
  }
  if (pairs == 0) throw ParameterError("eval-kt: no instance pairs with keypoints");
  summary["pck_flow"] = flow_pck.percent();
  summary["pck_camera"] = cam_pck.percent();
  summary["n_pairs"] = pairs;
  return summary;
}

int cmd_eval(const Options& o, bool keypoints) {
  RunConfig c = resolve(o);
  const json summary = eval_summary(c, o, keypoints);
  if (!o.out.empty()) {
    write_resolved(o.out, true, c);
    write_json(fs::path(o.out) / (keypoints ? "eval_kt.json" : "eval_iou.json"), summary);
  }
  std::cout << summary.dump() << std::endl;
  return 0;
}

int cmd_pseudo_labels(const Options& o) {
  RunConfig c = resolve(o);
  const fs::path out = require_out(o);
  Loaded l = load_fitted(c, o);
  const std::vector<PseudoLabel> labels =
      pseudo_labels(l.instances, l.ckpt.state, c.train, c.raster, c.pseudo_threshold);
  write_resolved(out, true, c);
  json entries = json::array();
  int selected = 0;
  const int np = l.ckpt.state.canonical->probs.channels();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const PseudoLabel& pl = labels[i];
    entries.push_back({{"name", l.instances[i].name}, {"score", pl.score}, {"selected", pl.selected}});
    if (!pl.selected) continue;
    ++selected;
    const fs::path dir = out / l.instances[i].name;
    fs::create_directories(dir);
    write_tnsr(dir / "labels.tnsr", to_tensor(pl.labels));
    Grid onehot(pl.labels.height(), pl.labels.width(), np);
    for (std::size_t m = 0; m < pl.labels.pixels(); ++m) {
      const int p = static_cast<int>(pl.labels.data()[m]);
      if (p < np) onehot.data()[m * np + p] = 1.0;
    }
    write_png(dir / "labels.png", part_preview(onehot, 0.5));
  }
  write_json(out / "pseudo_labels.json", {{"threshold", c.pseudo_threshold}, {"instances", entries}});
  if (selected == 0) std::cerr << "warning: no instance passed the threshold" << std::endl;
  std::cout << json{{"selected", selected}, {"total", labels.size()}}.dump() << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic-consistency mesh reconstruction"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "JSON configuration")->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "Output path");
    cmd->add_option("--seed", o.seed, "Random seed");
    cmd->add_option("--threads", o.threads, "Worker threads");
  };
  auto data = [&](CLI::App* cmd) {
    cmd->add_option("--data", o.data, "Directory of scene bundles");
    cmd->add_option("--instances", o.instances, "Use at most this many scenes");
  };
  auto fitted = [&](CLI::App* cmd) {
    data(cmd);
    cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint directory");
  };

  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate synthetic scene bundles");
  common(synth_cmd);
  synth_cmd->add_option("--instances", o.instances, "Number of scenes (default 8)");

  CLI::App* fit_cmd = app.add_subcommand("fit", "Run the EM fit and write one checkpoint per round");
  common(fit_cmd);
  fitted(fit_cmd);
  fit_cmd->add_option("--rounds", o.rounds, "Total number of rounds");

  CLI::App* tu_cmd = app.add_subcommand("template-update", "Apply one template and canonical-map update");
  common(tu_cmd);
  fitted(tu_cmd);

  CLI::App* cuv_cmd = app.add_subcommand("canonical-uv", "Aggregate the canonical semantic uv map");
  common(cuv_cmd);
  fitted(cuv_cmd);

  CLI::App* render_cmd = app.add_subcommand("render", "Render a silhouette from truth or instance parameters");
  common(render_cmd);
  render_cmd->add_option("--params", o.params, "truth.json or params.json");
  render_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint holding the template");
  render_cmd->add_option("--parts-out", o.parts_out, "Also write a part preview PNG");

  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "Compare every loss gradient with finite differences");
  common(gc_cmd);
  gc_cmd->add_option("--threshold", o.threshold, "Largest accepted relative error (default 1e-3)");

  CLI::App* kt_cmd = app.add_subcommand("eval-kt", "Keypoint transfer and mask IoU");
  common(kt_cmd);
  fitted(kt_cmd);

  CLI::App* iou_cmd = app.add_subcommand("eval-iou", "Mask reprojection IoU");
  common(iou_cmd);
  fitted(iou_cmd);

  CLI::App* pl_cmd = app.add_subcommand("pseudo-labels", "Export pseudo part labels");
  common(pl_cmd);
  fitted(pl_cmd);
  pl_cmd->add_option("--threshold", o.threshold, "Largest accepted L_sp + L_sv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(o);
    if (fit_cmd->parsed()) return cmd_fit(o);
    if (tu_cmd->parsed()) return cmd_template_update(o);
    if (cuv_cmd->parsed()) return cmd_canonical_uv(o);
    if (render_cmd->parsed()) return cmd_render(o);
    if (gc_cmd->parsed()) return cmd_gradcheck(o);
    if (kt_cmd->parsed()) return cmd_eval(o, true);
    if (iou_cmd->parsed()) return cmd_eval(o, false);
    if (pl_cmd->parsed()) return cmd_pseudo_labels(o);
  } catch (const ParameterError& e) {
    print_error("usage", e.what());
    return kExitUsage;
  } catch (const NumericalError& e) {
    print_error("numerical", e.what());
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    print_error("usage", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return kExitCheckFailed;
  }
  return kExitUsage;
}
