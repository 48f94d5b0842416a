#include "semrecon/config.hpp"

#include <set>

#include "semrecon/errors.hpp"
#include "semrecon/scene.hpp"

namespace semrecon {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object, rejecting any key that is never read.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ParameterError("config: " + name_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ParameterError("config: " + name_ + "." + key + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ParameterError("config: unknown key " + name_ + "." + key);
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig parse_config(const json& j) {
  RunConfig c;
  Section root(j, "config");

  if (const json* t = root.child("train")) {
    Section s(*t, "train");
    s.get("rounds", c.train.rounds);
    s.get("e_epochs", c.train.e_epochs);
    s.get("lr", c.train.lr);
    s.get("offsets_lr_scale", c.train.offsets_lr_scale);
    s.get("lr_halve_every", c.train.lr_halve_every);
    s.get("k_select", c.train.k_select);
    s.get("k_hyp", c.train.k_hyp);
    s.get("seed", c.train.seed);
    s.get("samples_per_part", c.train.samples_per_part);
    s.get("template_subdivisions", c.train.template_subdivisions);
    s.get("uv_size", c.train.uv_size);
    s.get("init_scale", c.train.init_scale);
    s.get("reinit_flow", c.train.reinit_flow);
    s.get("reset_offsets", c.train.reset_offsets);
    s.get("tcyc_include_inherited", c.train.tcyc.include_inherited_texels);
    s.get("tcyc_min_coverage", c.train.tcyc.min_coverage);
    s.get("threads", c.train.threads);
    s.finish();
  }
  if (const json* w = root.child("weights")) {
    Section s(*w, "weights");
    s.get("iou", c.train.weights.iou);
    s.get("img", c.train.weights.img);
    s.get("sp", c.train.weights.sp);
    s.get("sv", c.train.weights.sv);
    s.get("tcyc", c.train.weights.tcyc);
    s.get("lap", c.train.weights.lap);
    s.get("edge", c.train.weights.edge);
    s.finish();
  }
  if (const json* r = root.child("raster")) {
    Section s(*r, "raster");
    s.get("height", c.raster.height);
    s.get("width", c.raster.width);
    s.get("sigma", c.raster.sigma);
    s.get("gamma", c.raster.gamma);
    s.get("depth_scale", c.raster.depth_scale);
    s.get("background", c.raster.background);
    s.get("support", c.raster.support);
    s.finish();
  }
  if (const json* y = root.child("synth")) {
    Section s(*y, "synth");
    s.get("image_size", c.synth.image_size);
    s.get("subdivisions", c.synth.subdivisions);
    s.get("azimuth_deg", c.synth.azimuth_deg);
    s.get("elevation_deg", c.synth.elevation_deg);
    s.get("roll_deg", c.synth.roll_deg);
    s.get("scale_min", c.synth.scale_min);
    s.get("scale_max", c.synth.scale_max);
    s.get("translation", c.synth.translation);
    s.get("sigma", c.synth.sigma);
    s.get("gamma", c.synth.gamma);
    s.get("uv_size", c.synth.uv_size);
    s.finish();
  }
  if (const json* p = root.child("paths")) {
    Section s(*p, "paths");
    s.get("data", c.data);
    s.get("checkpoint", c.checkpoint);
    s.finish();
  }
  if (const json* e = root.child("eval")) {
    Section s(*e, "eval");
    s.get("pseudo_threshold", c.pseudo_threshold);
    s.get("pck_alpha", c.pck_alpha);
    s.finish();
  }
  root.finish();

  c.train.validate();
  c.raster.validate();
  c.synth.validate();
  if (!(c.pseudo_threshold >= 0.0)) throw ParameterError("config: eval.pseudo_threshold must be >= 0");
  if (!(c.pck_alpha > 0.0)) throw ParameterError("config: eval.pck_alpha must be positive");
  return c;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_json(path)); }

json to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  const LossWeights& w = t.weights;
  const RasterConfig& r = c.raster;
  const SynthConfig& y = c.synth;
  return {
      {"train",
       {{"rounds", t.rounds},
        {"e_epochs", t.e_epochs},
        {"lr", t.lr},
        {"offsets_lr_scale", t.offsets_lr_scale},
        {"lr_halve_every", t.lr_halve_every},
        {"k_select", t.k_select},
        {"k_hyp", t.k_hyp},
        {"seed", t.seed},
        {"samples_per_part", t.samples_per_part},
        {"template_subdivisions", t.template_subdivisions},
        {"uv_size", t.uv_size},
        {"init_scale", t.init_scale},
        {"reinit_flow", t.reinit_flow},
        {"reset_offsets", t.reset_offsets},
        {"tcyc_include_inherited", t.tcyc.include_inherited_texels},
        {"tcyc_min_coverage", t.tcyc.min_coverage},
        {"threads", t.threads}}},
      {"weights",
       {{"iou", w.iou}, {"img", w.img}, {"sp", w.sp}, {"sv", w.sv}, {"tcyc", w.tcyc}, {"lap", w.lap}, {"edge", w.edge}}},
      {"raster",
       {{"height", r.height},
        {"width", r.width},
        {"sigma", r.sigma},
        {"gamma", r.gamma},
        {"depth_scale", r.depth_scale},
        {"background", r.background},
        {"support", r.support}}},
      {"synth",
       {{"image_size", y.image_size},
        {"subdivisions", y.subdivisions},
        {"azimuth_deg", y.azimuth_deg},
        {"elevation_deg", y.elevation_deg},
        {"roll_deg", y.roll_deg},
        {"scale_min", y.scale_min},
        {"scale_max", y.scale_max},
        {"translation", y.translation},
        {"sigma", y.sigma},
        {"gamma", y.gamma},
        {"uv_size", y.uv_size}}},
      {"paths", {{"data", c.data}, {"checkpoint", c.checkpoint}}},
      {"eval", {{"pseudo_threshold", c.pseudo_threshold}, {"pck_alpha", c.pck_alpha}}},
  };
}

}  // namespace semrecon
