#include "semrecon/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include "semrecon/errors.hpp"
#include "semrecon/io.hpp"
#include "semrecon/scene.hpp"

namespace semrecon {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json score_json(double s) { return std::isfinite(s) ? json(s) : json(nullptr); }

}  // namespace

json to_json(const Instance& inst) {
  const ParamLayout& lay = inst.params.layout();
  json off = json::array();
  for (const Vec3& o : inst.params.offsets()) off.push_back({o.x(), o.y(), o.z()});
  const TextureFlow flow = inst.params.flow();
  json hyps = json::array();
  for (int k = 0; k < inst.hypotheses.size(); ++k) {
    hyps.push_back({{"camera", to_json(inst.hypotheses.cameras[k])}, {"score", score_json(inst.hypotheses.scores[k])}});
  }
  const LossReport& r = inst.report;
  return {{"name", inst.name},
          {"failed", inst.failed},
          {"camera", to_json(inst.params.camera(0))},
          {"offsets", off},
          {"flow", {{"height", lay.flow_height}, {"width", lay.flow_width}, {"data", flow.grid.data()}}},
          {"hypotheses", hyps},
          {"report",
           {{"iou", r.iou},
            {"img", r.img},
            {"sp", r.sp},
            {"sv", r.sv},
            {"tcyc", r.tcyc},
            {"lap", r.lap},
            {"edge", r.edge},
            {"total", r.total}}}};
}

InstanceRecord instance_record_from_json(const json& j) {
  try {
    InstanceRecord rec;
    rec.name = j.at("name").get<std::string>();
    rec.failed = j.value("failed", false);
    const Camera cam = camera_from_json(j.at("camera"));
    std::vector<Vec3> offsets;
    for (const auto& o : j.at("offsets")) {
      const auto v = o.get<std::vector<double>>();
      if (v.size() != 3) throw ParameterError("params: offsets need 3 values each");
      offsets.emplace_back(v[0], v[1], v[2]);
    }
    const json& f = j.at("flow");
    TextureFlow flow;
    flow.grid = Grid(f.at("height").get<int>(), f.at("width").get<int>(), 2);
    const auto data = f.at("data").get<std::vector<double>>();
    if (data.size() != flow.grid.size()) throw ParameterError("params: flow data does not match its size");
    flow.grid.data() = data;
    rec.params = ParamVector::pack(offsets, std::vector<Camera>{cam}, flow);
    if (j.contains("hypotheses")) {
      for (const auto& h : j.at("hypotheses")) {
        rec.hypotheses.cameras.push_back(camera_from_json(h.at("camera")));
        const json& s = h.at("score");
        rec.hypotheses.scores.push_back(s.is_null() ? std::numeric_limits<double>::infinity() : s.get<double>());
      }
    }
    if (rec.hypotheses.cameras.empty()) {
      rec.hypotheses.cameras = {cam};
      rec.hypotheses.scores = {std::numeric_limits<double>::infinity()};
    }
    return rec;
  } catch (const json::exception& e) {
    throw ParameterError(std::string("params: ") + e.what());
  }
}

Grid part_preview(const Grid& probs, double floor) {
  static constexpr double kPalette[][3] = {{0.85, 0.25, 0.20}, {0.20, 0.35, 0.85}, {0.25, 0.75, 0.30},
                                           {0.90, 0.80, 0.25}, {0.60, 0.30, 0.70}, {0.20, 0.75, 0.75},
                                           {0.95, 0.55, 0.15}, {0.55, 0.55, 0.55}};
  constexpr int kColors = sizeof kPalette / sizeof kPalette[0];
  Grid out(probs.height(), probs.width(), 3);
  const int c = probs.channels();
  for (std::size_t m = 0; m < out.pixels(); ++m) {
    int best = 0;
    for (int p = 1; p < c; ++p) {
      if (probs.data()[m * c + p] > probs.data()[m * c + best]) best = p;
    }
    if (c == 0 || probs.data()[m * c + best] < floor) continue;
    for (int ch = 0; ch < 3; ++ch) out.data()[3 * m + ch] = kPalette[best % kColors][ch];
  }
  return out;
}

void save_checkpoint(const fs::path& dir, const CategoryState& state, const std::vector<Instance>& instances,
                     const std::vector<std::string>& log) {
  fs::create_directories(dir / "instances");
  write_obj(dir / "template.obj", state.tmpl);
  if (state.canonical) {
    write_tnsr(dir / "canonical.tnsr", to_tensor(state.canonical->probs));
    write_png(dir / "canonical.png", part_preview(state.canonical->probs));
  }
  Tensor labels;
  labels.dims = {static_cast<std::uint32_t>(state.labels.size())};
  labels.data.assign(state.labels.begin(), state.labels.end());
  write_tnsr(dir / "labels.tnsr", labels);
  write_json(dir / "state.json", {{"round", state.round},
                                  {"uv_height", state.mapping.height},
                                  {"uv_width", state.mapping.width},
                                  {"canonical_samples", state.canonical ? state.canonical->sample_count : 0}});
  for (const Instance& inst : instances) {
    fs::create_directories(dir / "instances" / inst.name);
    write_json(dir / "instances" / inst.name / "params.json", to_json(inst));
  }
  std::ofstream out(dir / "loss_log.jsonl");
  if (!out) throw ParameterError("cannot open " + (dir / "loss_log.jsonl").string());
  for (const std::string& line : log) out << line << '\n';
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ParameterError("checkpoint not found: " + dir.string());
  Checkpoint ck;
  const json st = read_json(dir / "state.json");
  try {
    ck.state.round = st.at("round").get<int>();
    ck.state.tmpl = read_obj(dir / "template.obj");
    ck.state.mapping = build_uv_mapping(ck.state.tmpl, st.at("uv_height").get<int>(), st.at("uv_width").get<int>());
    if (fs::exists(dir / "canonical.tnsr")) {
      CanonicalUV c;
      c.probs = to_grid(read_tnsr(dir / "canonical.tnsr"));
      c.sample_count = st.value("canonical_samples", 0);
      if (c.probs.height() != ck.state.mapping.height || c.probs.width() != ck.state.mapping.width) {
        throw ParameterError("checkpoint: canonical map does not match the uv grid");
      }
      ck.state.canonical = std::move(c);
    }
  } catch (const json::exception& e) {
    throw ParameterError(std::string("checkpoint state: ") + e.what());
  }
  if (fs::exists(dir / "labels.tnsr")) {
    const Tensor t = read_tnsr(dir / "labels.tnsr");
    for (float v : t.data) ck.state.labels.push_back(static_cast<int>(v));
    if (!ck.state.labels.empty() && ck.state.labels.size() != ck.state.tmpl.vertices.size()) {
      throw ParameterError("checkpoint: labels do not match the template");
    }
  }
  std::vector<fs::path> dirs;
  if (fs::is_directory(dir / "instances")) {
    for (const auto& e : fs::directory_iterator(dir / "instances")) {
      if (fs::exists(e.path() / "params.json")) dirs.push_back(e.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) ck.instances.push_back(instance_record_from_json(read_json(d / "params.json")));
  return ck;
}

void restore_instances(std::vector<Instance>& instances, const Checkpoint& ckpt) {
  for (Instance& inst : instances) {
    const auto it = std::find_if(ckpt.instances.begin(), ckpt.instances.end(),
                                 [&](const InstanceRecord& r) { return r.name == inst.name; });
    if (it == ckpt.instances.end()) throw ParameterError("checkpoint has no parameters for " + inst.name);
    if (!(it->params.layout() == inst.params.layout())) {
      throw ParameterError("checkpoint parameters for " + inst.name + " do not match the template or uv grid");
    }
    inst.params = it->params;
    inst.hypotheses = it->hypotheses;
    inst.failed = it->failed;
  }
}

}  // namespace semrecon
