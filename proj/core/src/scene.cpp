#include "semrecon/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "semrecon/errors.hpp"
#include "semrecon/io.hpp"

namespace semrecon {

namespace fs = std::filesystem;
using nlohmann::json;

Mesh SceneTruth::mesh() const {
  Mesh m = make_sphere(subdivisions);
  return apply_deformation(m, {offsets});
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParameterError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ParameterError("cannot open " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw ParameterError("write failed for " + path.string());
}

json to_json(const Camera& cam) {
  return {{"scale", cam.scale},
          {"trans", {cam.translation.x(), cam.translation.y()}},
          {"quat", {cam.quat[0], cam.quat[1], cam.quat[2], cam.quat[3]}}};
}

Camera camera_from_json(const json& j) {
  try {
    Camera c;
    c.scale = j.at("scale").get<double>();
    const auto t = j.at("trans").get<std::vector<double>>();
    const auto q = j.at("quat").get<std::vector<double>>();
    if (t.size() != 2 || q.size() != 4) throw ParameterError("camera: trans needs 2 values and quat 4");
    c.translation = Vec2(t[0], t[1]);
    c.quat = Quat(q[0], q[1], q[2], q[3]);
    if (!(c.scale > 0.0)) throw ParameterError("camera: scale must be positive");
    return c;
  } catch (const json::exception& e) {
    throw ParameterError(std::string("camera: ") + e.what());
  }
}

json to_json(const KeypointSet& kp) {
  json arr = json::array();
  for (int i = 0; i < kp.size(); ++i) {
    arr.push_back({{"name", kp.names[i]}, {"xy", {kp.points[i].x(), kp.points[i].y()}}, {"visible", kp.visible[i]}});
  }
  return {{"keypoints", arr}};
}

KeypointSet keypoints_from_json(const json& j) {
  try {
    KeypointSet kp;
    for (const json& e : j.at("keypoints")) {
      const auto xy = e.at("xy").get<std::vector<double>>();
      if (xy.size() != 2) throw ParameterError("keypoints: xy needs 2 values");
      const bool visible = e.value("visible", true);
      if (visible && (std::abs(xy[0]) > 1.0 || std::abs(xy[1]) > 1.0)) {
        throw ParameterError("keypoints: visible keypoint outside [-1, 1]^2");
      }
      kp.names.push_back(e.at("name").get<std::string>());
      kp.points.emplace_back(xy[0], xy[1]);
      kp.visible.push_back(visible);
    }
    return kp;
  } catch (const json::exception& e) {
    throw ParameterError(std::string("keypoints: ") + e.what());
  }
}

json to_json(const SceneTruth& truth) {
  json off = json::array();
  for (const Vec3& o : truth.offsets) off.push_back({o.x(), o.y(), o.z()});
  return {{"camera", to_json(truth.camera)},
          {"subdivisions", truth.subdivisions},
          {"num_parts", truth.num_parts},
          {"offsets", off},
          {"face_parts", truth.face_parts}};
}

SceneTruth truth_from_json(const json& j) {
  try {
    SceneTruth t;
    t.camera = camera_from_json(j.at("camera"));
    t.subdivisions = j.at("subdivisions").get<int>();
    t.num_parts = j.value("num_parts", 0);
    for (const auto& o : j.at("offsets")) {
      const auto v = o.get<std::vector<double>>();
      if (v.size() != 3) throw ParameterError("truth: offsets need 3 values each");
      t.offsets.emplace_back(v[0], v[1], v[2]);
    }
    if (j.contains("face_parts")) t.face_parts = j.at("face_parts").get<std::vector<int>>();
    const Mesh sphere = make_sphere(t.subdivisions);
    if (t.offsets.size() != sphere.vertices.size()) throw ParameterError("truth: offsets do not match the sphere");
    if (!t.face_parts.empty() && t.face_parts.size() != sphere.faces.size()) {
      throw ParameterError("truth: face_parts do not match the sphere");
    }
    return t;
  } catch (const json::exception& e) {
    throw ParameterError(std::string("truth: ") + e.what());
  }
}

SceneBundle load_scene(const fs::path& dir) {
  SceneBundle s;
  s.name = dir.filename().string();
  if (s.name.empty()) s.name = dir.parent_path().filename().string();
  s.obs.image = read_png(dir / "image.png");
  if (s.obs.image.channels() == 1) {
    Grid rgb(s.obs.image.height(), s.obs.image.width(), 3);
    for (std::size_t m = 0; m < rgb.pixels(); ++m) {
      for (int ch = 0; ch < 3; ++ch) rgb.data()[3 * m + ch] = s.obs.image.data()[m];
    }
    s.obs.image = std::move(rgb);
  }
  const Grid mask = read_png(dir / "mask.png");
  s.obs.mask = Grid(mask.height(), mask.width(), 1);
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) s.obs.mask(r, c) = mask(r, c, 0) > 127.0 / 255.0 ? 1.0 : 0.0;
  }
  s.obs.parts.probs = to_grid(read_tnsr(dir / "parts.tnsr"));
  const int h = s.obs.image.height(), w = s.obs.image.width();
  if (s.obs.mask.height() != h || s.obs.mask.width() != w || s.obs.parts.probs.height() != h ||
      s.obs.parts.probs.width() != w) {
    throw ParameterError("scene " + dir.string() + ": image, mask and parts sizes differ");
  }
  if (s.obs.parts.probs.channels() < 2) throw ParameterError("scene " + dir.string() + ": parts need >= 2 channels");
  for (double v : s.obs.parts.probs.data()) {
    if (!std::isfinite(v) || v < -1e-3) throw ParameterError("scene " + dir.string() + ": invalid part probability");
  }
  s.obs.parts.normalize();
  if (fs::exists(dir / "keypoints.json")) s.keypoints = keypoints_from_json(read_json(dir / "keypoints.json"));
  if (fs::exists(dir / "truth.json")) s.truth = truth_from_json(read_json(dir / "truth.json"));
  return s;
}

void save_scene(const fs::path& dir, const SceneBundle& s) {
  fs::create_directories(dir);
  write_png(dir / "image.png", s.obs.image);
  write_png(dir / "mask.png", s.obs.mask);
  write_tnsr(dir / "parts.tnsr", to_tensor(s.obs.parts.probs));
  if (s.keypoints) write_json(dir / "keypoints.json", to_json(*s.keypoints));
  if (s.truth) write_json(dir / "truth.json", to_json(*s.truth));
}

std::vector<SceneBundle> load_scenes(const fs::path& root) {
  if (!fs::is_directory(root)) throw ParameterError("not a directory: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "image.png")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<SceneBundle> out;
  for (const auto& d : dirs) out.push_back(load_scene(d));
  return out;
}

}  // namespace semrecon
