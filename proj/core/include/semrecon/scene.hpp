#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semrecon/camera.hpp"
#include "semrecon/eval.hpp"
#include "semrecon/geometry.hpp"
#include "semrecon/losses.hpp"

namespace semrecon {

/// Generating parameters of a synthetic scene. Offsets are relative to
/// make_sphere(subdivisions).
struct SceneTruth {
  Camera camera;
  int subdivisions = 0;
  std::vector<Vec3> offsets;
  std::vector<int> face_parts;  // ground-truth part per face
  int num_parts = 0;

  Mesh mesh() const;
};

/// One observation on disk: image.png, mask.png, parts.tnsr and the optional
/// keypoints.json and truth.json.
struct SceneBundle {
  std::string name;
  Observation obs;
  std::optional<KeypointSet> keypoints;
  std::optional<SceneTruth> truth;
};

/// Loads a bundle directory. Throws ParameterError on missing files or
/// inconsistent dimensions. Part maps are renormalized onto the simplex.
SceneBundle load_scene(const std::filesystem::path& dir);
void save_scene(const std::filesystem::path& dir, const SceneBundle& scene);

/// Every subdirectory of `root` containing an image.png, in name order.
std::vector<SceneBundle> load_scenes(const std::filesystem::path& root);

nlohmann::json to_json(const Camera& cam);
Camera camera_from_json(const nlohmann::json& j);

nlohmann::json to_json(const KeypointSet& kp);
KeypointSet keypoints_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SceneTruth& truth);
SceneTruth truth_from_json(const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);
/// Writes `j` with two-space indentation and a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace semrecon
