#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "semrecon/autodiff.hpp"
#include "semrecon/scene.hpp"
#include "semrecon/softras.hpp"
#include "semrecon/train.hpp"

namespace semrecon {

struct SynthConfig {
  int image_size = 64;
  int subdivisions = 2;
  // Camera distribution, degrees; azimuth is about +y, elevation about +x and
  // roll about the view axis.
  double azimuth_deg = 45.0;
  double elevation_deg = 20.0;
  double roll_deg = 10.0;
  double scale_min = 0.45;
  double scale_max = 0.55;
  double translation = 0.05;
  double sigma = 1e-6;  // near-hard rendering of the observations
  double gamma = 1e-6;
  int uv_size = 32;  // canonical grid the part maps are rendered through

  void validate() const;
};

/// Number of ground-truth parts: head, tail, upper body, lower body.
inline constexpr int kSynthParts = 4;

/// Offsets of the seeded head/tail shape from make_sphere(subdivisions).
std::vector<Vec3> synth_offsets(int subdivisions, std::uint64_t seed);

/// Part index per face of make_sphere(subdivisions) from the undeformed face
/// directions. Stable across instances.
std::vector<int> synth_face_parts(const Mesh& sphere);

/// Names and sphere vertex indices of the keypoints carried by synthetic scenes.
struct KeypointVertices {
  std::vector<std::string> names;
  std::vector<int> vertices;
};
KeypointVertices synth_keypoint_vertices(const Mesh& sphere);

/// Renders per-face part labels to an H x W x (num_parts + 1) map with the
/// background channel last.
PartMap render_face_parts(const Mesh& mesh, const Camera& cam, std::span<const int> face_parts, int num_parts,
                          const RasterConfig& cfg);

/// Renders the truth parts through its one-hot canonical map, sampled at the
/// mesh uvs exactly as reconstructions are rendered. Background channel last.
PartMap render_truth_parts(const SceneTruth& truth, int uv_size, const RasterConfig& cfg);

/// One-hot canonical map from per-face labels through a uv mapping.
Grid canonical_from_face_parts(const UVMapping& mapping, std::span<const int> face_parts, int num_parts);

/// Category state whose template is the truth mesh, with the one-hot
/// canonical map and labels of the truth parts. Its round is 1, so the next
/// E-step runs with the semantic terms.
CategoryState truth_state(const SceneTruth& truth, int uv_size);

/// Renders one synthetic scene from its truth.
SceneBundle render_scene(const SceneTruth& truth, const SynthConfig& cfg, std::uint64_t seed);

/// n scenes named "scene_000", "scene_001", ...
std::vector<SceneBundle> synth(int n, std::uint64_t seed, const SynthConfig& cfg);

/// Randomized small scene for gradient checks: a perturbed sphere with
/// 20 * 4^subdivisions faces, a random camera, random image, part map and
/// canonical map, and a flow perturbed away from the projection.
struct GradcheckScene {
  Mesh tmpl;
  UVMapping mapping;
  Observation obs;
  Grid canonical;
  InstanceObjective objective;
  ParamVector params;

  GradcheckScene() = default;
  GradcheckScene(const GradcheckScene&) = delete;
  GradcheckScene& operator=(const GradcheckScene&) = delete;
};

std::unique_ptr<GradcheckScene> make_gradcheck_scene(std::uint64_t seed, const RasterConfig& raster,
                                                     int subdivisions = 1, int uv_size = 16);

}  // namespace semrecon
