#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semrecon/autodiff.hpp"
#include "semrecon/eval.hpp"
#include "semrecon/losses.hpp"
#include "semrecon/softras.hpp"

namespace semrecon {

struct TrainConfig {
  int rounds = 2;
  int e_epochs = 200;
  double lr = 1e-2;
  double offsets_lr_scale = 1.0;  // learning-rate multiplier for the offsets
  int lr_halve_every = 50;
  int k_select = 0;  // 0: max(3, 20% of the instances)
  int k_hyp = 8;
  std::uint64_t seed = 0;
  LossWeights weights;
  int samples_per_part = 256;
  int template_subdivisions = 2;
  int uv_size = 32;
  double init_scale = 1.0;
  bool reinit_flow = true;  // re-initialize flow from projection when round two starts
  bool reset_offsets = false;  // zero the offsets when round two starts instead of keeping the re-based ones
  TextureCycleOptions tcyc;
  int threads = 1;

  void validate() const;
  /// Subset size used for both selections given n usable instances.
  int select_count(int n) const;
  double learning_rate(int epoch) const;
};

/// Adam with bias correction.
class Adam {
 public:
  explicit Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(n, 0.0), v_(n, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<double> x, std::span<const double> g, double lr);
  /// Per-coordinate learning rates.
  void step(std::span<double> x, std::span<const double> g, std::span<const double> lr);
  int steps() const { return t_; }

 private:
  std::vector<double> m_, v_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
};

struct Instance {
  std::string name;
  Observation obs;
  ParamVector params;           // a single camera: the selected hypothesis
  CameraHypotheses hypotheses;  // cameras and final losses of the last E-step
  std::optional<KeypointSet> keypoints;
  bool failed = false;
  LossReport report;  // loss of the selected hypothesis
};

struct CategoryState {
  Mesh tmpl;
  UVMapping mapping;
  std::optional<CanonicalUV> canonical;
  std::vector<int> labels;
  int round = 0;  // completed rounds
};

/// Unit sphere template and its uv mapping.
CategoryState initial_state(const TrainConfig& cfg);

/// Zero offsets, a camera at cfg.init_scale, and flow from its projection.
Instance make_instance(std::string name, Observation obs, const CategoryState& state, const TrainConfig& cfg);

/// Objective context for `round` (1-based): the semantic terms are off in
/// round one and whenever no canonical map exists yet.
ObjectiveContext make_context(const CategoryState& state, const TrainConfig& cfg, const RasterConfig& raster,
                              int round);

/// Sample set for the vertex term of one instance.
PartSamples instance_part_samples(const Instance& inst, const TrainConfig& cfg, std::size_t index);

/// Fits every instance against the frozen state for round state.round + 1.
/// Each camera hypothesis is optimized independently from its own copy of the
/// offsets and flow and the hypothesis with the lowest final loss is kept.
/// One JSON line per step is appended to `log` in instance, hypothesis, step
/// order.
void e_step(std::vector<Instance>& instances, const CategoryState& state, const TrainConfig& cfg,
            const RasterConfig& raster, std::vector<std::string>* log = nullptr);

/// Exemplar: the largest IoU between rendered[i] and masks[i]. Members: the
/// k highest IoUs between rendered[i] and the exemplar's rendering, with the
/// exemplar first and ties broken by index.
std::vector<int> rank_shape_subset(std::span<const Grid> rendered, std::span<const Grid> masks, int k);

/// Exemplar: the smallest image loss. Members: the k smallest L2 distances
/// between uv_maps[i] and the exemplar's map.
std::vector<int> rank_uv_subset(std::span<const double> image_losses, std::span<const Grid> uv_maps, int k);

/// Indices into `instances` (failed instances are skipped).
std::vector<int> select_shape_subset(const std::vector<Instance>& instances, const CategoryState& state,
                                     const RasterConfig& raster, int k);
std::vector<int> select_uv_subset(const std::vector<Instance>& instances, const CategoryState& state,
                                  const RasterConfig& raster, int k);

struct MStepResult {
  std::vector<int> shape_subset;
  std::vector<int> uv_subset;
};

/// Moves the template by the mean offset over the shape subset, re-bases every
/// instance's offsets, rebuilds the canonical map from the uv subset and
/// relabels the vertices. Increments state.round.
MStepResult m_step(std::vector<Instance>& instances, CategoryState& state, const TrainConfig& cfg,
                   const RasterConfig& raster);

struct PseudoLabel {
  bool selected = false;
  double score = 0.0;  // unweighted L_sp + L_sv
  Grid labels;         // H x W x 1 part index, background = N_p
};

std::vector<PseudoLabel> pseudo_labels(const std::vector<Instance>& instances, const CategoryState& state,
                                       const TrainConfig& cfg, const RasterConfig& raster, double threshold);

/// Called after every round with the updated state.
using RoundCallback = std::function<void(const CategoryState&, const std::vector<Instance>&,
                                         const std::vector<std::string>& round_log)>;

/// cfg.rounds rounds of e_step followed by m_step.
void fit(std::vector<Instance>& instances, CategoryState& state, const TrainConfig& cfg, const RasterConfig& raster,
         const RoundCallback& on_round = {});

/// Instance mesh: template plus its offsets.
Mesh instance_mesh(const Instance& inst, const CategoryState& state);

/// Runs `task(i)` for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& task);

}  // namespace semrecon
