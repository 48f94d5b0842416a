#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "semrecon/losses.hpp"

namespace semrecon {

/// Segment table of the flat per-instance parameter vector:
/// [ offsets (3 V) | cameras (7 K) | flow (2 H_uv W_uv) ].
struct ParamLayout {
  int num_vertices = 0;
  int num_cameras = 1;
  int flow_height = 0;
  int flow_width = 0;

  std::size_t offsets_begin() const { return 0; }
  std::size_t cameras_begin() const { return 3 * static_cast<std::size_t>(num_vertices); }
  std::size_t camera_begin(int k) const { return cameras_begin() + Camera::kNumParams * static_cast<std::size_t>(k); }
  std::size_t flow_begin() const { return camera_begin(num_cameras); }
  std::size_t size() const { return flow_begin() + 2 * static_cast<std::size_t>(flow_height) * flow_width; }

  bool operator==(const ParamLayout&) const = default;
};

class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(const ParamLayout& layout) : layout_(layout), values_(layout.size(), 0.0) {}

  static ParamVector pack(std::span<const Vec3> offsets, std::span<const Camera> cameras, const TextureFlow& flow);

  const ParamLayout& layout() const { return layout_; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  std::vector<Vec3> offsets() const;
  Camera camera(int k) const;
  std::vector<Camera> cameras() const;
  TextureFlow flow() const;

  /// Parameters of hypothesis k as the objective consumes them.
  InstanceParams instance(int k) const;

  void set_camera(int k, const Camera& cam);
  void set_offsets(std::span<const Vec3> offsets);
  void set_flow(const TextureFlow& flow);

  bool operator==(const ParamVector&) const = default;

 private:
  ParamLayout layout_;
  std::vector<double> values_;
};

/// Total loss of one instance as a function of its packed parameters, using
/// camera hypothesis `hypothesis`.
struct InstanceObjective {
  ObjectiveContext ctx;
  const Observation* obs = nullptr;
  int hypothesis = 0;

  double value(const ParamVector& params) const;
  LossReport evaluate(const ParamVector& params, ParamVector* grad = nullptr) const;
};

/// Exact gradient of the objective; only the active hypothesis' camera block is non-zero.
ParamVector grad(const InstanceObjective& objective, const ParamVector& params);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Largest relative error between `analytic` and central differences over the
/// sampled coordinates; the denominator is max(|g|, |g_fd|, 1e-8).
double fd_check(const ScalarFunction& f, std::span<const double> x, std::span<const double> analytic,
                double step, std::span<const std::size_t> indices);

double fd_check(const InstanceObjective& objective, const ParamVector& params, double step,
                std::span<const std::size_t> indices);

/// The objective restricted to one term: every other weight set to zero.
InstanceObjective single_term(const InstanceObjective& objective, const std::string& term);

/// Names of the terms checked by `gradcheck_terms`.
const std::vector<std::string>& loss_term_names();

/// Max relative error per loss term and per parameter segment, keyed
/// "term/segment" with segment one of offsets, camera, flow.
std::map<std::string, double> gradcheck_terms(const InstanceObjective& objective, const ParamVector& params,
                                              double step, std::size_t samples_per_segment, std::uint64_t seed);

}  // namespace semrecon
