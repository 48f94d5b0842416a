#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semrecon/train.hpp"

namespace semrecon {

/// Per-instance fitted parameters as stored in params.json.
struct InstanceRecord {
  std::string name;
  ParamVector params;
  CameraHypotheses hypotheses;
  bool failed = false;
};

nlohmann::json to_json(const Instance& inst);
InstanceRecord instance_record_from_json(const nlohmann::json& j);

/// Layout: template.obj, canonical.tnsr and canonical.png (when a canonical
/// map exists), labels.tnsr, state.json, loss_log.jsonl and
/// instances/<name>/params.json.
void save_checkpoint(const std::filesystem::path& dir, const CategoryState& state,
                     const std::vector<Instance>& instances, const std::vector<std::string>& log);

struct Checkpoint {
  CategoryState state;
  std::vector<InstanceRecord> instances;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Applies checkpointed parameters to instances with matching names.
/// Throws ParameterError when an instance has no record or the layouts differ.
void restore_instances(std::vector<Instance>& instances, const Checkpoint& ckpt);

/// Argmax color preview of an H x W x N_p part map; pixels whose largest
/// probability is below `floor` are drawn black.
Grid part_preview(const Grid& probs, double floor = 0.0);

}  // namespace semrecon
