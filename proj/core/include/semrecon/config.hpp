#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "semrecon/softras.hpp"
#include "semrecon/synth.hpp"
#include "semrecon/train.hpp"

namespace semrecon {

struct RunConfig {
  TrainConfig train;
  RasterConfig raster;
  SynthConfig synth;
  std::string data;    // directory of scene bundles
  std::string checkpoint;  // checkpoint directory to resume from
  double pseudo_threshold = 0.05;
  double pck_alpha = 0.1;
};

/// Parses a configuration document. Missing keys keep their defaults; unknown
/// keys and ill-typed values throw ParameterError.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved configuration, suitable for parse_config.
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace semrecon
