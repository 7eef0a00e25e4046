#pragma once

#include "ctta/datagen.hpp"
#include "ctta/engine.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace ctta {

struct ModelConfig {
  int feature_dim = 32;
  std::vector<int> hidden = {64, 64};
  int pretrain_epochs = 200;
  double pretrain_lr = 0.01;
};

struct Experiment {
  std::string name;
  EngineConfig engine;
  ScenarioConfig scenario;
  ModelConfig model;
  std::vector<std::uint64_t> seeds;
};

struct ExperimentSuite {
  std::vector<Experiment> experiments;
  std::string output_dir = "results";
};

/// Strict parse: unknown keys and invariant violations are hard errors
/// naming the offending field. The file carries a config_version key.
ExperimentSuite parse_config(const std::string& path);
ExperimentSuite parse_config_json(const nlohmann::json& root);

Architecture make_architecture(const Experiment& exp);

}  // namespace ctta
