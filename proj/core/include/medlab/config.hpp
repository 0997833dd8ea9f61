#pragma once

#include <string>

#include <json.hpp>

#include "medlab/decode.hpp"
#include "medlab/grpo.hpp"
#include "medlab/model.hpp"
#include "medlab/training.hpp"

namespace medlab {

struct TaskConfig {
  std::string kind = "countdown3";  // countdown3 | arith_chain
  int train_size = 2048;
  int test_size = 256;
  int chain_steps = 3;
  int number_min = 1;
  int number_max = 99;
};

struct RewardsConfig {
  double alpha = 1.0;
  double beta_ind = 1.0;
  double gamma = 1.0;
  int k_target = 10;
  bool disable_ent = false;
  bool disable_ind = false;
};

struct AnalysisConfig {
  int bins = 6;
};

// Run configuration, sections {model, decode, grpo, rewards, task,
// analysis}. Unknown sections or keys are rejected.
struct RunConfig {
  ModelConfig model;
  PretrainConfig pretrain;  // nested under "model" in the JSON
  DecodeConfig decode;
  GrpoConfig grpo;  // structural fields; weights etc. come from rewards
  double rollout_temperature = 1.0;
  RewardsConfig rewards;
  TaskConfig task;
  AnalysisConfig analysis;

  // GrpoConfig with the reward weights, ablation flags and rollout decode
  // settings filled in, seeded with `seed`.
  GrpoConfig assemble_grpo(uint64_t seed) const;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);
uint64_t config_hash(const nlohmann::json& j);

}  // namespace medlab
