#pragma once

#include <span>
#include <utility>
#include <vector>

#include "medlab/decode.hpp"
#include "medlab/model.hpp"
#include "medlab/rewards.hpp"
#include "medlab/tasks.hpp"
#include "medlab/training.hpp"

namespace medlab {

struct GrpoConfig {
  int group_size = 6;        // G; >= 2 so advantages can normalise
  double clip_eps = 0.5;
  double kl_beta = 0.0;      // 0 drops the reference-policy term
  int num_iterations = 12;   // optimizer updates per rollout batch
  double p_mask = 0.15;      // prompt masking rate for the ratio estimate
  DecodeConfig rollout_decode;  // sampled (temperature > 0) during training

  double alpha = 1.0, beta_ind = 1.0, gamma = 1.0;
  bool disable_ent = false, disable_ind = false;
  int k_target = 10;

  uint64_t seed = 42;
  int steps = 2000;          // total optimizer updates
  int batch_prompts = 4;
  double lr = 3e-4;
  double weight_decay = 0.0;
  double clip_norm = 0.2;
  int ref_sync_steps = 64;   // reference refresh cadence when kl_beta > 0
};

// One sampled completion with everything the update needs: the decode
// trace, the recorded prompt-mask pattern, old-policy per-token log-probs,
// the reconstructed blocks and the reward breakdown.
struct Rollout {
  std::vector<TokenId> completion;
  DecodeTrace trace;
  std::vector<uint8_t> prompt_mask;
  std::vector<double> phi_old;
  BlockPartition blocks;
  EntropySequence entropies;
  RewardBreakdown reward;
  bool correct = false;
  double advantage = 0.0;
};

struct RolloutGroup {
  std::vector<TokenId> prompt;
  std::vector<Rollout> rollouts;
};

// Frozen parameters standing in for pi_old (and optionally pi_ref).
struct PolicySnapshot {
  ModelParams params;
  long step_index = 0;
};

// G independent dynamic-mode generations from the snapshot, each with its
// old-policy log-probs under a recorded prompt mask. A group with a failed
// completion is resampled once, then the error propagates.
RolloutGroup sample_group(const PolicySnapshot& snapshot, const Vocabulary& vocab,
                          std::span<const TokenId> prompt, const GrpoConfig& cfg,
                          Rng& rng);

// Cuts the completion at each indicator (inclusive) and at max_block_cap
// when none appears within the cap, grouping the recorded per-position
// entropies by the resulting spans.
std::pair<BlockPartition, EntropySequence> reconstruct_blocks(
    std::span<const TokenId> completion, TokenId indicator_id, int max_block_cap,
    std::span<const double> per_position_entropy);

// Fills rewards (honouring the ablation flags) and group-normalised
// advantages for every rollout.
void compute_rewards(RolloutGroup& group, const TaskInstance& inst,
                     const Vocabulary& vocab, const GrpoConfig& cfg);

// (r - mean)/std with the population std; all zeros when std <= 1e-8.
std::vector<double> advantages(std::span<const double> rewards);

struct GrpoStepResult {
  double objective = 0.0;
  std::vector<double> grad;  // ascent direction
  double excluded_token_frac = 0.0;
};

// Clipped-ratio objective over one group, averaged per completion and then
// across the group, with the optional per-token KL estimate against
// ref_params. Ratios are exp(phi_theta - phi_old) under each rollout's
// recorded prompt mask. Non-finite ratios exclude the token; more than 5%
// exclusions fail the step.
GrpoStepResult grpo_step(const ModelParams& params, const ModelParams* ref_params,
                         const RolloutGroup& group, const Vocabulary& vocab,
                         const GrpoConfig& cfg);

struct TrainLogRow {
  int step = 0;
  double mean_total = 0.0, mean_r_ent = 0.0, mean_r_ind = 0.0, mean_r_task = 0.0;
  double mean_k = 0.0, mean_block_size = 0.0;
  double objective = 0.0;
  double excluded_token_frac = 0.0;
};

struct RlTrainResult {
  ModelParams params;
  std::vector<TrainLogRow> log;
};

// Algorithm loop: snapshot pi_old, sample groups for a prompt batch, score
// them, then run num_iterations clipped updates before resampling.
RlTrainResult rl_train_loop(const ModelParams& start, const Vocabulary& vocab,
                            std::span<const TaskInstance> dataset, const GrpoConfig& cfg);

}  // namespace medlab
