#pragma once

#include <span>
#include <utility>
#include <vector>

#include "medlab/model.hpp"
#include "medlab/rng.hpp"
#include "medlab/sequence.hpp"

namespace medlab {

// Clean sequence, its corrupted twin and the masked position set.
// xt[i] == mask exactly for i in masked_positions; prompt positions are
// never touched here (the log-prob estimator masks prompts separately).
struct MaskingSample {
  Sequence x0;
  double t = 0.0;
  Sequence xt;
  std::vector<int> masked_positions;  // global indices, ascending
};

// Independently replaces each generation position by mask_id with
// probability t. Throws unless 0 < t <= 1.
MaskingSample corrupt(const Sequence& x0, double t, TokenId mask_id, Rng& rng);

// -(1/t) * sum over masked positions of logprob(x0_i); helper shared by the
// loss and its unit oracles.
double sample_loss_from_output(const ForwardOutput& out, const MaskingSample& sample);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Mean over the batch of the per-sample masked cross-entropy, with exact
// gradient. A sample with an empty masked set is rejected: it would be a
// silent no-op in small batches.
LossGrad denoising_loss(const ModelParams& params, std::span<const MaskingSample> batch);

// AdamW with decoupled weight decay and global gradient-norm clipping.
struct OptimizerState {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.1;
  double clip_norm = 0.2;  // <= 0 disables clipping
  double eps = 1e-8;
  long step = 0;
  std::vector<double> m, v;
};

OptimizerState make_optimizer(size_t n_params, double lr, double weight_decay,
                              double clip_norm);

// One update in place. A non-finite gradient rejects the whole step and
// reports the first offending coordinate.
void optimizer_step(OptimizerState& opt, ModelParams& params,
                    std::span<const double> grad);

// Prompt-mask pattern for the one-pass log-prob estimate: each prompt
// position is masked independently with probability p_mask. The current and
// old policies must be evaluated on the same pattern or the ratio estimate
// is meaningless.
std::vector<uint8_t> draw_prompt_mask(int prompt_len, double p_mask, Rng& rng);

// Input with every completion position masked and prompt positions masked
// per the pattern.
std::vector<TokenId> compose_masked_input(std::span<const TokenId> prompt,
                                          std::span<const TokenId> completion,
                                          std::span<const uint8_t> prompt_mask,
                                          TokenId mask_id);

struct LogProbResult {
  std::vector<double> phi;  // log pi(completion_i), one entry per token
  std::vector<uint8_t> prompt_mask;
};

// One forward pass over the composed masked input. Throws unless
// 0 <= p_mask < 1.
LogProbResult per_token_logprob(const ModelParams& params,
                                std::span<const TokenId> prompt,
                                std::span<const TokenId> completion, double p_mask,
                                TokenId mask_id, Rng& rng);

// Same estimate under a previously recorded pattern.
std::vector<double> per_token_logprob(const ModelParams& params,
                                      std::span<const TokenId> prompt,
                                      std::span<const TokenId> completion,
                                      std::span<const uint8_t> prompt_mask,
                                      TokenId mask_id);

struct PretrainConfig {
  int steps = 2000;
  int batch_size = 16;
  double lr = 1e-3;
  double t_min = 0.05;  // clamps the 1/t weight
  double weight_decay = 0.0;
  double clip_norm = 0.2;
  uint64_t seed = 1;
};

struct PretrainResult {
  ModelParams params;
  std::vector<std::pair<int, double>> loss_curve;  // (step, loss)
};

// corrupt -> denoising_loss -> optimizer_step over a corpus of clean
// sequences; bit-reproducible under a fixed seed.
PretrainResult pretrain(const ModelConfig& model_cfg, const Vocabulary& vocab,
                        std::span<const Sequence> corpus, const PretrainConfig& cfg);

}  // namespace medlab
