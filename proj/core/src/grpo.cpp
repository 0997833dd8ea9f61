#include "medlab/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace medlab {

namespace {

Rollout sample_one(const PolicySnapshot& snapshot, const Vocabulary& vocab,
                   std::span<const TokenId> prompt, const GrpoConfig& cfg, Rng& rng) {
  Rollout r;
  GenerateResult gen = generate(snapshot.params, vocab, prompt, cfg.rollout_decode, rng);
  r.completion.assign(gen.sequence.completion().begin(), gen.sequence.completion().end());
  r.trace = std::move(gen.trace);
  LogProbResult lp =
      per_token_logprob(snapshot.params, prompt, r.completion, cfg.p_mask, vocab.mask_id, rng);
  r.phi_old = std::move(lp.phi);
  r.prompt_mask = std::move(lp.prompt_mask);
  return r;
}

}  // namespace

RolloutGroup sample_group(const PolicySnapshot& snapshot, const Vocabulary& vocab,
                          std::span<const TokenId> prompt, const GrpoConfig& cfg,
                          Rng& rng) {
  if (cfg.group_size < 2) {
    throw std::invalid_argument("sample_group: group_size must be >= 2");
  }
  RolloutGroup group;
  group.prompt.assign(prompt.begin(), prompt.end());
  for (int attempt = 0; attempt < 2; ++attempt) {
    group.rollouts.clear();
    try {
      for (int g = 0; g < cfg.group_size; ++g) {
        group.rollouts.push_back(sample_one(snapshot, vocab, prompt, cfg, rng));
      }
      return group;
    } catch (const std::exception&) {
      if (attempt == 1) throw;
    }
  }
  return group;  // unreachable
}

std::pair<BlockPartition, EntropySequence> reconstruct_blocks(
    std::span<const TokenId> completion, TokenId indicator_id, int max_block_cap,
    std::span<const double> per_position_entropy) {
  if (completion.empty()) {
    throw std::invalid_argument("reconstruct_blocks: empty completion");
  }
  if (max_block_cap < 1) {
    throw std::invalid_argument("reconstruct_blocks: max_block_cap must be >= 1");
  }
  if (!per_position_entropy.empty() && per_position_entropy.size() != completion.size()) {
    throw std::invalid_argument("reconstruct_blocks: entropy length mismatch");
  }

  BlockPartition partition;
  partition.window_len = static_cast<int>(completion.size());
  EntropySequence entropies;

  const int len = static_cast<int>(completion.size());
  int start = 0;  // 0-based cursor
  int index = 1;
  while (start < len) {
    const int limit = std::min(start + max_block_cap, len);
    int cut = -1;
    for (int i = start; i < limit; ++i) {
      if (completion[static_cast<size_t>(i)] == indicator_id) {
        cut = i;
        break;
      }
    }
    BlockSpan span;
    span.index = index++;
    span.start = start + 1;
    span.contains_indicator = cut >= 0;
    span.size = (cut >= 0 ? cut - start + 1 : limit - start);

    if (!per_position_entropy.empty()) {
      double sum = 0.0;
      for (int i = 0; i < span.size; ++i) {
        sum += per_position_entropy[static_cast<size_t>(start + i)];
      }
      entropies.values.push_back(sum / static_cast<double>(span.size));
    }
    start += span.size;
    partition.spans.push_back(span);
  }
  return {partition, entropies};
}

void compute_rewards(RolloutGroup& group, const TaskInstance& inst,
                     const Vocabulary& vocab, const GrpoConfig& cfg) {
  const double alpha = cfg.disable_ent ? 0.0 : cfg.alpha;
  const double beta = cfg.disable_ind ? 0.0 : cfg.beta_ind;
  for (Rollout& r : group.rollouts) {
    const std::vector<double> flat = r.trace.flat_entropies();
    auto [partition, entropies] =
        reconstruct_blocks(r.completion, vocab.indicator_id,
                           cfg.rollout_decode.max_block_cap, flat);
    r.blocks = std::move(partition);
    r.entropies = std::move(entropies);

    const double r_ent = entropy_descent_reward(r.entropies);
    const double r_ind = indicator_reward(r.blocks.block_count(), cfg.k_target);
    const VerifyResult v = verify(inst, r.trace.final_sequence, vocab);
    r.correct = v.correct;
    r.reward = total_reward(r_ent, r_ind, v.task_reward, alpha, beta, cfg.gamma);
  }
  std::vector<double> totals;
  totals.reserve(group.rollouts.size());
  for (const Rollout& r : group.rollouts) totals.push_back(r.reward.total);
  const std::vector<double> adv = advantages(totals);
  for (size_t g = 0; g < group.rollouts.size(); ++g) group.rollouts[g].advantage = adv[g];
}

std::vector<double> advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) {
    throw std::invalid_argument("advantages: need a group of at least 2");
  }
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;  // population variance
  const double std_dev = std::sqrt(var);
  std::vector<double> out(rewards.size(), 0.0);
  if (std_dev > 1e-8) {
    for (size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / std_dev;
  }
  return out;
}

GrpoStepResult grpo_step(const ModelParams& params, const ModelParams* ref_params,
                         const RolloutGroup& group, const Vocabulary& vocab,
                         const GrpoConfig& cfg) {
  if (group.rollouts.empty()) throw std::invalid_argument("grpo_step: empty group");
  if (cfg.kl_beta > 0.0 && ref_params == nullptr) {
    throw std::invalid_argument("grpo_step: kl_beta > 0 requires a reference policy");
  }

  GrpoStepResult res;
  res.grad.assign(params.layout.total, 0.0);
  const double inv_g = 1.0 / static_cast<double>(group.rollouts.size());
  long total_tokens = 0;
  long excluded = 0;

  for (const Rollout& r : group.rollouts) {
    const std::vector<TokenId> input =
        compose_masked_input(group.prompt, r.completion, r.prompt_mask, vocab.mask_id);
    ForwardCache cache;
    const ForwardOutput out = forward(params, input, &cache);

    const int prompt_len = static_cast<int>(group.prompt.size());
    const int len = static_cast<int>(r.completion.size());
    total_tokens += len;

    std::vector<double> phi_ref;
    if (cfg.kl_beta > 0.0) {
      phi_ref = per_token_logprob(*ref_params, group.prompt, r.completion,
                                  r.prompt_mask, vocab.mask_id);
    }

    const double per_token = inv_g / static_cast<double>(len);
    std::vector<TokenId> targets(input.size(), 0);
    std::vector<double> weights(input.size(), 0.0);
    const double adv = r.advantage;

    for (int i = 0; i < len; ++i) {
      const int pos = prompt_len + i;
      const double phi_theta = out.row(pos)[r.completion[static_cast<size_t>(i)]];
      const double ratio = std::exp(phi_theta - r.phi_old[static_cast<size_t>(i)]);
      if (!std::isfinite(ratio)) {
        ++excluded;
        continue;
      }
      const double clipped = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
      const double surrogate = std::min(ratio * adv, clipped * adv);
      double term = surrogate;
      // Gradient of min(r*A, clip(r)*A) wrt phi: the unclipped branch when
      // it attains the min, zero otherwise (clip is flat where active).
      double coeff = (ratio * adv <= clipped * adv) ? ratio * adv : 0.0;

      if (cfg.kl_beta > 0.0) {
        const double log_rho = phi_ref[static_cast<size_t>(i)] - phi_theta;
        const double rho = std::exp(log_rho);
        if (!std::isfinite(rho)) {
          ++excluded;
          continue;
        }
        term -= cfg.kl_beta * (rho - log_rho - 1.0);
        coeff -= cfg.kl_beta * (1.0 - rho);
      }

      res.objective += per_token * term;
      targets[static_cast<size_t>(pos)] = r.completion[static_cast<size_t>(i)];
      weights[static_cast<size_t>(pos)] = per_token * coeff;
    }

    const std::vector<double> g =
        backward_logprob(params, input, cache, out, targets, weights);
    for (size_t i = 0; i < g.size(); ++i) res.grad[i] += g[i];
  }

  res.excluded_token_frac =
      total_tokens == 0 ? 0.0
                        : static_cast<double>(excluded) / static_cast<double>(total_tokens);
  if (res.excluded_token_frac > 0.05) {
    throw std::runtime_error("grpo_step: more than 5% of tokens excluded");
  }
  return res;
}

RlTrainResult rl_train_loop(const ModelParams& start, const Vocabulary& vocab,
                            std::span<const TaskInstance> dataset, const GrpoConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("rl_train_loop: empty dataset");
  RlTrainResult result;
  result.params = start;
  ModelParams ref = start;
  OptimizerState opt =
      make_optimizer(start.layout.total, cfg.lr, cfg.weight_decay, cfg.clip_norm);
  Rng rng(cfg.seed);

  int step = 0;
  while (step < cfg.steps) {
    PolicySnapshot snapshot{result.params, step};

    std::vector<RolloutGroup> groups;
    for (int b = 0; b < cfg.batch_prompts; ++b) {
      const TaskInstance& inst = dataset[rng.below(dataset.size())];
      RolloutGroup group = sample_group(snapshot, vocab, inst.prompt, cfg, rng);
      compute_rewards(group, inst, vocab, cfg);
      groups.push_back(std::move(group));
    }

    double mean_total = 0.0, mean_ent = 0.0, mean_ind = 0.0, mean_task = 0.0;
    double mean_k = 0.0, mean_block = 0.0;
    int rollouts = 0;
    for (const auto& group : groups) {
      for (const Rollout& r : group.rollouts) {
        mean_total += r.reward.total;
        mean_ent += r.reward.r_ent;
        mean_ind += r.reward.r_ind;
        mean_task += r.reward.r_task;
        mean_k += static_cast<double>(r.blocks.block_count());
        double bs = 0.0;
        for (const auto& s : r.blocks.spans) bs += s.size;
        mean_block += bs / static_cast<double>(r.blocks.block_count());
        ++rollouts;
      }
    }
    mean_total /= rollouts;
    mean_ent /= rollouts;
    mean_ind /= rollouts;
    mean_task /= rollouts;
    mean_k /= rollouts;
    mean_block /= rollouts;

    for (int it = 0; it < cfg.num_iterations && step < cfg.steps; ++it) {
      std::vector<double> grad(result.params.layout.total, 0.0);
      double objective = 0.0;
      double excluded = 0.0;
      const ModelParams* ref_ptr = cfg.kl_beta > 0.0 ? &ref : nullptr;
      for (const auto& group : groups) {
        GrpoStepResult sr = grpo_step(result.params, ref_ptr, group, vocab, cfg);
        objective += sr.objective / static_cast<double>(groups.size());
        excluded += sr.excluded_token_frac / static_cast<double>(groups.size());
        for (size_t i = 0; i < grad.size(); ++i) {
          grad[i] += sr.grad[i] / static_cast<double>(groups.size());
        }
      }
      // Ascent: the optimizer minimises, so feed the negated gradient.
      for (double& g : grad) g = -g;
      optimizer_step(opt, result.params, grad);
      ++step;

      TrainLogRow row;
      row.step = step;
      row.mean_total = mean_total;
      row.mean_r_ent = mean_ent;
      row.mean_r_ind = mean_ind;
      row.mean_r_task = mean_task;
      row.mean_k = mean_k;
      row.mean_block_size = mean_block;
      row.objective = objective;
      row.excluded_token_frac = excluded;
      result.log.push_back(row);

      if (cfg.kl_beta > 0.0 && cfg.ref_sync_steps > 0 && step % cfg.ref_sync_steps == 0) {
        ref = result.params;
      }
    }
  }
  return result;
}

}  // namespace medlab
