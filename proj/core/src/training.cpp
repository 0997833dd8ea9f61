#include "medlab/training.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace medlab {

MaskingSample corrupt(const Sequence& x0, double t, TokenId mask_id, Rng& rng) {
  if (!(t > 0.0) || t > 1.0) {
    throw std::invalid_argument("corrupt: t must lie in (0, 1]");
  }
  MaskingSample s;
  s.x0 = x0;
  s.t = t;
  s.xt = x0;
  for (int i = x0.prompt_len; i < x0.size(); ++i) {
    if (rng.bernoulli(t)) {
      s.xt.tokens[static_cast<size_t>(i)] = mask_id;
      s.masked_positions.push_back(i);
    }
  }
  return s;
}

double sample_loss_from_output(const ForwardOutput& out, const MaskingSample& sample) {
  double sum = 0.0;
  for (int pos : sample.masked_positions) {
    sum += out.row(pos)[sample.x0.tokens[static_cast<size_t>(pos)]];
  }
  return -sum / sample.t;
}

LossGrad denoising_loss(const ModelParams& params, std::span<const MaskingSample> batch) {
  if (batch.empty()) throw std::invalid_argument("denoising_loss: empty batch");
  for (const auto& s : batch) {
    if (s.masked_positions.empty()) {
      throw std::invalid_argument("denoising_loss: sample with empty masked set");
    }
  }
  LossGrad out;
  out.grad.assign(params.layout.total, 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    ForwardCache cache;
    const ForwardOutput fwd = forward(params, s.xt.tokens, &cache);
    out.loss += inv_b * sample_loss_from_output(fwd, s);

    // d loss / d logprob(x0_i) = -1 / (B * t) at masked positions.
    const int L = s.xt.size();
    std::vector<double> weights(static_cast<size_t>(L), 0.0);
    std::vector<TokenId> targets(s.x0.tokens);
    const double w = -inv_b / s.t;
    for (int pos : s.masked_positions) weights[static_cast<size_t>(pos)] = w;
    const std::vector<double> g =
        backward_logprob(params, s.xt.tokens, cache, fwd, targets, weights);
    for (size_t i = 0; i < g.size(); ++i) out.grad[i] += g[i];
  }
  if (!std::isfinite(out.loss)) throw std::runtime_error("denoising_loss: non-finite loss");
  return out;
}

OptimizerState make_optimizer(size_t n_params, double lr, double weight_decay,
                              double clip_norm) {
  OptimizerState opt;
  opt.lr = lr;
  opt.weight_decay = weight_decay;
  opt.clip_norm = clip_norm;
  opt.m.assign(n_params, 0.0);
  opt.v.assign(n_params, 0.0);
  return opt;
}

void optimizer_step(OptimizerState& opt, ModelParams& params,
                    std::span<const double> grad) {
  if (grad.size() != params.flat.size() || opt.m.size() != grad.size()) {
    throw std::invalid_argument("optimizer_step: shape mismatch");
  }
  double norm_sq = 0.0;
  for (size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw std::runtime_error("optimizer_step: non-finite gradient at coordinate " +
                               std::to_string(i));
    }
    norm_sq += grad[i] * grad[i];
  }
  const double norm = std::sqrt(norm_sq);
  const double scale =
      (opt.clip_norm > 0.0 && norm > opt.clip_norm) ? opt.clip_norm / norm : 1.0;

  opt.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i] * scale;
    opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
    opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g * g;
    const double mhat = opt.m[i] / bc1;
    const double vhat = opt.v[i] / bc2;
    params.flat[i] -= opt.lr * (mhat / (std::sqrt(vhat) + opt.eps) +
                                opt.weight_decay * params.flat[i]);
  }
}

std::vector<uint8_t> draw_prompt_mask(int prompt_len, double p_mask, Rng& rng) {
  if (p_mask < 0.0 || p_mask >= 1.0) {
    throw std::invalid_argument("draw_prompt_mask: p_mask must lie in [0, 1)");
  }
  std::vector<uint8_t> pattern(static_cast<size_t>(prompt_len), 0);
  for (auto& bit : pattern) bit = rng.bernoulli(p_mask) ? 1 : 0;
  return pattern;
}

std::vector<TokenId> compose_masked_input(std::span<const TokenId> prompt,
                                          std::span<const TokenId> completion,
                                          std::span<const uint8_t> prompt_mask,
                                          TokenId mask_id) {
  if (prompt_mask.size() != prompt.size()) {
    throw std::invalid_argument("compose_masked_input: pattern length mismatch");
  }
  std::vector<TokenId> input;
  input.reserve(prompt.size() + completion.size());
  for (size_t i = 0; i < prompt.size(); ++i) {
    input.push_back(prompt_mask[i] ? mask_id : prompt[i]);
  }
  input.insert(input.end(), completion.size(), mask_id);
  return input;
}

LogProbResult per_token_logprob(const ModelParams& params,
                                std::span<const TokenId> prompt,
                                std::span<const TokenId> completion, double p_mask,
                                TokenId mask_id, Rng& rng) {
  LogProbResult res;
  res.prompt_mask = draw_prompt_mask(static_cast<int>(prompt.size()), p_mask, rng);
  res.phi = per_token_logprob(params, prompt, completion, res.prompt_mask, mask_id);
  return res;
}

std::vector<double> per_token_logprob(const ModelParams& params,
                                      std::span<const TokenId> prompt,
                                      std::span<const TokenId> completion,
                                      std::span<const uint8_t> prompt_mask,
                                      TokenId mask_id) {
  const std::vector<TokenId> input =
      compose_masked_input(prompt, completion, prompt_mask, mask_id);
  const ForwardOutput out = forward(params, input);
  std::vector<double> phi(completion.size(), 0.0);
  for (size_t i = 0; i < completion.size(); ++i) {
    phi[i] = out.row(static_cast<int>(prompt.size() + i))[completion[i]];
  }
  return phi;
}

PretrainResult pretrain(const ModelConfig& model_cfg, const Vocabulary& vocab,
                        std::span<const Sequence> corpus, const PretrainConfig& cfg) {
  if (corpus.empty()) throw std::invalid_argument("pretrain: empty corpus");
  Rng rng(cfg.seed);
  PretrainResult result;
  result.params = init_params(model_cfg, rng);
  OptimizerState opt =
      make_optimizer(result.params.layout.total, cfg.lr, cfg.weight_decay, cfg.clip_norm);

  std::vector<MaskingSample> batch;
  for (int step = 0; step < cfg.steps; ++step) {
    batch.clear();
    while (static_cast<int>(batch.size()) < cfg.batch_size) {
      const Sequence& x0 = corpus[rng.below(corpus.size())];
      const double t = rng.uniform(cfg.t_min, 1.0);
      MaskingSample s = corrupt(x0, t, vocab.mask_id, rng);
      // Bernoulli masking can come up empty; redraw so every sample
      // carries gradient signal.
      if (s.masked_positions.empty()) continue;
      batch.push_back(std::move(s));
    }
    LossGrad lg = denoising_loss(result.params, batch);
    optimizer_step(opt, result.params, lg.grad);
    result.loss_curve.emplace_back(step, lg.loss);
  }
  return result;
}

}  // namespace medlab
