#include "medlab/training.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "medlab/tasks.hpp"

namespace medlab {
namespace {

Sequence make_sequence(int prompt_len, std::vector<TokenId> tokens) {
  Sequence s;
  s.prompt_len = prompt_len;
  s.tokens = std::move(tokens);
  return s;
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(std::max(std::abs(a), std::abs(b)), 1e-3);
}

TEST(Corrupt, FullMaskingAtTOne) {
  Rng rng(1);
  const Sequence x0 = make_sequence(2, {5, 6, 7, 8, 9, 10});
  const MaskingSample s = corrupt(x0, 1.0, /*mask_id=*/1, rng);
  EXPECT_EQ(s.masked_positions.size(), 4u);  // every generation position
  for (int i = 2; i < 6; ++i) EXPECT_EQ(s.xt.tokens[static_cast<size_t>(i)], 1);
  EXPECT_EQ(s.xt.tokens[0], 5);  // prompt untouched
  EXPECT_EQ(s.xt.tokens[1], 6);
}

TEST(Corrupt, VanishingRateMasksAlmostNothing) {
  Rng rng(2);
  Sequence x0 = make_sequence(0, std::vector<TokenId>(100000, 7));
  const MaskingSample s = corrupt(x0, 1e-6, 1, rng);
  EXPECT_LT(s.masked_positions.size(), 10u);
}

TEST(Corrupt, RejectsOutOfRangeT) {
  Rng rng(3);
  const Sequence x0 = make_sequence(0, {5, 6});
  EXPECT_THROW(corrupt(x0, 0.0, 1, rng), std::invalid_argument);
  EXPECT_THROW(corrupt(x0, -0.2, 1, rng), std::invalid_argument);
  EXPECT_THROW(corrupt(x0, 1.01, 1, rng), std::invalid_argument);
}

// Statistical oracle: the mean masked count over many draws concentrates
// at window * t with sigma_mean = sqrt(window * t * (1-t) / draws).
TEST(Corrupt, MaskedCountMatchesBinomialOracle) {
  Rng rng(4);
  Sequence x0 = make_sequence(0, std::vector<TokenId>(1000, 7));
  const int draws = 10000;
  double total = 0.0;
  for (int i = 0; i < draws; ++i) {
    total += static_cast<double>(corrupt(x0, 0.5, 1, rng).masked_positions.size());
  }
  const double mean = total / draws;
  const double sigma_mean = std::sqrt(1000 * 0.25) / std::sqrt(static_cast<double>(draws));
  EXPECT_NEAR(mean, 500.0, 3.0 * sigma_mean);
}

TEST(DenoisingLoss, PerfectPredictorScoresZero) {
  // A distribution with probability 1 on every true token: logprob 0 there.
  ForwardOutput out;
  out.seq_len = 3;
  out.vocab_size = 4;
  out.logprob.assign(12, -1e9);
  MaskingSample s;
  s.x0 = make_sequence(0, {2, 0, 3});
  s.t = 0.5;
  s.xt = s.x0;
  s.masked_positions = {0, 1, 2};
  for (int i = 0; i < 3; ++i) {
    out.logprob[static_cast<size_t>(i) * 4 + s.x0.tokens[static_cast<size_t>(i)]] = 0.0;
  }
  EXPECT_DOUBLE_EQ(sample_loss_from_output(out, s), 0.0);
}

TEST(DenoisingLoss, UniformPredictorClosedForm) {
  Rng rng(5);
  ModelConfig cfg;
  cfg.vocab_size = 12;
  cfg.d_model = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.max_len = 16;
  const ModelParams params = init_params(cfg, rng);  // zero output projection

  Sequence x0 = make_sequence(2, {3, 4, 5, 6, 7, 8, 9, 10});
  Rng crng(6);
  const double t = 0.5;
  MaskingSample s = corrupt(x0, t, 1, crng);
  ASSERT_FALSE(s.masked_positions.empty());
  const double m = static_cast<double>(s.masked_positions.size());
  const LossGrad lg = denoising_loss(params, std::vector<MaskingSample>{s});
  EXPECT_NEAR(lg.loss, (1.0 / t) * m * std::log(12.0), 1e-9);
}

TEST(DenoisingLoss, RejectsEmptyMaskedSet) {
  Rng rng(7);
  ModelConfig cfg;
  cfg.vocab_size = 8;
  cfg.d_model = 4;
  cfg.n_layers = 1;
  cfg.n_heads = 1;
  cfg.d_ff = 8;
  cfg.max_len = 8;
  const ModelParams params = init_params(cfg, rng);
  MaskingSample s;
  s.x0 = make_sequence(0, {1, 2, 3});
  s.t = 0.5;
  s.xt = s.x0;
  EXPECT_THROW(denoising_loss(params, std::vector<MaskingSample>{s}), std::invalid_argument);
}

// The spec'd gradient oracle: tiny model (d_model 8, 1 layer, vocab 12,
// L = 16), central differences h = 1e-5, relative error < 1e-4 everywhere.
TEST(DenoisingLoss, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  ModelConfig cfg;
  cfg.vocab_size = 12;
  cfg.d_model = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.max_len = 16;
  ModelParams params = init_params(cfg, rng);
  for (size_t i = params.layout.w_out; i < params.layout.total; ++i) {
    params.flat[i] = 0.1 * rng.normal();
  }

  std::vector<TokenId> toks(16);
  for (auto& t : toks) t = static_cast<TokenId>(rng.below(12));
  Sequence x0 = make_sequence(4, toks);
  Rng crng(9);
  std::vector<MaskingSample> batch;
  batch.push_back(corrupt(x0, 0.7, 1, crng));
  batch.push_back(corrupt(x0, 0.4, 1, crng));
  for (const auto& s : batch) ASSERT_FALSE(s.masked_positions.empty());

  const LossGrad lg = denoising_loss(params, batch);
  const double h = 1e-5;
  double worst = 0.0;
  for (size_t i = 0; i < params.layout.total; ++i) {
    const double saved = params.flat[i];
    params.flat[i] = saved + h;
    const double plus = denoising_loss(params, batch).loss;
    params.flat[i] = saved - h;
    const double minus = denoising_loss(params, batch).loss;
    params.flat[i] = saved;
    worst = std::max(worst, relative_error(lg.grad[i], (plus - minus) / (2.0 * h)));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Optimizer, ZeroGradientZeroDecayLeavesParamsAlone) {
  Rng rng(10);
  ModelConfig cfg;
  cfg.vocab_size = 6;
  cfg.d_model = 4;
  cfg.n_layers = 1;
  cfg.n_heads = 1;
  cfg.d_ff = 8;
  cfg.max_len = 8;
  ModelParams params = init_params(cfg, rng);
  const std::vector<double> before = params.flat;
  OptimizerState opt = make_optimizer(params.layout.total, 1e-3, 0.0, 0.0);
  const std::vector<double> zeros(params.layout.total, 0.0);
  optimizer_step(opt, params, zeros);
  EXPECT_EQ(params.flat, before);
}

TEST(Optimizer, ConstantGradientStepApproachesLearningRate) {
  Rng rng(11);
  ModelConfig cfg;
  cfg.vocab_size = 6;
  cfg.d_model = 4;
  cfg.n_layers = 1;
  cfg.n_heads = 1;
  cfg.d_ff = 8;
  cfg.max_len = 8;
  ModelParams params = init_params(cfg, rng);
  const double lr = 1e-3;
  OptimizerState opt = make_optimizer(params.layout.total, lr, 0.0, 0.0);
  std::vector<double> grad(params.layout.total, 0.017);
  std::vector<double> prev = params.flat;
  double step_magnitude = 0.0;
  for (int i = 0; i < 500; ++i) {
    prev = params.flat;
    optimizer_step(opt, params, grad);
    step_magnitude = std::abs(params.flat[0] - prev[0]);
  }
  EXPECT_NEAR(step_magnitude, lr, lr * 0.01);
}

TEST(Optimizer, ClipsGradientNormToThreshold) {
  Rng rng(12);
  ModelConfig cfg;
  cfg.vocab_size = 6;
  cfg.d_model = 4;
  cfg.n_layers = 1;
  cfg.n_heads = 1;
  cfg.d_ff = 8;
  cfg.max_len = 8;
  ModelParams params = init_params(cfg, rng);
  OptimizerState opt = make_optimizer(params.layout.total, 1e-3, 0.0, 0.2);
  std::vector<double> grad(params.layout.total, 0.0);
  grad[0] = 6.0;
  grad[1] = 8.0;  // norm 10
  optimizer_step(opt, params, grad);
  // First-step moment m = (1 - beta1) * applied gradient.
  double applied_norm_sq = 0.0;
  for (double m : opt.m) {
    const double g = m / (1.0 - opt.beta1);
    applied_norm_sq += g * g;
  }
  EXPECT_NEAR(std::sqrt(applied_norm_sq), 0.2, 1e-12);
}

TEST(Optimizer, RejectsNonFiniteGradientWithCoordinate) {
  Rng rng(13);
  ModelConfig cfg;
  cfg.vocab_size = 6;
  cfg.d_model = 4;
  cfg.n_layers = 1;
  cfg.n_heads = 1;
  cfg.d_ff = 8;
  cfg.max_len = 8;
  ModelParams params = init_params(cfg, rng);
  OptimizerState opt = make_optimizer(params.layout.total, 1e-3, 0.0, 0.0);
  std::vector<double> grad(params.layout.total, 0.0);
  grad[17] = std::nan("");
  try {
    optimizer_step(opt, params, grad);
    FAIL() << "expected rejection";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
  }
}

TEST(PerTokenLogProb, UnmaskedPromptIsDeterministic) {
  Rng rng(14);
  ModelConfig cfg;
  cfg.vocab_size = 10;
  cfg.d_model = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.max_len = 24;
  const ModelParams params = init_params(cfg, rng);
  const std::vector<TokenId> prompt = {2, 3, 4, 5};
  const std::vector<TokenId> completion = {6, 7, 8};
  Rng r1(20), r2(21);
  const LogProbResult a = per_token_logprob(params, prompt, completion, 0.0, 1, r1);
  const LogProbResult b = per_token_logprob(params, prompt, completion, 0.0, 1, r2);
  EXPECT_EQ(a.phi, b.phi);
  for (uint8_t bit : a.prompt_mask) EXPECT_EQ(bit, 0);
}

TEST(PerTokenLogProb, IdenticalPoliciesGiveUnitRatio) {
  Rng rng(15);
  ModelConfig cfg;
  cfg.vocab_size = 10;
  cfg.d_model = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.max_len = 24;
  ModelParams params = init_params(cfg, rng);
  for (size_t i = params.layout.w_out; i < params.layout.total; ++i) {
    params.flat[i] = 0.2 * rng.normal();
  }
  const std::vector<TokenId> prompt = {2, 3, 4, 5, 6};
  const std::vector<TokenId> completion = {7, 8, 9, 1, 0};
  Rng draw(30);
  const LogProbResult old_phi =
      per_token_logprob(params, prompt, completion, 0.15, 1, draw);
  const std::vector<double> new_phi =
      per_token_logprob(params, prompt, completion, old_phi.prompt_mask, 1);
  ASSERT_EQ(new_phi.size(), old_phi.phi.size());
  for (size_t i = 0; i < new_phi.size(); ++i) {
    EXPECT_EQ(std::exp(new_phi[i] - old_phi.phi[i]), 1.0);
  }
}

TEST(Pretrain, MemorizesARepeatedSequence) {
  const Vocabulary vocab = default_vocabulary();
  ModelConfig cfg;
  cfg.vocab_size = vocab.size;
  cfg.d_model = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 32;
  cfg.max_len = 16;

  std::vector<TokenId> toks = {tok::kN,      tok::kColon,   digit_token(4), tok::kPlus,
                               digit_token(3), tok::kEquals, digit_token(7), tok::kBlock,
                               tok::kA,      tok::kColon,   digit_token(7), tok::kEos};
  Sequence seq;
  seq.prompt_len = 2;
  seq.tokens = toks;

  PretrainConfig pc;
  pc.steps = 2000;
  pc.batch_size = 4;
  pc.lr = 3e-3;
  pc.t_min = 0.25;
  pc.seed = 7;
  const PretrainResult res = pretrain(cfg, vocab, std::vector<Sequence>{seq}, pc);

  // Step-0 loss sits at the fully-masked uniform baseline (scaled by the
  // masked fraction of the window).
  const double first = res.loss_curve.front().second;
  EXPECT_GT(first, 0.5 * std::log(static_cast<double>(vocab.size)) *
                       static_cast<double>(seq.window_len()));
  // Per-token loss after training: evaluate with every position masked.
  Rng eval_rng(1);
  MaskingSample full = corrupt(seq, 1.0, vocab.mask_id, eval_rng);
  const LossGrad lg = denoising_loss(res.params, std::vector<MaskingSample>{full});
  EXPECT_LT(lg.loss / static_cast<double>(seq.window_len()), 0.1);

  // Smoothed curve (window 50) never increases.
  std::vector<double> losses;
  for (const auto& [step, loss] : res.loss_curve) losses.push_back(loss);
  std::vector<double> smooth;
  for (size_t i = 0; i + 50 <= losses.size(); ++i) {
    double sum = 0.0;
    for (size_t j = i; j < i + 50; ++j) sum += losses[j];
    smooth.push_back(sum / 50.0);
  }
  // Non-increasing within stochastic noise: the smoothed curve never rises
  // by more than 1% of its current level, and overall it collapses.
  for (size_t i = 1; i < smooth.size(); ++i) {
    EXPECT_LE(smooth[i], smooth[i - 1] * 1.01 + 1e-9) << "at smoothed index " << i;
  }
  EXPECT_LT(smooth.back(), 0.01 * smooth.front());
}

TEST(Pretrain, SameSeedSameParams) {
  const Vocabulary vocab = default_vocabulary();
  ModelConfig cfg;
  cfg.vocab_size = vocab.size;
  cfg.d_model = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.max_len = 16;
  Sequence seq;
  seq.prompt_len = 1;
  seq.tokens = {tok::kN, digit_token(1), digit_token(2), tok::kEos, tok::kPad, tok::kPad};

  PretrainConfig pc;
  pc.steps = 50;
  pc.batch_size = 2;
  pc.seed = 42;
  const PretrainResult a = pretrain(cfg, vocab, std::vector<Sequence>{seq}, pc);
  const PretrainResult b = pretrain(cfg, vocab, std::vector<Sequence>{seq}, pc);
  EXPECT_EQ(a.params.flat, b.params.flat);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
}

}  // namespace
}  // namespace medlab
