#include "medlab/model.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace medlab {
namespace {

ModelConfig tiny_config(Rng& rng) {
  ModelConfig cfg;
  cfg.d_model = rng.bernoulli(0.5) ? 4 : 8;
  cfg.n_heads = rng.bernoulli(0.5) ? 1 : 2;
  cfg.n_layers = rng.bernoulli(0.5) ? 1 : 2;
  cfg.vocab_size = 6 + static_cast<int>(rng.below(7));
  cfg.d_ff = rng.bernoulli(0.5) ? 8 : 16;
  cfg.max_len = 16;
  return cfg;
}

std::vector<TokenId> random_tokens(const ModelConfig& cfg, int len, Rng& rng) {
  std::vector<TokenId> toks(static_cast<size_t>(len));
  for (auto& t : toks) t = static_cast<TokenId>(rng.below(static_cast<uint64_t>(cfg.vocab_size)));
  return toks;
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(std::max(std::abs(a), std::abs(b)), 1e-3);
}

TEST(Forward, ZeroOutputProjectionIsUniform) {
  Rng rng(1);
  ModelConfig cfg;
  cfg.vocab_size = 32;
  cfg.d_model = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 32;
  cfg.max_len = 32;
  const ModelParams params = init_params(cfg, rng);
  const auto tokens = random_tokens(cfg, 8, rng);
  const ForwardOutput out = forward(params, tokens);
  const double expected = -std::log(32.0);
  for (int i = 0; i < out.seq_len; ++i) {
    for (double lp : out.row(i)) EXPECT_NEAR(lp, expected, 1e-12);
    EXPECT_NEAR(entropy_nats(out.row(i)), std::log(32.0), 1e-12);
  }
}

TEST(Forward, RowsAreNormalizedForRandomModels) {
  Rng rng(2);
  int rows_checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    ModelConfig cfg = tiny_config(rng);
    ModelParams params = init_params(cfg, rng);
    // Random output projection too, so normalization is non-trivial.
    for (size_t i = params.layout.w_out; i < params.layout.total; ++i) {
      params.flat[i] = rng.normal();
    }
    const int len = 2 + static_cast<int>(rng.below(10));
    const auto tokens = random_tokens(cfg, len, rng);
    const ForwardOutput out = forward(params, tokens);
    for (int i = 0; i < out.seq_len; ++i) {
      double mass = 0.0;
      for (double lp : out.row(i)) mass += std::exp(lp);
      EXPECT_NEAR(mass, 1.0, 1e-6);
      ++rows_checked;
    }
  }
  EXPECT_GE(rows_checked, 1000);
}

TEST(Forward, DeterministicGivenParamsAndInput) {
  Rng rng(3);
  const ModelConfig cfg = tiny_config(rng);
  const ModelParams params = init_params(cfg, rng);
  const auto tokens = random_tokens(cfg, 7, rng);
  const ForwardOutput a = forward(params, tokens);
  const ForwardOutput b = forward(params, tokens);
  ASSERT_EQ(a.logprob.size(), b.logprob.size());
  for (size_t i = 0; i < a.logprob.size(); ++i) EXPECT_EQ(a.logprob[i], b.logprob[i]);
}

TEST(Forward, ZeroedPositionalTableMakesMaskedPositionsInterchangeable) {
  Rng rng(4);
  ModelConfig cfg = tiny_config(rng);
  ModelParams params = init_params(cfg, rng);
  for (size_t i = 0; i < params.layout.total; ++i) {
    if (i >= params.layout.w_out) params.flat[i] = rng.normal();
  }
  const size_t pos_begin = params.layout.positional;
  const size_t pos_len = static_cast<size_t>(cfg.max_len) * cfg.d_model;
  std::fill_n(params.flat.begin() + static_cast<long>(pos_begin), pos_len, 0.0);

  const TokenId mask = 0;
  std::vector<TokenId> tokens = random_tokens(cfg, 8, rng);
  tokens[2] = mask;
  tokens[5] = mask;
  const ForwardOutput out = forward(params, tokens);
  // Without position information, the two masked positions carry identical
  // content and must receive identical predictions.
  for (int v = 0; v < cfg.vocab_size; ++v) {
    EXPECT_NEAR(out.row(2)[v], out.row(5)[v], 1e-9);
  }
}

TEST(Forward, RejectsBadInputs) {
  Rng rng(5);
  const ModelConfig cfg = tiny_config(rng);
  const ModelParams params = init_params(cfg, rng);
  EXPECT_THROW(forward(params, std::vector<TokenId>{}), std::invalid_argument);
  EXPECT_THROW(forward(params, random_tokens(cfg, cfg.max_len + 1, rng)),
               std::invalid_argument);
  std::vector<TokenId> bad = {0, static_cast<TokenId>(cfg.vocab_size)};
  EXPECT_THROW(forward(params, bad), std::invalid_argument);
}

// Central finite differences over every coordinate of a random objective
// sum_i w_i * logprob[i][target_i].
TEST(Backward, MatchesFiniteDifferences) {
  Rng rng(6);
  for (int trial = 0; trial < 8; ++trial) {
    const ModelConfig cfg = tiny_config(rng);
    ModelParams params = init_params(cfg, rng);
    for (size_t i = params.layout.w_out; i < params.layout.total; ++i) {
      params.flat[i] = 0.1 * rng.normal();
    }
    const int len = 3 + static_cast<int>(rng.below(6));
    const auto tokens = random_tokens(cfg, len, rng);
    const auto targets = random_tokens(cfg, len, rng);
    std::vector<double> weights(static_cast<size_t>(len));
    for (auto& w : weights) w = rng.uniform(-2.0, 2.0);

    ForwardCache cache;
    const ForwardOutput out = forward(params, tokens, &cache);
    const std::vector<double> grad =
        backward_logprob(params, tokens, cache, out, targets, weights);

    auto objective = [&]() {
      const ForwardOutput o = forward(params, tokens);
      double s = 0.0;
      for (int i = 0; i < len; ++i) {
        s += weights[static_cast<size_t>(i)] * o.row(i)[targets[static_cast<size_t>(i)]];
      }
      return s;
    };

    const double h = 1e-5;
    double worst = 0.0;
    for (size_t i = 0; i < params.layout.total; ++i) {
      const double saved = params.flat[i];
      params.flat[i] = saved + h;
      const double plus = objective();
      params.flat[i] = saved - h;
      const double minus = objective();
      params.flat[i] = saved;
      const double fd = (plus - minus) / (2.0 * h);
      worst = std::max(worst, relative_error(grad[i], fd));
    }
    EXPECT_LT(worst, 1e-4) << "config trial " << trial;
  }
}

}  // namespace
}  // namespace medlab
