#include <benchmark/benchmark.h>

#include "medlab/training.hpp"

namespace {

using namespace medlab;

ModelParams bench_params(int d_model, int max_len) {
  ModelConfig cfg;
  cfg.vocab_size = 32;
  cfg.d_model = d_model;
  cfg.n_layers = 2;
  cfg.n_heads = 4;
  cfg.d_ff = d_model * 2;
  cfg.max_len = max_len;
  Rng rng(11);
  return init_params(cfg, rng);
}

void BM_Forward(benchmark::State& state) {
  const int len = static_cast<int>(state.range(0));
  const ModelParams params = bench_params(48, len);
  Rng rng(3);
  std::vector<TokenId> tokens(static_cast<size_t>(len));
  for (auto& t : tokens) t = static_cast<TokenId>(rng.below(32));
  for (auto _ : state) {
    const ForwardOutput out = forward(params, tokens);
    benchmark::DoNotOptimize(out.logprob.data());
  }
  state.SetItemsProcessed(state.iterations() * len);
}

void BM_LossWithGradient(benchmark::State& state) {
  const int len = static_cast<int>(state.range(0));
  const ModelParams params = bench_params(48, len);
  Rng rng(4);
  Sequence x0;
  x0.prompt_len = 8;
  x0.tokens.resize(static_cast<size_t>(len));
  for (auto& t : x0.tokens) t = static_cast<TokenId>(rng.below(32));
  const MaskingSample sample = corrupt(x0, 0.6, 1, rng);
  const std::vector<MaskingSample> batch = {sample};
  for (auto _ : state) {
    const LossGrad lg = denoising_loss(params, batch);
    benchmark::DoNotOptimize(lg.grad.data());
  }
}

}  // namespace

BENCHMARK(BM_Forward)->Arg(32)->Arg(64);
BENCHMARK(BM_LossWithGradient)->Arg(32)->Arg(64);
