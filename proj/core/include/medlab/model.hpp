#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "medlab/rng.hpp"
#include "medlab/vocab.hpp"

namespace medlab {

// Bidirectional (no causal mask) pre-LN transformer denoiser. Everything is
// double precision so the finite-difference oracle applies to the same
// build that trains.
struct ModelConfig {
  int vocab_size = 32;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 256;
  int max_len = 128;

  int head_dim() const { return d_model / n_heads; }
};

// Offsets of each tensor inside the flat parameter vector. Weight matrices
// are row-major (in_dim x out_dim).
struct ParamLayout {
  struct Layer {
    size_t ln1_g, ln1_b;
    size_t wq, bq, wk, bk, wv, bv, wo, bo;
    size_t ln2_g, ln2_b;
    size_t w_ff1, b_ff1, w_ff2, b_ff2;
  };
  size_t embedding = 0;   // vocab x d
  size_t positional = 0;  // max_len x d
  std::vector<Layer> layers;
  size_t ln_f_g = 0, ln_f_b = 0;
  size_t w_out = 0, b_out = 0;  // d x vocab, vocab
  size_t total = 0;

  static ParamLayout make(const ModelConfig& cfg);
};

struct ModelParams {
  ModelConfig config;
  ParamLayout layout;
  std::vector<double> flat;

  double* at(size_t offset) { return flat.data() + offset; }
  const double* at(size_t offset) const { return flat.data() + offset; }
};

// Output projection starts at zero so an untrained model predicts the
// uniform distribution; the rest is N(0, 0.02), layer norms at identity.
ModelParams init_params(const ModelConfig& cfg, Rng& rng);

// Per-position log-probability vectors; each row exponentiates and sums
// to 1 within 1e-6.
struct ForwardOutput {
  int seq_len = 0;
  int vocab_size = 0;
  std::vector<double> logprob;  // seq_len x vocab, row-major

  std::span<const double> row(int pos) const {
    return std::span<const double>(logprob).subspan(
        static_cast<size_t>(pos) * vocab_size, static_cast<size_t>(vocab_size));
  }
};

// Activations retained for the backward pass.
struct ForwardCache {
  struct Layer {
    std::vector<double> ln1_xhat, ln1_rstd, ln1_out;
    std::vector<double> q, k, v;
    std::vector<double> probs;  // heads x L x L
    std::vector<double> ctx;
    std::vector<double> resid1;
    std::vector<double> ln2_xhat, ln2_rstd, ln2_out;
    std::vector<double> ff_pre, ff_act;
    std::vector<double> resid2;
  };
  int seq_len = 0;
  std::vector<double> x0;
  std::vector<Layer> layers;
  std::vector<double> lnf_xhat, lnf_rstd, lnf_out;
};

// Full bidirectional attention over the whole input; deterministic given
// params and tokens. Throws when the input is empty, exceeds max_len, or
// contains an id outside the vocabulary.
ForwardOutput forward(const ModelParams& params, std::span<const TokenId> tokens,
                      ForwardCache* cache = nullptr);

// Gradient of sum_i weights[i] * logprob[i][targets[i]] with respect to the
// flat parameter vector. Positions with weight 0 contribute nothing.
std::vector<double> backward_logprob(const ModelParams& params,
                                     std::span<const TokenId> tokens,
                                     const ForwardCache& cache,
                                     const ForwardOutput& output,
                                     std::span<const TokenId> targets,
                                     std::span<const double> weights);

// Shannon entropy in nats of one log-probability row.
double entropy_nats(std::span<const double> logprob_row);

}  // namespace medlab
