#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "medlab/model.hpp"
#include "medlab/rng.hpp"
#include "medlab/sequence.hpp"

namespace medlab {

enum class DecodeMode { kFixed, kDynamic };
enum class Remasking { kLowConfidence, kRandom };

struct DecodeConfig {
  DecodeMode mode = DecodeMode::kDynamic;
  int c = 32;           // fixed-mode block size
  int T = 8;            // denoise steps per block
  int max_window = 128; // prompt + generation window cap
  double temperature = 0.0;  // 0 = greedy
  Remasking remasking = Remasking::kLowConfidence;
  int max_block_cap = 32;  // dynamic provisional span cap
  uint64_t seed = 0;
};

// One decoded block: committed tokens plus per-position entropies taken
// from the forward output of the step t_star at which the block's boundary
// was fixed.
struct BlockResult {
  BlockSpan span;
  std::vector<TokenId> tokens;
  std::vector<double> per_position_entropy;  // nats, span.size entries
  int t_star = 0;
};

struct CommitEvent {
  int block_index = 0;  // k
  int step = 0;         // 1-based within the block
  std::vector<int> positions;  // 1-based window-local
  std::vector<double> confidences;
};

struct DecodeTrace {
  std::vector<BlockResult> blocks;
  std::vector<CommitEvent> commit_log;
  Sequence final_sequence;
  std::vector<double> block_seconds;  // in-memory timing, not serialized
  bool exhausted_without_eos = false;

  // Spans of the decoded blocks as a partition of the generated prefix.
  BlockPartition partition() const;
  // Block entropies (mean of per-position values) in decode order.
  std::vector<double> block_entropies() const;
  // Per-position entropies concatenated across blocks.
  std::vector<double> flat_entropies() const;
};

// Positions (0-based indices into the confidence list) chosen for commit.
// Low-confidence mode keeps the n_commit highest confidences, ties broken
// by lowest index; random mode samples uniformly without replacement.
// n_commit must lie in [1, confidences.size()].
std::vector<int> select_commit(std::span<const double> confidences, int n_commit,
                               Remasking mode, Rng& rng);

// Denoises the masked span in place over at most cfg.T steps, committing
// ceil(remaining/steps_left) tokens per step.
BlockResult decode_block_fixed(const ModelParams& params, const Vocabulary& vocab,
                               Sequence& work, const BlockSpan& span,
                               const DecodeConfig& cfg, Rng& rng,
                               DecodeTrace* trace = nullptr);

// Provisional span of min(remaining, max_block_cap); after every step the
// committed tokens are scanned for the indicator and the block truncates at
// its first appearance (overshoot is re-masked for the next block). Without
// an indicator the full provisional span is the block.
BlockResult decode_block_dynamic(const ModelParams& params, const Vocabulary& vocab,
                                 Sequence& work, int block_start_local,
                                 int block_index, const DecodeConfig& cfg, Rng& rng,
                                 DecodeTrace* trace = nullptr);

struct GenerateResult {
  Sequence sequence;
  DecodeTrace trace;
};

// Iterates blocks until a committed EOS or window exhaustion; the trace's
// spans always form a valid partition of the generated prefix.
GenerateResult generate(const ModelParams& params, const Vocabulary& vocab,
                        std::span<const TokenId> prompt, const DecodeConfig& cfg,
                        Rng& rng);

}  // namespace medlab
