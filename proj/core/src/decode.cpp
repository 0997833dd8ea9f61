#include "medlab/decode.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace medlab {

BlockPartition DecodeTrace::partition() const {
  BlockPartition p;
  for (const auto& b : blocks) {
    p.spans.push_back(b.span);
    p.window_len = b.span.end();
  }
  return p;
}

std::vector<double> DecodeTrace::block_entropies() const {
  std::vector<double> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) {
    double sum = 0.0;
    for (double h : b.per_position_entropy) sum += h;
    out.push_back(sum / static_cast<double>(b.per_position_entropy.size()));
  }
  return out;
}

std::vector<double> DecodeTrace::flat_entropies() const {
  std::vector<double> out;
  for (const auto& b : blocks) {
    out.insert(out.end(), b.per_position_entropy.begin(), b.per_position_entropy.end());
  }
  return out;
}

std::vector<int> select_commit(std::span<const double> confidences, int n_commit,
                               Remasking mode, Rng& rng) {
  const int n = static_cast<int>(confidences.size());
  if (n_commit < 1) throw std::invalid_argument("select_commit: n_commit must be >= 1");
  if (n_commit > n) throw std::invalid_argument("select_commit: n_commit exceeds candidates");

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  if (mode == Remasking::kLowConfidence) {
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return confidences[static_cast<size_t>(a)] > confidences[static_cast<size_t>(b)];
    });
  } else {
    // Fisher-Yates prefix shuffle.
    for (int i = 0; i < n_commit; ++i) {
      const int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(n - i)));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
  }
  std::vector<int> picked(order.begin(), order.begin() + n_commit);
  std::sort(picked.begin(), picked.end());
  return picked;
}

namespace {

struct Prediction {
  TokenId candidate = 0;
  double confidence = 0.0;  // max model probability over non-mask tokens
};

// Candidate for one masked position. The mask token is excluded from the
// candidate set (a committed mask would be indistinguishable from an
// uncommitted position); entropies elsewhere still use the full
// distribution.
Prediction predict_position(std::span<const double> logprob_row, TokenId mask_id,
                            double temperature, Rng& rng) {
  const int v = static_cast<int>(logprob_row.size());
  Prediction pred;
  if (temperature <= 0.0) {
    int best = -1;
    double best_lp = 0.0;
    for (int j = 0; j < v; ++j) {
      if (j == mask_id) continue;
      if (best < 0 || logprob_row[static_cast<size_t>(j)] > best_lp) {
        best = j;
        best_lp = logprob_row[static_cast<size_t>(j)];
      }
    }
    pred.candidate = best;
    pred.confidence = std::exp(best_lp);
    return pred;
  }
  std::vector<double> probs(static_cast<size_t>(v), 0.0);
  double best_raw = 0.0;
  for (int j = 0; j < v; ++j) {
    if (j == mask_id) continue;
    probs[static_cast<size_t>(j)] = std::exp(logprob_row[static_cast<size_t>(j)] / temperature);
    best_raw = std::max(best_raw, std::exp(logprob_row[static_cast<size_t>(j)]));
  }
  pred.candidate = static_cast<TokenId>(rng.categorical(probs));
  pred.confidence = best_raw;
  return pred;
}

std::vector<int> masked_locals(const Sequence& work, int lo, int hi, TokenId mask_id) {
  std::vector<int> out;
  for (int local = lo; local <= hi; ++local) {
    if (work.tokens[static_cast<size_t>(work.global(local))] == mask_id) out.push_back(local);
  }
  return out;
}

int commits_this_step(int remaining, int steps_left) {
  return (remaining + steps_left - 1) / steps_left;
}

void log_commits(DecodeTrace* trace, int block_index, int step,
                 const std::vector<int>& locals, const std::vector<double>& confs) {
  if (!trace) return;
  CommitEvent ev;
  ev.block_index = block_index;
  ev.step = step;
  ev.positions = locals;
  ev.confidences = confs;
  trace->commit_log.push_back(std::move(ev));
}

std::vector<double> span_entropies(const ForwardOutput& out, const Sequence& work,
                                   int start_local, int size) {
  std::vector<double> h(static_cast<size_t>(size), 0.0);
  for (int j = 0; j < size; ++j) {
    h[static_cast<size_t>(j)] = entropy_nats(out.row(work.global(start_local + j)));
  }
  return h;
}

}  // namespace

BlockResult decode_block_fixed(const ModelParams& params, const Vocabulary& vocab,
                               Sequence& work, const BlockSpan& span,
                               const DecodeConfig& cfg, Rng& rng, DecodeTrace* trace) {
  BlockResult result;
  result.span = span;
  for (int step = 1; step <= cfg.T; ++step) {
    const std::vector<int> masked = masked_locals(work, span.start, span.end(), vocab.mask_id);
    if (masked.empty()) break;
    const ForwardOutput out = forward(params, work.tokens);

    std::vector<Prediction> preds(masked.size());
    std::vector<double> confs(masked.size());
    for (size_t m = 0; m < masked.size(); ++m) {
      preds[m] = predict_position(out.row(work.global(masked[m])), vocab.mask_id,
                                  cfg.temperature, rng);
      confs[m] = preds[m].confidence;
    }
    const int n_commit =
        commits_this_step(static_cast<int>(masked.size()), cfg.T - step + 1);
    const std::vector<int> chosen = select_commit(confs, n_commit, cfg.remasking, rng);

    std::vector<int> committed_locals;
    std::vector<double> committed_confs;
    for (int idx : chosen) {
      const int local = masked[static_cast<size_t>(idx)];
      work.tokens[static_cast<size_t>(work.global(local))] = preds[static_cast<size_t>(idx)].candidate;
      committed_locals.push_back(local);
      committed_confs.push_back(confs[static_cast<size_t>(idx)]);
    }
    log_commits(trace, span.index, step, committed_locals, committed_confs);

    if (static_cast<int>(masked.size()) == n_commit) {
      result.t_star = step;
      result.per_position_entropy = span_entropies(out, work, span.start, span.size);
      break;
    }
  }
  result.span.contains_indicator = false;
  result.tokens.resize(static_cast<size_t>(span.size));
  for (int j = 0; j < span.size; ++j) {
    const TokenId t = work.tokens[static_cast<size_t>(work.global(span.start + j))];
    result.tokens[static_cast<size_t>(j)] = t;
    if (t == vocab.indicator_id) result.span.contains_indicator = true;
  }
  return result;
}

BlockResult decode_block_dynamic(const ModelParams& params, const Vocabulary& vocab,
                                 Sequence& work, int block_start_local,
                                 int block_index, const DecodeConfig& cfg, Rng& rng,
                                 DecodeTrace* trace) {
  const int window_len = work.window_len();
  const int remaining = window_len - block_start_local + 1;
  const int prov = std::min(remaining, cfg.max_block_cap);
  const int prov_end = block_start_local + prov - 1;

  BlockResult result;
  result.span.index = block_index;
  result.span.start = block_start_local;

  for (int step = 1; step <= cfg.T; ++step) {
    const std::vector<int> masked =
        masked_locals(work, block_start_local, prov_end, vocab.mask_id);
    const ForwardOutput out = forward(params, work.tokens);

    std::vector<Prediction> preds(masked.size());
    std::vector<double> confs(masked.size());
    for (size_t m = 0; m < masked.size(); ++m) {
      preds[m] = predict_position(out.row(work.global(masked[m])), vocab.mask_id,
                                  cfg.temperature, rng);
      confs[m] = preds[m].confidence;
    }

    std::vector<int> committed_locals;
    std::vector<double> committed_confs;
    if (!masked.empty()) {
      const int n_commit =
          commits_this_step(static_cast<int>(masked.size()), cfg.T - step + 1);
      const std::vector<int> chosen = select_commit(confs, n_commit, cfg.remasking, rng);
      for (int idx : chosen) {
        const int local = masked[static_cast<size_t>(idx)];
        work.tokens[static_cast<size_t>(work.global(local))] = preds[static_cast<size_t>(idx)].candidate;
        committed_locals.push_back(local);
        committed_confs.push_back(confs[static_cast<size_t>(idx)]);
      }
    }

    const std::optional<int> found =
        find_boundary(work, block_start_local, window_len, vocab.indicator_id, vocab.mask_id);
    if (found.has_value()) {
      int d = *found;
      // Positions still masked ahead of the indicator are finalised from
      // this step's predictions; the block must leave no masks behind.
      for (size_t m = 0; m < masked.size(); ++m) {
        const int local = masked[m];
        if (local >= block_start_local + d) continue;
        auto& slot = work.tokens[static_cast<size_t>(work.global(local))];
        if (slot == vocab.mask_id) {
          slot = preds[m].candidate;
          committed_locals.push_back(local);
          committed_confs.push_back(confs[m]);
        }
      }
      // A filled token may itself be an indicator ahead of the detected
      // one; the block always ends at its first committed indicator.
      d = *find_boundary(work, block_start_local, window_len, vocab.indicator_id,
                         vocab.mask_id);
      for (int local = block_start_local + d; local <= prov_end; ++local) {
        auto& slot = work.tokens[static_cast<size_t>(work.global(local))];
        if (slot != vocab.mask_id) slot = vocab.mask_id;
      }
      log_commits(trace, block_index, step, committed_locals, committed_confs);
      result.span.size = d;
      result.span.contains_indicator = true;
      result.t_star = step;
      result.per_position_entropy = span_entropies(out, work, block_start_local, d);
      break;
    }

    log_commits(trace, block_index, step, committed_locals, committed_confs);
    if (masked.size() == committed_locals.size()) {
      // Whole provisional span committed without an indicator: fallback.
      result.span.size = prov;
      result.span.contains_indicator = false;
      result.t_star = step;
      result.per_position_entropy = span_entropies(out, work, block_start_local, prov);
      break;
    }
  }

  result.tokens.resize(static_cast<size_t>(result.span.size));
  for (int j = 0; j < result.span.size; ++j) {
    result.tokens[static_cast<size_t>(j)] =
        work.tokens[static_cast<size_t>(work.global(block_start_local + j))];
  }
  return result;
}

GenerateResult generate(const ModelParams& params, const Vocabulary& vocab,
                        std::span<const TokenId> prompt, const DecodeConfig& cfg,
                        Rng& rng) {
  const int prompt_len = static_cast<int>(prompt.size());
  if (prompt_len + 1 > cfg.max_window) {
    throw std::invalid_argument("generate: prompt leaves no generation window");
  }
  const int window_len = cfg.max_window - prompt_len;

  Sequence work;
  work.prompt_len = prompt_len;
  work.tokens.assign(prompt.begin(), prompt.end());
  work.tokens.insert(work.tokens.end(), static_cast<size_t>(window_len), vocab.mask_id);

  GenerateResult res;
  DecodeTrace& trace = res.trace;

  bool saw_eos = false;
  int covered = 0;
  if (cfg.mode == DecodeMode::kFixed) {
    const BlockPartition plan = fixed_partition(window_len, cfg.c);
    for (const BlockSpan& span : plan.spans) {
      const auto t0 = std::chrono::steady_clock::now();
      BlockResult block = decode_block_fixed(params, vocab, work, span, cfg, rng, &trace);
      const auto t1 = std::chrono::steady_clock::now();
      trace.block_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
      covered = block.span.end();
      saw_eos = std::find(block.tokens.begin(), block.tokens.end(), vocab.eos_id) !=
                block.tokens.end();
      trace.blocks.push_back(std::move(block));
      if (saw_eos) break;
    }
  } else {
    int block_start = 1;
    int index = 1;
    while (block_start <= window_len) {
      const auto t0 = std::chrono::steady_clock::now();
      BlockResult block =
          decode_block_dynamic(params, vocab, work, block_start, index, cfg, rng, &trace);
      const auto t1 = std::chrono::steady_clock::now();
      trace.block_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
      covered = block.span.end();
      block_start = covered + 1;
      ++index;
      saw_eos = std::find(block.tokens.begin(), block.tokens.end(), vocab.eos_id) !=
                block.tokens.end();
      trace.blocks.push_back(std::move(block));
      if (saw_eos) break;
    }
  }

  trace.exhausted_without_eos = !saw_eos;

  Sequence final_seq;
  final_seq.prompt_len = prompt_len;
  final_seq.tokens.assign(work.tokens.begin(),
                          work.tokens.begin() + prompt_len + covered);
  trace.final_sequence = final_seq;
  res.sequence = std::move(final_seq);
  return res;
}

}  // namespace medlab
