#pragma once

#include <optional>
#include <span>
#include <vector>

#include "medlab/vocab.hpp"

namespace medlab {

// Token buffer: prompt_len leading prompt positions followed by the
// generation window. prompt_len <= size() always.
struct Sequence {
  std::vector<TokenId> tokens;
  int prompt_len = 0;

  int size() const { return static_cast<int>(tokens.size()); }
  int window_len() const { return size() - prompt_len; }
  // Global index of 1-based local position within the generation window.
  int global(int local) const { return prompt_len + local - 1; }
  std::span<const TokenId> completion() const {
    return std::span<const TokenId>(tokens).subspan(static_cast<size_t>(prompt_len));
  }
};

// One block of the generation window. start and index are 1-based; trace
// files keep the same convention.
struct BlockSpan {
  int index = 0;
  int start = 0;
  int size = 0;
  bool contains_indicator = false;

  int end() const { return start + size - 1; }
};

// Ordered, contiguous, non-overlapping spans covering 1..window_len.
struct BlockPartition {
  std::vector<BlockSpan> spans;
  int window_len = 0;

  int block_count() const { return static_cast<int>(spans.size()); }
};

// Uniform partition with block size c; the last span may be shorter.
// Throws std::invalid_argument when window_len or c is zero.
BlockPartition fixed_partition(int window_len, int c);

// Smallest local size d >= 1 such that the committed token at local index
// block_start_local + d - 1 equals indicator_id; the indicator counts
// inside the block. Absent when no committed indicator exists in
// [block_start_local, window_len].
std::optional<int> find_boundary(const Sequence& state, int block_start_local,
                                 int window_len, TokenId indicator_id,
                                 TokenId mask_id);

// True iff the spans are ordered by start, sized >= 1, gap-free and cover
// 1..window_len exactly. Used as a test oracle and runtime assertion.
bool validate_partition(const BlockPartition& p);

}  // namespace medlab
