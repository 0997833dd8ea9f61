#include "medlab/sequence.hpp"

#include <stdexcept>

namespace medlab {

BlockPartition fixed_partition(int window_len, int c) {
  if (window_len < 1) throw std::invalid_argument("fixed_partition: window_len must be >= 1");
  if (c < 1) throw std::invalid_argument("fixed_partition: block size c must be >= 1");
  BlockPartition p;
  p.window_len = window_len;
  int k = 1;
  for (int start = 1; start <= window_len; start += c, ++k) {
    BlockSpan span;
    span.index = k;
    span.start = start;
    span.size = std::min(c, window_len - start + 1);
    p.spans.push_back(span);
  }
  return p;
}

std::optional<int> find_boundary(const Sequence& state, int block_start_local,
                                 int window_len, TokenId indicator_id,
                                 TokenId mask_id) {
  for (int local = block_start_local; local <= window_len; ++local) {
    const TokenId t = state.tokens[static_cast<size_t>(state.global(local))];
    if (t != mask_id && t == indicator_id) {
      return local - block_start_local + 1;
    }
  }
  return std::nullopt;
}

bool validate_partition(const BlockPartition& p) {
  if (p.window_len < 1 || p.spans.empty()) return false;
  int expected_start = 1;
  for (size_t i = 0; i < p.spans.size(); ++i) {
    const BlockSpan& s = p.spans[i];
    if (s.size < 1 || s.start != expected_start) return false;
    expected_start = s.start + s.size;
  }
  return expected_start == p.window_len + 1;
}

}  // namespace medlab
