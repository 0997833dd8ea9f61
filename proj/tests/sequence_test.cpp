#include "medlab/sequence.hpp"

#include <gtest/gtest.h>

#include "medlab/rng.hpp"

namespace medlab {
namespace {

Sequence window_state(int prompt_len, int window_len, TokenId fill) {
  Sequence s;
  s.prompt_len = prompt_len;
  s.tokens.assign(static_cast<size_t>(prompt_len + window_len), fill);
  return s;
}

TEST(FixedPartition, SplitsWindowWithShortTail) {
  const BlockPartition p = fixed_partition(10, 4);
  ASSERT_EQ(p.block_count(), 3);
  EXPECT_EQ(p.spans[0].start, 1);
  EXPECT_EQ(p.spans[0].size, 4);
  EXPECT_EQ(p.spans[1].start, 5);
  EXPECT_EQ(p.spans[1].size, 4);
  EXPECT_EQ(p.spans[2].start, 9);
  EXPECT_EQ(p.spans[2].size, 2);
  EXPECT_TRUE(validate_partition(p));
}

TEST(FixedPartition, SingleBlock) {
  const BlockPartition p = fixed_partition(8, 8);
  ASSERT_EQ(p.block_count(), 1);
  EXPECT_EQ(p.spans[0].start, 1);
  EXPECT_EQ(p.spans[0].size, 8);
}

TEST(FixedPartition, EightEqualBlocksOf32) {
  const BlockPartition p = fixed_partition(256, 32);
  ASSERT_EQ(p.block_count(), 8);
  for (const auto& s : p.spans) EXPECT_EQ(s.size, 32);
  EXPECT_TRUE(validate_partition(p));
}

TEST(FixedPartition, RejectsDegenerateArguments) {
  EXPECT_THROW(fixed_partition(10, 0), std::invalid_argument);
  EXPECT_THROW(fixed_partition(0, 4), std::invalid_argument);
}

TEST(FixedPartition, PropertyCeilCountAndCover) {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const int window = 1 + static_cast<int>(rng.below(300));
    const int c = 1 + static_cast<int>(rng.below(40));
    const BlockPartition p = fixed_partition(window, c);
    EXPECT_TRUE(validate_partition(p));
    EXPECT_EQ(p.block_count(), (window + c - 1) / c);
    for (int k = 0; k + 1 < p.block_count(); ++k) EXPECT_EQ(p.spans[static_cast<size_t>(k)].size, c);
    // Concatenated spans cover 1..window exactly once.
    int covered = 0;
    for (const auto& s : p.spans) {
      EXPECT_EQ(s.start, covered + 1);
      covered += s.size;
    }
    EXPECT_EQ(covered, window);
  }
}

TEST(FindBoundary, IndicatorInsideBlock) {
  const TokenId kMask = 1, kInd = 3;
  Sequence s = window_state(2, 12, kMask);
  s.tokens[static_cast<size_t>(s.global(7))] = kInd;  // offset 5 from start 3
  const auto d = find_boundary(s, 3, 12, kInd, kMask);
  ASSERT_TRUE(d.has_value());
  EXPECT_EQ(*d, 5);
}

TEST(FindBoundary, AbsentWhenNothingCommitted) {
  const TokenId kMask = 1, kInd = 3;
  Sequence s = window_state(0, 16, kMask);
  EXPECT_FALSE(find_boundary(s, 1, 16, kInd, kMask).has_value());
}

TEST(FindBoundary, FirstOfSeveralWins) {
  const TokenId kMask = 1, kInd = 3;
  Sequence s = window_state(0, 16, kMask);
  s.tokens[static_cast<size_t>(s.global(3))] = kInd;
  s.tokens[static_cast<size_t>(s.global(7))] = kInd;
  const auto d = find_boundary(s, 1, 16, kInd, kMask);
  ASSERT_TRUE(d.has_value());
  EXPECT_EQ(*d, 3);
}

TEST(FindBoundary, IdempotentAndMonotone) {
  const TokenId kMask = 1, kInd = 3, kOther = 5;
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int window = 4 + static_cast<int>(rng.below(30));
    Sequence s = window_state(1, window, kMask);
    const int ind_pos = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(window)));
    s.tokens[static_cast<size_t>(s.global(ind_pos))] = kInd;
    const auto first = find_boundary(s, 1, window, kInd, kMask);
    ASSERT_TRUE(first.has_value());
    EXPECT_EQ(find_boundary(s, 1, window, kInd, kMask), first);  // idempotent
    // Committing non-indicator tokens after the boundary never changes it.
    for (int pos = ind_pos + 1; pos <= window; ++pos) {
      if (rng.bernoulli(0.5)) s.tokens[static_cast<size_t>(s.global(pos))] = kOther;
    }
    EXPECT_EQ(find_boundary(s, 1, window, kInd, kMask), first);
  }
}

TEST(ValidatePartition, DetectsGapsAndOverlaps) {
  BlockPartition gap;
  gap.window_len = 10;
  gap.spans = {{1, 1, 4, false}, {2, 6, 5, false}};  // gap at 5
  EXPECT_FALSE(validate_partition(gap));

  BlockPartition overlap;
  overlap.window_len = 10;
  overlap.spans = {{1, 1, 4, false}, {2, 4, 7, false}};  // overlap at 4
  EXPECT_FALSE(validate_partition(overlap));

  EXPECT_TRUE(validate_partition(fixed_partition(10, 4)));
}

}  // namespace
}  // namespace medlab
