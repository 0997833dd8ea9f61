#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "medlab/rng.hpp"
#include "medlab/sequence.hpp"
#include "medlab/vocab.hpp"

namespace medlab {

enum class TaskKind { kCountdown3, kArithChain };

// One synthetic problem. Countdown instances carry three distinct numbers
// in [1, 99] and a target reachable with + and - using each number once;
// chain instances carry the expected step count. The reference completion
// (steps separated by the indicator token, then the answer and EOS) feeds
// the pretraining corpus.
struct TaskInstance {
  TaskKind kind = TaskKind::kCountdown3;
  std::vector<TokenId> prompt;
  long answer = 0;  // countdown: target; chain: final value
  std::array<int, 3> numbers{};
  long target = 0;
  int expected_steps = 0;
  std::vector<TokenId> reference_completion;
  uint64_t fingerprint = 0;

  std::string fingerprint_hex() const;
};

struct Dataset {
  std::string split;
  std::vector<TaskInstance> instances;
  uint64_t seed = 0;
};

// Instance for a concrete number triple and sign pattern (the first number
// is always positive): target = a sign2 b sign3 c.
TaskInstance make_countdown_instance(const std::array<int, 3>& numbers, int sign2,
                                     int sign3);

// Samples 3 distinct numbers and a sign pattern, computes the target and
// renders the prompt "N:a b c T:t". Instances are solvable by construction
// and deduplicated by fingerprint.
std::vector<TaskInstance> gen_countdown(Rng& rng, int n, int number_min = 1,
                                        int number_max = 99);

// Chains of +/- steps over small values, one indicator per step, e.g.
// prompt "17+5-3=" with completion "17+5=22\block22-3=19\blockA:19". Every
// intermediate value stays within [0, 99].
std::vector<TaskInstance> gen_arith_chain(Rng& rng, int n, int steps);

// Reference sequence (prompt + completion + eos, padded to total_len) for
// the pretraining corpus.
Sequence reference_sequence(const TaskInstance& inst, const Vocabulary& vocab,
                            int total_len);

struct VerifyResult {
  bool correct = false;
  double task_reward = 0.0;
};

// Countdown delegates to the expression scorer; chains match the final
// "A:value" exactly. Unparsable output scores (false, 0).
VerifyResult verify(const TaskInstance& inst, const Sequence& generated,
                    const Vocabulary& vocab);

// Train/test datasets disjoint by fingerprint; the test split is generated
// second and skips any fingerprint present in train.
struct SplitPair {
  Dataset train;
  Dataset test;
};

SplitPair make_countdown_splits(uint64_t seed, int train_size, int test_size,
                                int number_min = 1, int number_max = 99);

}  // namespace medlab
