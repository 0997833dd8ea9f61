#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace medlab {

// Per-block entropies in nats, index k = 1..K.
struct EntropySequence {
  std::vector<double> values;

  int block_count() const { return static_cast<int>(values.size()); }
};

struct RSCCReport {
  double r_scc = 0.0;            // in [-1, 1]
  std::vector<int> rank_vector;  // ascending entropy ranks, 1 = smallest
  std::vector<double> delta_squares;
  int k = 0;
};

// Mean token-wise Shannon entropy (natural log) of the given probability
// vectors. Rejects a vector whose mass deviates from 1 by more than 1e-6.
double block_entropy(std::span<const std::vector<double>> distributions);

// Negative Spearman rank correlation between block index and entropy rank:
// +1 for strictly descending entropies. Ties rank stably by block index.
// Rejects K < 2, where the denominator vanishes.
RSCCReport r_scc(const EntropySequence& h);

// Fraction of adjacent pairs with a strict entropy drop; 0 for K = 1.
double entropy_descent_reward(const EntropySequence& h);

// 1 once k reaches k_target, otherwise log(k+1)/log(k_target+1).
double indicator_reward(int k, int k_target);

struct RewardBreakdown {
  double r_ent = 0.0;
  double r_ind = 0.0;
  double r_task = 0.0;
  double alpha = 1.0, beta = 1.0, gamma = 1.0;
  double total = 0.0;  // alpha*r_ent + beta*r_ind + gamma*r_task, exactly
};

RewardBreakdown total_reward(double r_ent, double r_ind, double r_task,
                             double alpha = 1.0, double beta = 1.0, double gamma = 1.0);

// Countdown scoring: +1.0 when the final expression uses exactly the three
// given numbers once each and evaluates to the target; +0.1 when the
// numbers are right but the value is not; 0 otherwise (including
// unparsable output). Expressions are integers joined by binary +/-,
// evaluated left to right, whitespace-insensitive, optionally followed by
// "= value".
double countdown_task_reward(std::string_view output, const std::array<int, 3>& numbers,
                             long target);

// Alternative intrinsic rewards, rescaled into [0, 1] so ablations are
// magnitude-comparable with the entropy-descent reward.
enum class AltRewardKind { kAvgEntropy, kFormatCount, kBlockSize };

double alt_avg_entropy_reward(const EntropySequence& h, int vocab_size);
double alt_format_count_reward(int k, int k_target);
double alt_block_size_reward(std::span<const int> block_sizes, int max_block_cap);

struct AltRewardInputs {
  EntropySequence entropies;
  int k = 0;
  int k_target = 1;
  std::vector<int> block_sizes;
  int max_block_cap = 1;
  int vocab_size = 2;
};

double alt_reward(AltRewardKind kind, const AltRewardInputs& in);

// Exhaustively verifies, for every K in 2..k_max and every permutation of K
// distinct entropy values, that (descent reward = 1) <=> (r_scc = 1) <=>
// strictly decreasing, and that the two maximiser sets coincide. A
// counterexample is reported, not thrown.
struct Theorem1Report {
  int k_max = 0;
  long permutations_checked = 0;
  long counterexamples = 0;
  bool pass = false;
  struct PerK {
    int k = 0;
    long count = 0;
    bool maximiser_sets_equal = false;
  };
  std::vector<PerK> per_k;
  std::vector<std::string> counterexample_notes;  // first few, for the report
};

Theorem1Report theorem1_check(int k_max);

// Mean r_scc and the fraction strictly above zero. Rejects an empty list.
struct RMedStats {
  double mean_r_scc = 0.0;
  double proportion_positive = 0.0;
};

RMedStats r_med_stats(std::span<const double> scores);

}  // namespace medlab
