#include "medlab/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace medlab {

double block_entropy(std::span<const std::vector<double>> distributions) {
  if (distributions.empty()) throw std::invalid_argument("block_entropy: empty block");
  double total = 0.0;
  for (const auto& dist : distributions) {
    double mass = 0.0;
    double h = 0.0;
    for (double p : dist) {
      mass += p;
      if (p > 0.0) h -= p * std::log(p);
    }
    if (std::abs(mass - 1.0) > 1e-6) {
      throw std::invalid_argument("block_entropy: unnormalized distribution");
    }
    total += h;
  }
  return total / static_cast<double>(distributions.size());
}

RSCCReport r_scc(const EntropySequence& h) {
  const int k = h.block_count();
  if (k < 2) throw std::invalid_argument("r_scc: needs at least two blocks");

  RSCCReport rep;
  rep.k = k;
  // Ascending ranks, ties broken stably by block index.
  std::vector<int> order(static_cast<size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return h.values[static_cast<size_t>(a)] < h.values[static_cast<size_t>(b)];
  });
  rep.rank_vector.assign(static_cast<size_t>(k), 0);
  for (int r = 0; r < k; ++r) rep.rank_vector[static_cast<size_t>(order[static_cast<size_t>(r)])] = r + 1;

  double sum_d2 = 0.0;
  rep.delta_squares.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    const double delta = static_cast<double>(i + 1 - rep.rank_vector[static_cast<size_t>(i)]);
    rep.delta_squares.push_back(delta * delta);
    sum_d2 += delta * delta;
  }
  const double kk = static_cast<double>(k);
  rep.r_scc = -(1.0 - 6.0 * sum_d2 / (kk * (kk * kk - 1.0)));
  return rep;
}

double entropy_descent_reward(const EntropySequence& h) {
  const int k = h.block_count();
  if (k < 1) throw std::invalid_argument("entropy_descent_reward: empty sequence");
  if (k == 1) return 0.0;
  int drops = 0;
  for (int i = 1; i < k; ++i) {
    if (h.values[static_cast<size_t>(i - 1)] > h.values[static_cast<size_t>(i)]) ++drops;
  }
  return static_cast<double>(drops) / static_cast<double>(k - 1);
}

double indicator_reward(int k, int k_target) {
  if (k < 0) throw std::invalid_argument("indicator_reward: negative block count");
  if (k_target < 1) throw std::invalid_argument("indicator_reward: k_target must be >= 1");
  if (k >= k_target) return 1.0;
  return std::log(static_cast<double>(k + 1)) / std::log(static_cast<double>(k_target + 1));
}

RewardBreakdown total_reward(double r_ent, double r_ind, double r_task, double alpha,
                             double beta, double gamma) {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) {
    throw std::invalid_argument("total_reward: weights must be non-negative");
  }
  RewardBreakdown b;
  b.r_ent = r_ent;
  b.r_ind = r_ind;
  b.r_task = r_task;
  b.alpha = alpha;
  b.beta = beta;
  b.gamma = gamma;
  b.total = alpha * r_ent + beta * r_ind + gamma * r_task;
  return b;
}

namespace {

struct ParsedExpression {
  std::vector<long> operands;  // leading term and each +/- operand
  long value = 0;
};

// Scans for the last maximal run of the form int (op int)+, ignoring
// whitespace and any non-expression characters between runs. An optional
// trailing "= value" is part of the run but not an operand.
std::optional<ParsedExpression> last_expression(std::string_view text) {
  struct Item {
    long num = 0;
    char op = 0;  // 0 for the leading term
  };
  std::optional<ParsedExpression> best;

  size_t i = 0;
  const size_t n = text.size();
  auto skip_spaces = [&](size_t p) {
    while (p < n && text[p] == ' ') ++p;
    return p;
  };
  auto parse_number = [&](size_t p) -> std::optional<std::pair<long, size_t>> {
    p = skip_spaces(p);
    if (p >= n || !std::isdigit(static_cast<unsigned char>(text[p]))) return std::nullopt;
    long v = 0;
    while (p < n && std::isdigit(static_cast<unsigned char>(text[p]))) {
      v = v * 10 + (text[p] - '0');
      ++p;
    }
    return std::make_pair(v, p);
  };

  while (i < n) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    auto first = parse_number(i);
    size_t pos = first->second;
    std::vector<Item> items{{first->first, 0}};
    while (true) {
      const size_t at_op = skip_spaces(pos);
      if (at_op >= n || (text[at_op] != '+' && text[at_op] != '-')) break;
      const auto next = parse_number(at_op + 1);
      if (!next.has_value()) break;
      items.push_back({next->first, text[at_op]});
      pos = next->second;
    }
    if (items.size() >= 2) {
      ParsedExpression expr;
      long value = items[0].num;
      expr.operands.push_back(items[0].num);
      for (size_t j = 1; j < items.size(); ++j) {
        value += items[j].op == '+' ? items[j].num : -items[j].num;
        expr.operands.push_back(items[j].num);
      }
      expr.value = value;
      best = expr;  // keep the last full expression
      // Swallow an optional "= value" suffix so its number does not start
      // a new run.
      size_t after = skip_spaces(pos);
      if (after < n && text[after] == '=') {
        after = skip_spaces(after + 1);
        if (after < n && text[after] == '-') after = skip_spaces(after + 1);
        while (after < n && std::isdigit(static_cast<unsigned char>(text[after]))) ++after;
        pos = after;
      }
    }
    i = std::max(pos, i + 1);
  }
  return best;
}

}  // namespace

double countdown_task_reward(std::string_view output, const std::array<int, 3>& numbers,
                             long target) {
  const auto expr = last_expression(output);
  if (!expr.has_value()) return 0.0;

  std::vector<long> used = expr->operands;
  std::vector<long> given(numbers.begin(), numbers.end());
  std::sort(used.begin(), used.end());
  std::sort(given.begin(), given.end());
  if (used != given) return 0.0;
  return expr->value == target ? 1.0 : 0.1;
}

double alt_avg_entropy_reward(const EntropySequence& h, int vocab_size) {
  if (h.values.empty()) throw std::invalid_argument("alt_avg_entropy_reward: empty sequence");
  if (vocab_size < 2) throw std::invalid_argument("alt_avg_entropy_reward: vocab too small");
  double mean = 0.0;
  for (double v : h.values) mean += v;
  mean /= static_cast<double>(h.values.size());
  const double scaled = 1.0 - mean / std::log(static_cast<double>(vocab_size));
  return std::clamp(scaled, 0.0, 1.0);
}

double alt_format_count_reward(int k, int k_target) {
  if (k_target < 1) throw std::invalid_argument("alt_format_count_reward: k_target >= 1");
  return static_cast<double>(std::min(k, k_target)) / static_cast<double>(k_target);
}

double alt_block_size_reward(std::span<const int> block_sizes, int max_block_cap) {
  if (block_sizes.empty()) throw std::invalid_argument("alt_block_size_reward: no blocks");
  if (max_block_cap < 1) throw std::invalid_argument("alt_block_size_reward: cap >= 1");
  double mean = 0.0;
  for (int s : block_sizes) mean += static_cast<double>(s);
  mean /= static_cast<double>(block_sizes.size());
  return std::clamp(1.0 - mean / static_cast<double>(max_block_cap), 0.0, 1.0);
}

double alt_reward(AltRewardKind kind, const AltRewardInputs& in) {
  switch (kind) {
    case AltRewardKind::kAvgEntropy:
      return alt_avg_entropy_reward(in.entropies, in.vocab_size);
    case AltRewardKind::kFormatCount:
      return alt_format_count_reward(in.k, in.k_target);
    case AltRewardKind::kBlockSize:
      return alt_block_size_reward(in.block_sizes, in.max_block_cap);
  }
  throw std::logic_error("alt_reward: unknown kind");
}

Theorem1Report theorem1_check(int k_max) {
  if (k_max < 2) throw std::invalid_argument("theorem1_check: k_max must be >= 2");
  Theorem1Report rep;
  rep.k_max = k_max;

  for (int k = 2; k <= k_max; ++k) {
    Theorem1Report::PerK per;
    per.k = k;

    std::vector<double> values(static_cast<size_t>(k));
    std::iota(values.begin(), values.end(), 1.0);  // distinct entropies 1..K
    std::sort(values.begin(), values.end());

    double max_rent = -1.0;
    double max_rscc = -2.0;
    std::vector<std::vector<double>> rent_maximisers, rscc_maximisers;

    do {
      EntropySequence h{values};
      const double rent = entropy_descent_reward(h);
      const double rscc = r_scc(h).r_scc;
      bool strictly_decreasing = true;
      for (int i = 1; i < k; ++i) {
        if (!(values[static_cast<size_t>(i - 1)] > values[static_cast<size_t>(i)])) {
          strictly_decreasing = false;
          break;
        }
      }
      const bool rent_at_one = rent == 1.0;
      const bool rscc_at_one = rscc == 1.0;
      if (rent_at_one != strictly_decreasing || rscc_at_one != strictly_decreasing) {
        ++rep.counterexamples;
        if (rep.counterexample_notes.size() < 8) {
          std::string note = "K=" + std::to_string(k) + " values=";
          for (double v : values) note += std::to_string(static_cast<int>(v)) + ",";
          note += " R_ent=" + std::to_string(rent) + " r_SCC=" + std::to_string(rscc);
          rep.counterexample_notes.push_back(note);
        }
      }
      if (rent > max_rent) {
        max_rent = rent;
        rent_maximisers.clear();
      }
      if (rent == max_rent) rent_maximisers.push_back(values);
      if (rscc > max_rscc) {
        max_rscc = rscc;
        rscc_maximisers.clear();
      }
      if (rscc == max_rscc) rscc_maximisers.push_back(values);
      ++per.count;
    } while (std::next_permutation(values.begin(), values.end()));

    per.maximiser_sets_equal =
        rent_maximisers == rscc_maximisers && rent_maximisers.size() == 1;
    if (!per.maximiser_sets_equal) ++rep.counterexamples;
    rep.permutations_checked += per.count;
    rep.per_k.push_back(per);
  }
  rep.pass = rep.counterexamples == 0;
  return rep;
}

RMedStats r_med_stats(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("r_med_stats: empty score list");
  RMedStats s;
  int positive = 0;
  for (double v : scores) {
    s.mean_r_scc += v;
    if (v > 0.0) ++positive;
  }
  s.mean_r_scc /= static_cast<double>(scores.size());
  s.proportion_positive = static_cast<double>(positive) / static_cast<double>(scores.size());
  return s;
}

}  // namespace medlab
