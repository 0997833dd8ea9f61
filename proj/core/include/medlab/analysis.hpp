#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "medlab/decode.hpp"
#include "medlab/tasks.hpp"
#include "medlab/trace.hpp"

namespace medlab {

// Spearman correlation with average ranks for ties; NaN-free for constant
// inputs (returns 0 when either side has no rank variance).
double spearman_average_ranks(std::span<const double> a, std::span<const double> b);

struct BinStat {
  double lo = 0.0, hi = 0.0;
  int count = 0;
  std::optional<double> accuracy;  // null for empty bins
};

struct BinReport {
  std::vector<BinStat> bins;
  // Rank correlation between non-empty bin midpoints and their accuracies.
  std::optional<double> bin_accuracy_rank_corr;
};

// Equal-width bins over [-1, 1]. Every record must carry r_scc; callers
// filter single-block samples (null r_scc) beforehand.
BinReport bin_by_rscc(std::span<const SampleRecord> records, int bins);

struct HardSampleReport {
  int hard_count = 0;   // baseline-wrong instances
  int fixed_count = 0;  // of those, now correct under the method
  double baseline_mean_rscc = 0.0;
  double method_mean_rscc = 0.0;
  double mean_rscc_delta = 0.0;
};

// Restricts to instances the baseline got wrong. Both record sets must be
// keyed by identical fingerprints; a mismatch is rejected.
HardSampleReport hard_sample_compare(std::span<const SampleRecord> baseline,
                                     std::span<const SampleRecord> method);

struct OverheadReport {
  double fixed_seconds_per_token = 0.0;
  double dynamic_seconds_per_token = 0.0;
  double median_ratio = 0.0;  // dynamic / fixed
  std::vector<double> per_run_ratio;
  long tokens_per_run = 0;
  // Boundary-scan cost: (window_len, seconds per scan) and a linear fit.
  std::vector<std::pair<int, double>> scan_cost;
  double scan_fit_slope = 0.0;
  double scan_fit_r2 = 0.0;
};

// Wall-clock per committed token, fixed vs dynamic, at equal token budget.
// The indicator logit is pinned far below the rest of the vocabulary so the
// dynamic decoder always takes the fallback path and both modes commit the
// same tokens; what remains is the boundary-scanning overhead.
OverheadReport bench_overhead(const ModelParams& params, const Vocabulary& vocab,
                              std::span<const TaskInstance> instances,
                              const DecodeConfig& base, int runs);

}  // namespace medlab
