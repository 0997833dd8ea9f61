#include "medlab/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace medlab {

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace

double spearman_average_ranks(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("spearman_average_ranks: need two equal-length lists");
  }
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  return pearson(ra, rb);
}

BinReport bin_by_rscc(std::span<const SampleRecord> records, int bins) {
  if (bins < 1) throw std::invalid_argument("bin_by_rscc: bins must be >= 1");
  for (const auto& r : records) {
    if (!r.r_scc.has_value()) {
      throw std::invalid_argument("bin_by_rscc: record without r_scc");
    }
  }
  BinReport rep;
  const double width = 2.0 / bins;
  std::vector<int> correct(static_cast<size_t>(bins), 0);
  std::vector<int> count(static_cast<size_t>(bins), 0);
  for (const auto& r : records) {
    int b = static_cast<int>(std::floor((*r.r_scc + 1.0) / width));
    b = std::clamp(b, 0, bins - 1);  // r_scc = +1 lands in the last bin
    ++count[static_cast<size_t>(b)];
    if (r.correct) ++correct[static_cast<size_t>(b)];
  }
  std::vector<double> mids, accs;
  for (int b = 0; b < bins; ++b) {
    BinStat stat;
    stat.lo = -1.0 + b * width;
    stat.hi = stat.lo + width;
    stat.count = count[static_cast<size_t>(b)];
    if (stat.count > 0) {
      stat.accuracy = static_cast<double>(correct[static_cast<size_t>(b)]) / stat.count;
      mids.push_back(0.5 * (stat.lo + stat.hi));
      accs.push_back(*stat.accuracy);
    }
    rep.bins.push_back(stat);
  }
  if (mids.size() >= 2) {
    rep.bin_accuracy_rank_corr = spearman_average_ranks(mids, accs);
  }
  return rep;
}

HardSampleReport hard_sample_compare(std::span<const SampleRecord> baseline,
                                     std::span<const SampleRecord> method) {
  if (baseline.size() != method.size()) {
    throw std::invalid_argument("hard_sample_compare: record counts differ");
  }
  std::unordered_map<uint64_t, const SampleRecord*> by_fp;
  for (const auto& r : method) by_fp[r.fingerprint] = &r;
  if (by_fp.size() != method.size()) {
    throw std::invalid_argument("hard_sample_compare: duplicate fingerprints in method");
  }

  HardSampleReport rep;
  double base_sum = 0.0, method_sum = 0.0;
  int scored = 0;
  for (const auto& b : baseline) {
    auto it = by_fp.find(b.fingerprint);
    if (it == by_fp.end()) {
      throw std::invalid_argument("hard_sample_compare: fingerprint missing from method");
    }
    if (b.correct) continue;
    ++rep.hard_count;
    if (it->second->correct) ++rep.fixed_count;
    if (b.r_scc.has_value() && it->second->r_scc.has_value()) {
      base_sum += *b.r_scc;
      method_sum += *it->second->r_scc;
      ++scored;
    }
  }
  if (scored > 0) {
    rep.baseline_mean_rscc = base_sum / scored;
    rep.method_mean_rscc = method_sum / scored;
    rep.mean_rscc_delta = rep.method_mean_rscc - rep.baseline_mean_rscc;
  }
  return rep;
}

OverheadReport bench_overhead(const ModelParams& params, const Vocabulary& vocab,
                              std::span<const TaskInstance> instances,
                              const DecodeConfig& base, int runs) {
  if (runs < 1) throw std::invalid_argument("bench_overhead: runs must be >= 1");
  if (instances.empty()) throw std::invalid_argument("bench_overhead: no instances");

  // Equal-budget setup: crush the indicator logit so dynamic mode never
  // truncates and both modes commit exactly window_len tokens per prompt.
  ModelParams muted = params;
  const size_t col = params.layout.b_out + static_cast<size_t>(vocab.indicator_id);
  muted.flat[col] = -1e5;
  for (int r = 0; r < params.config.d_model; ++r) {
    muted.flat[params.layout.w_out + static_cast<size_t>(r) * params.config.vocab_size +
               static_cast<size_t>(vocab.indicator_id)] = 0.0;
  }

  DecodeConfig fixed_cfg = base;
  fixed_cfg.mode = DecodeMode::kFixed;
  fixed_cfg.c = base.max_block_cap;
  DecodeConfig dyn_cfg = base;
  dyn_cfg.mode = DecodeMode::kDynamic;

  OverheadReport rep;
  double fixed_total = 0.0, dynamic_total = 0.0;
  long fixed_tokens = 0, dynamic_tokens = 0;

  // One untimed pass per mode keeps caches warm before each measurement,
  // and the mode order alternates between runs to cancel drift.
  auto timed_pass = [&](const DecodeConfig& cfg, int run, double* seconds, long* tokens) {
    for (size_t i = 0; i < instances.size(); ++i) {
      Rng warm_rng(mix_seed(base.seed, 2 * (static_cast<uint64_t>(run) * instances.size() + i)));
      generate(muted, vocab, instances[i].prompt, cfg, warm_rng);
    }
    for (size_t i = 0; i < instances.size(); ++i) {
      Rng rng(mix_seed(base.seed, 2 * (static_cast<uint64_t>(run) * instances.size() + i)));
      const auto t0 = std::chrono::steady_clock::now();
      GenerateResult g = generate(muted, vocab, instances[i].prompt, cfg, rng);
      const auto t1 = std::chrono::steady_clock::now();
      *seconds += std::chrono::duration<double>(t1 - t0).count();
      *tokens += g.sequence.window_len();
    }
  };

  for (int run = 0; run < runs; ++run) {
    double fixed_sec = 0.0, dyn_sec = 0.0;
    long ftok = 0, dtok = 0;
    if (run % 2 == 0) {
      timed_pass(fixed_cfg, run, &fixed_sec, &ftok);
      timed_pass(dyn_cfg, run, &dyn_sec, &dtok);
    } else {
      timed_pass(dyn_cfg, run, &dyn_sec, &dtok);
      timed_pass(fixed_cfg, run, &fixed_sec, &ftok);
    }
    if (ftok != dtok) throw std::runtime_error("bench_overhead: token budgets diverged");
    rep.per_run_ratio.push_back((dyn_sec / dtok) / (fixed_sec / ftok));
    fixed_total += fixed_sec;
    dynamic_total += dyn_sec;
    fixed_tokens += ftok;
    dynamic_tokens += dtok;
    rep.tokens_per_run = ftok;
  }
  rep.fixed_seconds_per_token = fixed_total / fixed_tokens;
  rep.dynamic_seconds_per_token = dynamic_total / dynamic_tokens;
  std::vector<double> sorted = rep.per_run_ratio;
  std::sort(sorted.begin(), sorted.end());
  rep.median_ratio = sorted[sorted.size() / 2];

  // Boundary-scan cost over growing windows; the scan is a single pass so
  // the fit should be close to linear.
  const int windows[] = {64, 128, 256};
  std::vector<double> xs, ys;
  for (int w : windows) {
    Sequence state;
    state.prompt_len = 0;
    state.tokens.assign(static_cast<size_t>(w), vocab.pad_id);  // committed, no indicator
    const int reps = 20000;
    const auto t0 = std::chrono::steady_clock::now();
    int sink = 0;
    for (int r = 0; r < reps; ++r) {
      auto d = find_boundary(state, 1, w, vocab.indicator_id, vocab.mask_id);
      sink += d.has_value() ? *d : 0;
    }
    asm volatile("" : "+r"(sink));
    const auto t1 = std::chrono::steady_clock::now();
    const double per_scan = std::chrono::duration<double>(t1 - t0).count() / reps;
    rep.scan_cost.emplace_back(w, per_scan);
    xs.push_back(static_cast<double>(w));
    ys.push_back(per_scan);
  }
  // Least-squares line and R^2.
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  rep.scan_fit_slope = sxy / sxx;
  rep.scan_fit_r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return rep;
}

}  // namespace medlab
