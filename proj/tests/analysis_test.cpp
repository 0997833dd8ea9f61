#include "medlab/analysis.hpp"

#include <gtest/gtest.h>

namespace medlab {
namespace {

SampleRecord record(uint64_t fp, double r_scc, bool correct) {
  SampleRecord r;
  r.sample_id = "s" + std::to_string(fp);
  r.fingerprint = fp;
  r.mode = "dynamic";
  r.k = 3;
  r.r_scc = r_scc;
  r.correct = correct;
  return r;
}

TEST(SpearmanAverageRanks, MonotoneAndConstantInputs) {
  const std::vector<double> a = {1.0, 2.0, 3.0, 4.0};
  const std::vector<double> up = {0.1, 0.2, 0.3, 0.4};
  const std::vector<double> down = {4.0, 3.0, 2.0, 1.0};
  EXPECT_DOUBLE_EQ(spearman_average_ranks(a, up), 1.0);
  EXPECT_DOUBLE_EQ(spearman_average_ranks(a, down), -1.0);
  const std::vector<double> flat = {1.0, 1.0, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(spearman_average_ranks(a, flat), 0.0);
}

TEST(BinByRscc, AllCorrectGivesUnitAccuracies) {
  std::vector<SampleRecord> records;
  for (int i = 0; i < 30; ++i) {
    records.push_back(record(static_cast<uint64_t>(i), -1.0 + 2.0 * i / 29.0, true));
  }
  const BinReport rep = bin_by_rscc(records, 6);
  int total = 0;
  for (const auto& bin : rep.bins) {
    total += bin.count;
    if (bin.count > 0) EXPECT_DOUBLE_EQ(*bin.accuracy, 1.0);
  }
  EXPECT_EQ(total, 30);
}

TEST(BinByRscc, ExtremesProduceUnitCorrelation) {
  std::vector<SampleRecord> records;
  for (int i = 0; i < 20; ++i) records.push_back(record(static_cast<uint64_t>(i), 1.0, true));
  for (int i = 20; i < 40; ++i) {
    records.push_back(record(static_cast<uint64_t>(i), -1.0, false));
  }
  const BinReport rep = bin_by_rscc(records, 6);
  ASSERT_TRUE(rep.bin_accuracy_rank_corr.has_value());
  EXPECT_DOUBLE_EQ(*rep.bin_accuracy_rank_corr, 1.0);
  EXPECT_EQ(rep.bins.front().count, 20);
  EXPECT_EQ(rep.bins.back().count, 20);
  for (size_t i = 1; i + 1 < rep.bins.size(); ++i) {
    EXPECT_EQ(rep.bins[i].count, 0);
    EXPECT_FALSE(rep.bins[i].accuracy.has_value());
  }
}

TEST(BinByRscc, RejectsMissingScores) {
  std::vector<SampleRecord> records = {record(1, 0.5, true)};
  records.push_back(record(2, 0.0, false));
  records[1].r_scc.reset();
  EXPECT_THROW(bin_by_rscc(records, 4), std::invalid_argument);
}

TEST(HardSampleCompare, SelfComparisonIsNeutral) {
  std::vector<SampleRecord> records;
  for (int i = 0; i < 12; ++i) {
    records.push_back(record(static_cast<uint64_t>(i), 0.2 * (i % 5) - 0.4, i % 3 == 0));
  }
  const HardSampleReport rep = hard_sample_compare(records, records);
  EXPECT_EQ(rep.hard_count, 8);  // i % 3 != 0
  EXPECT_EQ(rep.fixed_count, 0);
  EXPECT_DOUBLE_EQ(rep.mean_rscc_delta, 0.0);
}

TEST(HardSampleCompare, MethodFixesEverything) {
  std::vector<SampleRecord> baseline, method;
  for (int i = 0; i < 10; ++i) {
    baseline.push_back(record(static_cast<uint64_t>(i), -0.5, i < 4));
    method.push_back(record(static_cast<uint64_t>(i), 0.5, true));
  }
  const HardSampleReport rep = hard_sample_compare(baseline, method);
  EXPECT_EQ(rep.hard_count, 6);
  EXPECT_EQ(rep.fixed_count, 6);
  EXPECT_DOUBLE_EQ(rep.mean_rscc_delta, 1.0);
}

TEST(HardSampleCompare, RejectsKeyMismatch) {
  std::vector<SampleRecord> baseline = {record(1, 0.0, false), record(2, 0.0, true)};
  std::vector<SampleRecord> method = {record(1, 0.0, true), record(3, 0.0, true)};
  EXPECT_THROW(hard_sample_compare(baseline, method), std::invalid_argument);
  method.pop_back();
  EXPECT_THROW(hard_sample_compare(baseline, method), std::invalid_argument);
}

TEST(BenchOverhead, EqualBudgetsAndLinearScan) {
  const Vocabulary vocab = default_vocabulary();
  ModelConfig mc;
  mc.vocab_size = vocab.size;
  mc.d_model = 8;
  mc.n_layers = 1;
  mc.n_heads = 1;
  mc.d_ff = 8;
  mc.max_len = 32;
  Rng rng(1);
  const ModelParams params = init_params(mc, rng);

  Rng task_rng(2);
  const auto instances = gen_countdown(task_rng, 2);
  DecodeConfig base;
  base.T = 2;
  base.max_window = 28;
  base.max_block_cap = 8;
  const OverheadReport rep = bench_overhead(params, vocab, instances, base, 2);
  EXPECT_EQ(rep.per_run_ratio.size(), 2u);
  EXPECT_GT(rep.median_ratio, 0.0);
  EXPECT_GT(rep.fixed_seconds_per_token, 0.0);
  ASSERT_EQ(rep.scan_cost.size(), 3u);
  EXPECT_GT(rep.scan_fit_slope, 0.0);
}

}  // namespace
}  // namespace medlab
