#include "medlab/trace.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace medlab {
namespace {

DecodeTrace tiny_trace() {
  DecodeTrace trace;
  BlockResult b1;
  b1.span = {1, 1, 3, true};
  b1.tokens = {4, 5, 3};
  b1.per_position_entropy = {1.25, 0.5, 0.75};
  b1.t_star = 2;
  BlockResult b2;
  b2.span = {2, 4, 2, false};
  b2.tokens = {6, 2};
  b2.per_position_entropy = {0.25, 0.125};
  b2.t_star = 1;
  trace.blocks = {b1, b2};
  return trace;
}

TEST(Trace, HeaderCarriesSchemaConfigAndSeed) {
  std::ostringstream os;
  write_trace_header(os, nlohmann::json{{"mode", "dynamic"}}, 123);
  std::istringstream is(os.str());
  const TraceFile file = read_trace(is);
  EXPECT_EQ(file.header.at("schema").get<std::string>(), "trace-v1");
  EXPECT_EQ(file.header.at("seed").get<uint64_t>(), 123u);
  EXPECT_EQ(file.header.at("config").at("mode").get<std::string>(), "dynamic");
}

TEST(Trace, BlockRecordsUseOneBasedSchemaFields) {
  const DecodeTrace trace = tiny_trace();
  std::ostringstream os;
  write_block_records(os, "sample-7", trace);
  std::istringstream is(os.str());
  const TraceFile file = read_trace(is);
  ASSERT_EQ(file.block_records.size(), 2u);
  const auto& b = file.block_records[0];
  EXPECT_EQ(b.at("sample_id").get<std::string>(), "sample-7");
  EXPECT_EQ(b.at("k").get<int>(), 1);
  EXPECT_EQ(b.at("start").get<int>(), 1);
  EXPECT_EQ(b.at("size").get<int>(), 3);
  EXPECT_EQ(b.at("t_star").get<int>(), 2);
  EXPECT_TRUE(b.at("contains_indicator").get<bool>());
  EXPECT_EQ(b.at("entropies").size(), 3u);
  EXPECT_EQ(b.at("tokens").size(), 3u);
  EXPECT_EQ(file.block_records[1].at("start").get<int>(), 4);
}

TEST(Trace, SampleRecordRoundTripIncludingNullRscc) {
  SampleRecord rec;
  rec.sample_id = "t-3";
  rec.fingerprint = 0xdeadbeefcafef00dULL;
  rec.mode = "fixed";
  rec.k = 1;
  rec.r_scc = std::nullopt;
  rec.r_ent = 0.0;
  rec.r_ind = 0.3;
  rec.r_task = 1.0;
  rec.correct = true;

  std::ostringstream os;
  write_sample_record(os, rec);
  SampleRecord full = rec;
  full.sample_id = "t-4";
  full.r_scc = -0.25;
  write_sample_record(os, full);

  std::istringstream is(os.str());
  const TraceFile file = read_trace(is);
  ASSERT_EQ(file.samples.size(), 2u);
  EXPECT_EQ(file.samples[0].fingerprint, rec.fingerprint);
  EXPECT_FALSE(file.samples[0].r_scc.has_value());
  ASSERT_TRUE(file.samples[1].r_scc.has_value());
  EXPECT_DOUBLE_EQ(*file.samples[1].r_scc, -0.25);
  EXPECT_TRUE(file.samples[0].correct);
}

TEST(Trace, SerializationIsByteStable) {
  const DecodeTrace trace = tiny_trace();
  std::ostringstream a, b;
  write_trace_header(a, nlohmann::json{{"c", 4}}, 9);
  write_block_records(a, "s", trace);
  write_trace_header(b, nlohmann::json{{"c", 4}}, 9);
  write_block_records(b, "s", trace);
  EXPECT_EQ(a.str(), b.str());
}

}  // namespace
}  // namespace medlab
