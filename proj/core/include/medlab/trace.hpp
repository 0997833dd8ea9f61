#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "medlab/decode.hpp"

namespace medlab {

// Per-sample summary row of the trace-v1 schema. r_scc is null for
// single-block generations, where the statistic is undefined.
struct SampleRecord {
  std::string sample_id;
  uint64_t fingerprint = 0;
  std::string mode;  // "fixed" | "dynamic"
  int k = 0;
  std::optional<double> r_scc;
  double r_ent = 0.0;
  double r_ind = 0.0;
  double r_task = 0.0;
  bool correct = false;
};

// JSONL trace file, schema "trace-v1": one header record carrying the
// config and seed, then one record per decoded block
// {sample_id, k, start, size, t_star, entropies, tokens, contains_indicator}
// and one summary record per sample. All indices are 1-based.
void write_trace_header(std::ostream& os, const nlohmann::json& config, uint64_t seed);
void write_block_records(std::ostream& os, const std::string& sample_id,
                         const DecodeTrace& trace);
void write_sample_record(std::ostream& os, const SampleRecord& rec);

nlohmann::json block_record_json(const std::string& sample_id, const BlockResult& block);
nlohmann::json sample_record_json(const SampleRecord& rec);

struct TraceFile {
  nlohmann::json header;
  std::vector<nlohmann::json> block_records;
  std::vector<SampleRecord> samples;
};

TraceFile read_trace(std::istream& is);
TraceFile read_trace_file(const std::string& path);

}  // namespace medlab
