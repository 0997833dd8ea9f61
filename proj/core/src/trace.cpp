#include "medlab/trace.hpp"

#include <fstream>
#include <ostream>
#include <stdexcept>

namespace medlab {

namespace {

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace

void write_trace_header(std::ostream& os, const nlohmann::json& config, uint64_t seed) {
  nlohmann::json h;
  h["schema"] = "trace-v1";
  h["config"] = config;
  h["seed"] = seed;
  os << h.dump() << "\n";
}

nlohmann::json block_record_json(const std::string& sample_id, const BlockResult& block) {
  nlohmann::json j;
  j["sample_id"] = sample_id;
  j["k"] = block.span.index;
  j["start"] = block.span.start;
  j["size"] = block.span.size;
  j["t_star"] = block.t_star;
  j["entropies"] = block.per_position_entropy;
  j["tokens"] = block.tokens;
  j["contains_indicator"] = block.span.contains_indicator;
  return j;
}

void write_block_records(std::ostream& os, const std::string& sample_id,
                         const DecodeTrace& trace) {
  for (const BlockResult& b : trace.blocks) {
    os << block_record_json(sample_id, b).dump() << "\n";
  }
}

nlohmann::json sample_record_json(const SampleRecord& rec) {
  nlohmann::json j;
  j["sample_id"] = rec.sample_id;
  j["instance_fingerprint"] = hex64(rec.fingerprint);
  j["mode"] = rec.mode;
  j["K"] = rec.k;
  if (rec.r_scc.has_value()) {
    j["r_scc"] = *rec.r_scc;
  } else {
    j["r_scc"] = nullptr;
  }
  j["r_ent"] = rec.r_ent;
  j["r_ind"] = rec.r_ind;
  j["r_task"] = rec.r_task;
  j["correct"] = rec.correct;
  return j;
}

void write_sample_record(std::ostream& os, const SampleRecord& rec) {
  os << sample_record_json(rec).dump() << "\n";
}

TraceFile read_trace(std::istream& is) {
  TraceFile file;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    if (j.contains("schema")) {
      file.header = j;
    } else if (j.contains("instance_fingerprint")) {
      SampleRecord rec;
      rec.sample_id = j.at("sample_id").get<std::string>();
      rec.fingerprint =
          std::stoull(j.at("instance_fingerprint").get<std::string>(), nullptr, 16);
      rec.mode = j.at("mode").get<std::string>();
      rec.k = j.at("K").get<int>();
      if (!j.at("r_scc").is_null()) rec.r_scc = j.at("r_scc").get<double>();
      rec.r_ent = j.at("r_ent").get<double>();
      rec.r_ind = j.at("r_ind").get<double>();
      rec.r_task = j.at("r_task").get<double>();
      rec.correct = j.at("correct").get<bool>();
      file.samples.push_back(std::move(rec));
    } else if (j.contains("k")) {
      file.block_records.push_back(std::move(j));
    } else {
      throw std::runtime_error("read_trace: unrecognised record");
    }
  }
  return file;
}

TraceFile read_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_trace_file: cannot open " + path);
  return read_trace(in);
}

}  // namespace medlab
