#include "medlab/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace medlab {

void save_checkpoint(const std::string& path, const Vocabulary& vocab,
                     const ModelParams& params) {
  nlohmann::json j;
  j["format"] = "medlab-checkpoint-v1";
  j["vocab"] = {{"size", vocab.size},
                {"mask_id", vocab.mask_id},
                {"indicator_id", vocab.indicator_id},
                {"eos_id", vocab.eos_id},
                {"pad_id", vocab.pad_id},
                {"glyphs", vocab.glyphs}};
  j["model"] = {{"vocab_size", params.config.vocab_size},
                {"d_model", params.config.d_model},
                {"n_layers", params.config.n_layers},
                {"n_heads", params.config.n_heads},
                {"d_ff", params.config.d_ff},
                {"max_len", params.config.max_len}};
  j["params"] = params.flat;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (j.at("format").get<std::string>() != "medlab-checkpoint-v1") {
    throw std::runtime_error("load_checkpoint: unsupported format");
  }

  Checkpoint ckpt;
  const auto& v = j.at("vocab");
  ckpt.vocab.size = v.at("size").get<int>();
  ckpt.vocab.mask_id = v.at("mask_id").get<TokenId>();
  ckpt.vocab.indicator_id = v.at("indicator_id").get<TokenId>();
  ckpt.vocab.eos_id = v.at("eos_id").get<TokenId>();
  ckpt.vocab.pad_id = v.at("pad_id").get<TokenId>();
  ckpt.vocab.glyphs = v.at("glyphs").get<std::vector<std::string>>();
  if (!ckpt.vocab.valid()) throw std::runtime_error("load_checkpoint: invalid vocabulary");

  const auto& m = j.at("model");
  ModelConfig cfg;
  cfg.vocab_size = m.at("vocab_size").get<int>();
  cfg.d_model = m.at("d_model").get<int>();
  cfg.n_layers = m.at("n_layers").get<int>();
  cfg.n_heads = m.at("n_heads").get<int>();
  cfg.d_ff = m.at("d_ff").get<int>();
  cfg.max_len = m.at("max_len").get<int>();

  ckpt.params.config = cfg;
  ckpt.params.layout = ParamLayout::make(cfg);
  ckpt.params.flat = j.at("params").get<std::vector<double>>();
  if (ckpt.params.flat.size() != ckpt.params.layout.total) {
    throw std::runtime_error("load_checkpoint: parameter vector length mismatch");
  }
  return ckpt;
}

}  // namespace medlab
