#include "medlab/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace medlab {

namespace {

void require_known_keys(const nlohmann::json& j, const std::set<std::string>& known,
                        const std::string& where) {
  for (const auto& item : j.items()) {
    if (known.find(item.key()) == known.end()) {
      throw std::invalid_argument("config: unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <typename T>
void read_into(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

DecodeMode parse_mode(const std::string& s) {
  if (s == "fixed") return DecodeMode::kFixed;
  if (s == "dynamic") return DecodeMode::kDynamic;
  throw std::invalid_argument("config: decode.mode must be 'fixed' or 'dynamic'");
}

Remasking parse_remasking(const std::string& s) {
  if (s == "low_confidence") return Remasking::kLowConfidence;
  if (s == "random") return Remasking::kRandom;
  throw std::invalid_argument("config: decode.remasking must be 'low_confidence' or 'random'");
}

}  // namespace

GrpoConfig RunConfig::assemble_grpo(uint64_t seed) const {
  GrpoConfig g = grpo;
  g.rollout_decode = decode;
  g.rollout_decode.mode = DecodeMode::kDynamic;
  g.rollout_decode.temperature = rollout_temperature;
  g.alpha = rewards.alpha;
  g.beta_ind = rewards.beta_ind;
  g.gamma = rewards.gamma;
  g.disable_ent = rewards.disable_ent;
  g.disable_ind = rewards.disable_ind;
  g.k_target = rewards.k_target;
  g.seed = seed;
  return g;
}

RunConfig parse_run_config(const nlohmann::json& j) {
  require_known_keys(j, {"model", "decode", "grpo", "rewards", "task", "analysis"},
                     "top level");
  RunConfig cfg;

  if (j.contains("model")) {
    const auto& m = j.at("model");
    require_known_keys(m,
                       {"d_model", "n_layers", "n_heads", "d_ff", "max_len",
                        "pretrain_steps", "batch_size", "lr", "t_min", "weight_decay",
                        "clip_norm"},
                       "model");
    read_into(m, "d_model", cfg.model.d_model);
    read_into(m, "n_layers", cfg.model.n_layers);
    read_into(m, "n_heads", cfg.model.n_heads);
    read_into(m, "d_ff", cfg.model.d_ff);
    read_into(m, "max_len", cfg.model.max_len);
    read_into(m, "pretrain_steps", cfg.pretrain.steps);
    read_into(m, "batch_size", cfg.pretrain.batch_size);
    read_into(m, "lr", cfg.pretrain.lr);
    read_into(m, "t_min", cfg.pretrain.t_min);
    read_into(m, "weight_decay", cfg.pretrain.weight_decay);
    read_into(m, "clip_norm", cfg.pretrain.clip_norm);
  }

  if (j.contains("decode")) {
    const auto& d = j.at("decode");
    require_known_keys(
        d, {"mode", "c", "T", "max_window", "temperature", "remasking", "max_block_cap"},
        "decode");
    if (d.contains("mode")) cfg.decode.mode = parse_mode(d.at("mode").get<std::string>());
    read_into(d, "c", cfg.decode.c);
    read_into(d, "T", cfg.decode.T);
    read_into(d, "max_window", cfg.decode.max_window);
    read_into(d, "temperature", cfg.decode.temperature);
    if (d.contains("remasking")) {
      cfg.decode.remasking = parse_remasking(d.at("remasking").get<std::string>());
    }
    read_into(d, "max_block_cap", cfg.decode.max_block_cap);
  }

  if (j.contains("grpo")) {
    const auto& g = j.at("grpo");
    require_known_keys(g,
                       {"group_size", "clip_eps", "kl_beta", "num_iterations", "p_mask",
                        "steps", "batch_prompts", "lr", "weight_decay", "clip_norm",
                        "ref_sync_steps", "rollout_temperature"},
                       "grpo");
    read_into(g, "group_size", cfg.grpo.group_size);
    read_into(g, "clip_eps", cfg.grpo.clip_eps);
    read_into(g, "kl_beta", cfg.grpo.kl_beta);
    read_into(g, "num_iterations", cfg.grpo.num_iterations);
    read_into(g, "p_mask", cfg.grpo.p_mask);
    read_into(g, "steps", cfg.grpo.steps);
    read_into(g, "batch_prompts", cfg.grpo.batch_prompts);
    read_into(g, "lr", cfg.grpo.lr);
    read_into(g, "weight_decay", cfg.grpo.weight_decay);
    read_into(g, "clip_norm", cfg.grpo.clip_norm);
    read_into(g, "ref_sync_steps", cfg.grpo.ref_sync_steps);
    read_into(g, "rollout_temperature", cfg.rollout_temperature);
  }

  if (j.contains("rewards")) {
    const auto& r = j.at("rewards");
    require_known_keys(
        r, {"alpha", "beta_ind", "gamma", "k_target", "disable_ent", "disable_ind"},
        "rewards");
    read_into(r, "alpha", cfg.rewards.alpha);
    read_into(r, "beta_ind", cfg.rewards.beta_ind);
    read_into(r, "gamma", cfg.rewards.gamma);
    read_into(r, "k_target", cfg.rewards.k_target);
    read_into(r, "disable_ent", cfg.rewards.disable_ent);
    read_into(r, "disable_ind", cfg.rewards.disable_ind);
  }

  if (j.contains("task")) {
    const auto& t = j.at("task");
    require_known_keys(
        t, {"kind", "train_size", "test_size", "chain_steps", "number_min", "number_max"},
        "task");
    read_into(t, "kind", cfg.task.kind);
    if (cfg.task.kind != "countdown3" && cfg.task.kind != "arith_chain") {
      throw std::invalid_argument("config: task.kind must be 'countdown3' or 'arith_chain'");
    }
    read_into(t, "train_size", cfg.task.train_size);
    read_into(t, "test_size", cfg.task.test_size);
    read_into(t, "chain_steps", cfg.task.chain_steps);
    read_into(t, "number_min", cfg.task.number_min);
    read_into(t, "number_max", cfg.task.number_max);
  }

  if (j.contains("analysis")) {
    const auto& a = j.at("analysis");
    require_known_keys(a, {"bins"}, "analysis");
    read_into(a, "bins", cfg.analysis.bins);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_run_config: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return parse_run_config(j);
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["model"] = {{"d_model", cfg.model.d_model},
                {"n_layers", cfg.model.n_layers},
                {"n_heads", cfg.model.n_heads},
                {"d_ff", cfg.model.d_ff},
                {"max_len", cfg.model.max_len},
                {"pretrain_steps", cfg.pretrain.steps},
                {"batch_size", cfg.pretrain.batch_size},
                {"lr", cfg.pretrain.lr},
                {"t_min", cfg.pretrain.t_min},
                {"weight_decay", cfg.pretrain.weight_decay},
                {"clip_norm", cfg.pretrain.clip_norm}};
  j["decode"] = {{"mode", cfg.decode.mode == DecodeMode::kFixed ? "fixed" : "dynamic"},
                 {"c", cfg.decode.c},
                 {"T", cfg.decode.T},
                 {"max_window", cfg.decode.max_window},
                 {"temperature", cfg.decode.temperature},
                 {"remasking", cfg.decode.remasking == Remasking::kLowConfidence
                                   ? "low_confidence"
                                   : "random"},
                 {"max_block_cap", cfg.decode.max_block_cap}};
  j["grpo"] = {{"group_size", cfg.grpo.group_size},
               {"clip_eps", cfg.grpo.clip_eps},
               {"kl_beta", cfg.grpo.kl_beta},
               {"num_iterations", cfg.grpo.num_iterations},
               {"p_mask", cfg.grpo.p_mask},
               {"steps", cfg.grpo.steps},
               {"batch_prompts", cfg.grpo.batch_prompts},
               {"lr", cfg.grpo.lr},
               {"weight_decay", cfg.grpo.weight_decay},
               {"clip_norm", cfg.grpo.clip_norm},
               {"ref_sync_steps", cfg.grpo.ref_sync_steps},
               {"rollout_temperature", cfg.rollout_temperature}};
  j["rewards"] = {{"alpha", cfg.rewards.alpha},
                  {"beta_ind", cfg.rewards.beta_ind},
                  {"gamma", cfg.rewards.gamma},
                  {"k_target", cfg.rewards.k_target},
                  {"disable_ent", cfg.rewards.disable_ent},
                  {"disable_ind", cfg.rewards.disable_ind}};
  j["task"] = {{"kind", cfg.task.kind},
               {"train_size", cfg.task.train_size},
               {"test_size", cfg.task.test_size},
               {"chain_steps", cfg.task.chain_steps},
               {"number_min", cfg.task.number_min},
               {"number_max", cfg.task.number_max}};
  j["analysis"] = {{"bins", cfg.analysis.bins}};
  return j;
}

uint64_t config_hash(const nlohmann::json& j) { return fnv1a64(j.dump()); }

}  // namespace medlab
