// Command-line pipelines: pretraining, RL post-training, generation,
// evaluation, trace analysis, the rank-equivalence check and the decoding
// overhead benchmark. Every run directory gets a config copy, a manifest
// (build id, config hash, seed) and the subcommand's outputs; identical
// config and seed reproduce every model-derived file byte for byte.
#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "medlab/analysis.hpp"
#include "medlab/checkpoint.hpp"
#include "medlab/config.hpp"
#include "medlab/decode.hpp"
#include "medlab/grpo.hpp"
#include "medlab/rewards.hpp"
#include "medlab/tasks.hpp"
#include "medlab/trace.hpp"
#include "medlab/training.hpp"

#ifndef MEDLAB_GIT_DESCRIBE
#define MEDLAB_GIT_DESCRIBE "unknown"
#endif

namespace medlab {
namespace {

namespace fs = std::filesystem;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "run";
  uint64_t seed = 42;
  uint64_t data_seed = 12345;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return parse_run_config(nlohmann::json::object());
  return load_run_config(path);
}

void write_run_preamble(const fs::path& out, const RunConfig& cfg, uint64_t seed) {
  fs::create_directories(out);
  const nlohmann::json cj = run_config_to_json(cfg);
  {
    std::ofstream f(out / "config.json", std::ios::binary);
    f << cj.dump(2) << "\n";
  }
  nlohmann::json manifest;
  manifest["git_describe"] = MEDLAB_GIT_DESCRIBE;
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016" PRIx64, config_hash(cj));
  manifest["config_hash"] = hash;
  manifest["seed"] = seed;
  std::ofstream f(out / "manifest.json", std::ios::binary);
  f << manifest.dump(2) << "\n";
}

SplitPair build_splits(const RunConfig& cfg, uint64_t data_seed) {
  if (cfg.task.kind == "countdown3") {
    return make_countdown_splits(data_seed, cfg.task.train_size, cfg.task.test_size,
                                 cfg.task.number_min, cfg.task.number_max);
  }
  // arith_chain: split a deduplicated pool.
  Rng rng(mix_seed(data_seed, 3));
  std::vector<TaskInstance> pool =
      gen_arith_chain(rng, cfg.task.train_size + cfg.task.test_size, cfg.task.chain_steps);
  SplitPair pair;
  pair.train.split = "train";
  pair.train.seed = data_seed;
  pair.test.split = "test";
  pair.test.seed = data_seed;
  for (size_t i = 0; i < pool.size(); ++i) {
    if (static_cast<int>(i) < cfg.task.train_size) {
      pair.train.instances.push_back(std::move(pool[i]));
    } else {
      pair.test.instances.push_back(std::move(pool[i]));
    }
  }
  return pair;
}

std::vector<Sequence> pretrain_corpus(const RunConfig& cfg, const Vocabulary& vocab,
                                      const Dataset& train) {
  std::vector<Sequence> corpus;
  corpus.reserve(train.instances.size());
  for (const auto& inst : train.instances) {
    corpus.push_back(reference_sequence(inst, vocab, cfg.decode.max_window));
  }
  return corpus;
}

int cmd_pretrain(const CommonArgs& args) {
  const RunConfig cfg = load_config_or_default(args.config_path);
  const fs::path out(args.out_dir);
  write_run_preamble(out, cfg, args.seed);

  const Vocabulary vocab = default_vocabulary();
  ModelConfig mc = cfg.model;
  mc.vocab_size = vocab.size;
  const SplitPair splits = build_splits(cfg, args.data_seed);
  const std::vector<Sequence> corpus = pretrain_corpus(cfg, vocab, splits.train);

  PretrainConfig pc = cfg.pretrain;
  pc.seed = args.seed;
  const PretrainResult res = pretrain(mc, vocab, corpus, pc);

  save_checkpoint((out / "checkpoint.json").string(), vocab, res.params);
  std::ofstream curve(out / "loss_curve.csv", std::ios::binary);
  curve << "step,loss\n";
  for (const auto& [step, loss] : res.loss_curve) {
    curve << step << "," << fmt_double(loss) << "\n";
  }
  std::cout << "pretrained " << pc.steps << " steps on " << corpus.size()
            << " sequences; final loss " << res.loss_curve.back().second << "\n";
  return 0;
}

int cmd_rl_train(const CommonArgs& args, const std::string& checkpoint_path) {
  const RunConfig cfg = load_config_or_default(args.config_path);
  const fs::path out(args.out_dir);
  write_run_preamble(out, cfg, args.seed);

  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const SplitPair splits = build_splits(cfg, args.data_seed);
  const GrpoConfig gc = cfg.assemble_grpo(args.seed);

  const RlTrainResult res =
      rl_train_loop(ckpt.params, ckpt.vocab, splits.train.instances, gc);

  save_checkpoint((out / "checkpoint.json").string(), ckpt.vocab, res.params);
  std::ofstream log(out / "training_log.csv", std::ios::binary);
  log << "step,mean_total,mean_r_ent,mean_r_ind,mean_r_task,mean_K,mean_block_size,"
         "objective,excluded_token_frac\n";
  for (const auto& row : res.log) {
    log << row.step << "," << fmt_double(row.mean_total) << ","
        << fmt_double(row.mean_r_ent) << "," << fmt_double(row.mean_r_ind) << ","
        << fmt_double(row.mean_r_task) << "," << fmt_double(row.mean_k) << ","
        << fmt_double(row.mean_block_size) << "," << fmt_double(row.objective) << ","
        << fmt_double(row.excluded_token_frac) << "\n";
  }
  std::cout << "rl-train finished " << res.log.size() << " optimizer steps\n";
  return 0;
}

struct EvalRow {
  SampleRecord record;
  DecodeTrace trace;
};

EvalRow evaluate_instance(const ModelParams& params, const Vocabulary& vocab,
                          const TaskInstance& inst, const DecodeConfig& dc,
                          uint64_t seed, int k_target, const std::string& sample_id) {
  Rng rng(mix_seed(seed, inst.fingerprint));
  GenerateResult gen = generate(params, vocab, inst.prompt, dc, rng);

  EvalRow row;
  row.record.sample_id = sample_id;
  row.record.fingerprint = inst.fingerprint;
  row.record.mode = dc.mode == DecodeMode::kFixed ? "fixed" : "dynamic";
  row.record.k = static_cast<int>(gen.trace.blocks.size());
  const std::vector<double> entropies = gen.trace.block_entropies();
  if (entropies.size() >= 2) {
    row.record.r_scc = r_scc(EntropySequence{entropies}).r_scc;
  }
  row.record.r_ent = entropy_descent_reward(EntropySequence{entropies});
  row.record.r_ind = indicator_reward(row.record.k, k_target);
  const VerifyResult v = verify(inst, gen.sequence, vocab);
  row.record.r_task = v.task_reward;
  row.record.correct = v.correct;
  row.trace = std::move(gen.trace);
  return row;
}

DecodeConfig eval_decode_config(const RunConfig& cfg, const std::string& mode_override,
                                int c_override) {
  DecodeConfig dc = cfg.decode;
  if (!mode_override.empty()) {
    if (mode_override == "fixed") {
      dc.mode = DecodeMode::kFixed;
    } else if (mode_override == "dynamic") {
      dc.mode = DecodeMode::kDynamic;
    } else {
      throw std::invalid_argument("--mode must be 'fixed' or 'dynamic'");
    }
  }
  if (c_override > 0) {
    dc.c = c_override;
    dc.max_block_cap = c_override;
  }
  return dc;
}

int run_eval(const CommonArgs& args, const std::string& checkpoint_path,
             const std::string& mode_override, int c_override, int limit,
             bool print_text) {
  const RunConfig cfg = load_config_or_default(args.config_path);
  const fs::path out(args.out_dir);
  write_run_preamble(out, cfg, args.seed);

  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const SplitPair splits = build_splits(cfg, args.data_seed);
  const DecodeConfig dc = eval_decode_config(cfg, mode_override, c_override);

  const int total = static_cast<int>(splits.test.instances.size());
  const int n = limit > 0 ? std::min(limit, total) : total;

  std::ofstream trace_file(out / "trace.jsonl", std::ios::binary);
  nlohmann::json header_cfg = run_config_to_json(cfg);
  header_cfg["decode"]["mode"] = dc.mode == DecodeMode::kFixed ? "fixed" : "dynamic";
  header_cfg["decode"]["c"] = dc.c;
  header_cfg["decode"]["max_block_cap"] = dc.max_block_cap;
  write_trace_header(trace_file, header_cfg, args.seed);

  int correct = 0;
  std::vector<double> rsccs;
  double k_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const TaskInstance& inst = splits.test.instances[static_cast<size_t>(i)];
    const EvalRow row = evaluate_instance(ckpt.params, ckpt.vocab, inst, dc, args.seed,
                                          cfg.rewards.k_target, "s" + std::to_string(i));
    write_block_records(trace_file, row.record.sample_id, row.trace);
    write_sample_record(trace_file, row.record);
    if (row.record.correct) ++correct;
    if (row.record.r_scc.has_value()) rsccs.push_back(*row.record.r_scc);
    k_sum += row.record.k;
    if (print_text) {
      std::cout << ckpt.vocab.render(row.trace.final_sequence.tokens) << "\n";
    }
  }

  nlohmann::json summary;
  summary["instances"] = n;
  summary["pass1"] = static_cast<double>(correct) / n;
  summary["mean_K"] = k_sum / n;
  if (!rsccs.empty()) {
    const RMedStats stats = r_med_stats(rsccs);
    summary["mean_r_scc"] = stats.mean_r_scc;
    summary["r_med"] = stats.proportion_positive;
    summary["scored_samples"] = rsccs.size();
  }
  {
    std::ofstream f(out / "summary.json", std::ios::binary);
    f << summary.dump(2) << "\n";
  }
  std::cout << "evaluated " << n << " instances, pass@1 = "
            << static_cast<double>(correct) / n << "\n";
  return 0;
}

int cmd_analyze(const std::string& traces_path, const std::string& baseline_path,
                const std::string& out_dir, int bins) {
  const fs::path out(out_dir);
  fs::create_directories(out);
  const TraceFile method = read_trace_file(traces_path);

  std::vector<SampleRecord> scored;
  for (const auto& rec : method.samples) {
    if (rec.r_scc.has_value()) scored.push_back(rec);
  }

  nlohmann::json report;
  report["samples"] = method.samples.size();
  report["scored_samples"] = scored.size();

  int correct = 0;
  for (const auto& rec : method.samples) {
    if (rec.correct) ++correct;
  }
  report["pass1"] = method.samples.empty()
                        ? 0.0
                        : static_cast<double>(correct) / method.samples.size();

  std::ofstream bins_csv(out / "bins.csv", std::ios::binary);
  bins_csv << "bin_lo,bin_hi,count,accuracy\n";
  if (!scored.empty()) {
    const BinReport bin_rep = bin_by_rscc(scored, bins);
    for (const auto& b : bin_rep.bins) {
      bins_csv << fmt_double(b.lo) << "," << fmt_double(b.hi) << "," << b.count << ","
               << (b.accuracy.has_value() ? fmt_double(*b.accuracy) : "") << "\n";
    }
    if (bin_rep.bin_accuracy_rank_corr.has_value()) {
      report["bin_accuracy_rank_corr"] = *bin_rep.bin_accuracy_rank_corr;
    }
    std::vector<double> rsccs;
    for (const auto& rec : scored) rsccs.push_back(*rec.r_scc);
    const RMedStats stats = r_med_stats(rsccs);
    report["mean_r_scc"] = stats.mean_r_scc;
    report["r_med"] = stats.proportion_positive;
  }

  if (!baseline_path.empty()) {
    const TraceFile baseline = read_trace_file(baseline_path);
    const HardSampleReport hard = hard_sample_compare(baseline.samples, method.samples);
    report["hard_samples"] = {{"hard_count", hard.hard_count},
                              {"fixed_count", hard.fixed_count},
                              {"baseline_mean_rscc", hard.baseline_mean_rscc},
                              {"method_mean_rscc", hard.method_mean_rscc},
                              {"mean_rscc_delta", hard.mean_rscc_delta}};
    std::ofstream hard_csv(out / "hard_samples.csv", std::ios::binary);
    hard_csv << "hard_count,fixed_count,baseline_mean_rscc,method_mean_rscc,"
                "mean_rscc_delta\n";
    hard_csv << hard.hard_count << "," << hard.fixed_count << ","
             << fmt_double(hard.baseline_mean_rscc) << ","
             << fmt_double(hard.method_mean_rscc) << ","
             << fmt_double(hard.mean_rscc_delta) << "\n";
  }

  std::ofstream f(out / "analysis.json", std::ios::binary);
  f << report.dump(2) << "\n";
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_theorem1(int kmax, const std::string& out_dir) {
  const Theorem1Report rep = theorem1_check(kmax);
  std::cout << "rank-equivalence check up to K = " << rep.k_max << "\n";
  for (const auto& per : rep.per_k) {
    std::cout << "  K = " << per.k << ": " << per.count << " permutations, maximiser sets "
              << (per.maximiser_sets_equal ? "equal" : "DIFFER") << "\n";
  }
  std::cout << rep.permutations_checked << " permutations checked, "
            << rep.counterexamples << " counterexamples -> "
            << (rep.pass ? "PASS" : "FAIL") << "\n";
  for (const auto& note : rep.counterexample_notes) std::cout << "  " << note << "\n";

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    nlohmann::json j;
    j["k_max"] = rep.k_max;
    j["permutations_checked"] = rep.permutations_checked;
    j["counterexamples"] = rep.counterexamples;
    j["pass"] = rep.pass;
    std::ofstream f(fs::path(out_dir) / "theorem1.json", std::ios::binary);
    f << j.dump(2) << "\n";
  }
  return rep.pass ? 0 : 1;
}

int cmd_bench(const CommonArgs& args, const std::string& checkpoint_path, int runs,
              int instances) {
  const RunConfig cfg = load_config_or_default(args.config_path);
  const fs::path out(args.out_dir);
  write_run_preamble(out, cfg, args.seed);

  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const SplitPair splits = build_splits(cfg, args.data_seed);
  const int n = std::min<int>(instances, static_cast<int>(splits.test.instances.size()));
  const std::vector<TaskInstance> subset(splits.test.instances.begin(),
                                         splits.test.instances.begin() + n);

  DecodeConfig base = cfg.decode;
  base.seed = args.seed;
  const OverheadReport rep = bench_overhead(ckpt.params, ckpt.vocab, subset, base, runs);

  std::ofstream csv(out / "overhead.csv", std::ios::binary);
  csv << "run,ratio\n";
  for (size_t i = 0; i < rep.per_run_ratio.size(); ++i) {
    csv << i << "," << fmt_double(rep.per_run_ratio[i]) << "\n";
  }
  nlohmann::json j;
  j["fixed_seconds_per_token"] = rep.fixed_seconds_per_token;
  j["dynamic_seconds_per_token"] = rep.dynamic_seconds_per_token;
  j["median_ratio"] = rep.median_ratio;
  j["tokens_per_run"] = rep.tokens_per_run;
  j["scan_fit_slope"] = rep.scan_fit_slope;
  j["scan_fit_r2"] = rep.scan_fit_r2;
  nlohmann::json scans = nlohmann::json::array();
  for (const auto& [w, sec] : rep.scan_cost) {
    scans.push_back({{"window", w}, {"seconds_per_scan", sec}});
  }
  j["scan_cost"] = scans;
  std::ofstream f(out / "overhead.json", std::ios::binary);
  f << j.dump(2) << "\n";
  std::cout << "median dynamic/fixed ratio over " << runs << " runs: " << rep.median_ratio
            << "\n";
  return 0;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"desk-scale masked-diffusion decoding and RL laboratory"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string checkpoint_path;
  std::string traces_path, baseline_path;
  std::string mode_override;
  int c_override = 0;
  int bins = 6;
  int kmax = 6;
  int limit = 1;
  int runs = 3;
  int bench_instances = 8;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "JSON run configuration")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", args.out_dir, "output directory");
    sub->add_option("--seed", args.seed, "run seed");
    sub->add_option("--data-seed", args.data_seed,
                    "dataset generator seed (fixed across arms by default)");
  };

  CLI::App* pre = app.add_subcommand("pretrain", "denoising pretraining on the task corpus");
  add_common(pre);

  CLI::App* rl = app.add_subcommand("rl-train", "GRPO post-training from a checkpoint");
  add_common(rl);
  rl->add_option("--checkpoint", checkpoint_path, "starting checkpoint")
      ->required()
      ->check(CLI::ExistingFile);

  CLI::App* gen =
      app.add_subcommand("generate", "decode a few test instances and dump traces");
  add_common(gen);
  gen->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
  gen->add_option("--mode", mode_override, "fixed | dynamic");
  gen->add_option("--c", c_override, "fixed block size / dynamic cap override");
  gen->add_option("--n", limit, "number of instances");

  CLI::App* ev =
      app.add_subcommand("evaluate", "score the held-out split and write trace-v1");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
  ev->add_option("--mode", mode_override, "fixed | dynamic");
  ev->add_option("--c", c_override, "fixed block size / dynamic cap override");

  CLI::App* an = app.add_subcommand("analyze", "bin traces by rank statistic, compare runs");
  an->add_option("--traces", traces_path, "trace-v1 JSONL file")
      ->required()
      ->check(CLI::ExistingFile);
  an->add_option("--baseline", baseline_path, "baseline trace for hard-sample comparison")
      ->check(CLI::ExistingFile);
  an->add_option("--out", args.out_dir, "output directory");
  an->add_option("--bins", bins, "bin count over [-1, 1]");

  CLI::App* th = app.add_subcommand("theorem1", "exhaustive rank-equivalence check");
  th->add_option("--kmax", kmax, "largest block count to enumerate");
  th->add_option("--out", args.out_dir, "output directory");

  CLI::App* bench = app.add_subcommand("bench-overhead", "fixed vs dynamic decoding cost");
  add_common(bench);
  bench->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
  bench->add_option("--runs", runs, "independent timing runs");
  bench->add_option("--instances", bench_instances, "prompts per run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // unknown flags and bad values exit 2
  }

  if (pre->parsed()) return cmd_pretrain(args);
  if (rl->parsed()) return cmd_rl_train(args, checkpoint_path);
  if (gen->parsed()) {
    return run_eval(args, checkpoint_path, mode_override, c_override, limit,
                    /*print_text=*/true);
  }
  if (ev->parsed()) {
    return run_eval(args, checkpoint_path, mode_override, c_override, /*limit=*/0,
                    /*print_text=*/false);
  }
  if (an->parsed()) return cmd_analyze(traces_path, baseline_path, args.out_dir, bins);
  if (th->parsed()) return cmd_theorem1(kmax, args.out_dir);
  if (bench->parsed()) return cmd_bench(args, checkpoint_path, runs, bench_instances);
  return 2;
}

}  // namespace
}  // namespace medlab

int main(int argc, char** argv) {
  try {
    return medlab::dispatch(argc, argv);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
