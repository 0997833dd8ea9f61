#include "medlab/tasks.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <unordered_set>

#include "medlab/rewards.hpp"

namespace medlab {

namespace {

void append_text(std::vector<TokenId>& out, std::string_view text) {
  for (char ch : text) {
    switch (ch) {
      case ' ': out.push_back(tok::kSpace); break;
      case '+': out.push_back(tok::kPlus); break;
      case '-': out.push_back(tok::kMinus); break;
      case '=': out.push_back(tok::kEquals); break;
      case ':': out.push_back(tok::kColon); break;
      case 'N': out.push_back(tok::kN); break;
      case 'T': out.push_back(tok::kT); break;
      case 'A': out.push_back(tok::kA); break;
      case 'C': out.push_back(tok::kC); break;
      default:
        if (ch >= '0' && ch <= '9') {
          out.push_back(digit_token(ch - '0'));
        } else {
          throw std::logic_error("append_text: unmapped character");
        }
    }
  }
}

}  // namespace

TaskInstance make_countdown_instance(const std::array<int, 3>& numbers, int sign2,
                                     int sign3) {
  TaskInstance inst;
  inst.kind = TaskKind::kCountdown3;
  inst.numbers = numbers;
  const long v1 = numbers[0] + static_cast<long>(sign2) * numbers[1];
  const long target = v1 + static_cast<long>(sign3) * numbers[2];
  inst.target = target;
  inst.answer = target;
  inst.expected_steps = 2;

  // Prompt: "N:a b c T:t"
  append_text(inst.prompt, "N:");
  append_number(inst.prompt, numbers[0]);
  append_text(inst.prompt, " ");
  append_number(inst.prompt, numbers[1]);
  append_text(inst.prompt, " ");
  append_number(inst.prompt, numbers[2]);
  append_text(inst.prompt, " T:");
  append_number(inst.prompt, target);

  // Reference: "a s b = v1 \block v1 s c = t \block A: a s b s c = t"
  auto sign_tok = [](int s) { return s > 0 ? tok::kPlus : tok::kMinus; };
  auto& ref = inst.reference_completion;
  append_number(ref, numbers[0]);
  ref.push_back(sign_tok(sign2));
  append_number(ref, numbers[1]);
  ref.push_back(tok::kEquals);
  append_number(ref, v1);
  ref.push_back(tok::kBlock);
  append_number(ref, v1);
  ref.push_back(sign_tok(sign3));
  append_number(ref, numbers[2]);
  ref.push_back(tok::kEquals);
  append_number(ref, target);
  ref.push_back(tok::kBlock);
  ref.push_back(tok::kA);
  ref.push_back(tok::kColon);
  append_number(ref, numbers[0]);
  ref.push_back(sign_tok(sign2));
  append_number(ref, numbers[1]);
  ref.push_back(sign_tok(sign3));
  append_number(ref, numbers[2]);
  ref.push_back(tok::kEquals);
  append_number(ref, target);

  // Fingerprint over the sorted number multiset and target, so reorderings
  // of the same problem cannot leak across splits.
  std::array<int, 3> sorted = numbers;
  std::sort(sorted.begin(), sorted.end());
  std::string key = "countdown3|";
  for (int v : sorted) key += std::to_string(v) + ",";
  key += "|" + std::to_string(target);
  inst.fingerprint = fnv1a64(key);
  return inst;
}

std::string TaskInstance::fingerprint_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fingerprint));
  return std::string(buf);
}

std::vector<TaskInstance> gen_countdown(Rng& rng, int n, int number_min, int number_max) {
  if (n < 1) throw std::invalid_argument("gen_countdown: n must be >= 1");
  if (number_min < 1 || number_max > 99 || number_min >= number_max) {
    throw std::invalid_argument("gen_countdown: number range must lie within [1, 99]");
  }
  std::vector<TaskInstance> out;
  std::unordered_set<uint64_t> seen;
  const int span = number_max - number_min + 1;
  while (static_cast<int>(out.size()) < n) {
    std::array<int, 3> numbers{};
    numbers[0] = number_min + static_cast<int>(rng.below(static_cast<uint64_t>(span)));
    do {
      numbers[1] = number_min + static_cast<int>(rng.below(static_cast<uint64_t>(span)));
    } while (numbers[1] == numbers[0]);
    do {
      numbers[2] = number_min + static_cast<int>(rng.below(static_cast<uint64_t>(span)));
    } while (numbers[2] == numbers[0] || numbers[2] == numbers[1]);
    const int sign2 = rng.bernoulli(0.5) ? 1 : -1;
    const int sign3 = rng.bernoulli(0.5) ? 1 : -1;
    TaskInstance inst = make_countdown_instance(numbers, sign2, sign3);
    if (!seen.insert(inst.fingerprint).second) continue;
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<TaskInstance> gen_arith_chain(Rng& rng, int n, int steps) {
  if (n < 1) throw std::invalid_argument("gen_arith_chain: n must be >= 1");
  if (steps < 2) throw std::invalid_argument("gen_arith_chain: steps must be >= 2");
  std::vector<TaskInstance> out;
  std::unordered_set<uint64_t> seen;
  while (static_cast<int>(out.size()) < n) {
    long value = 1 + static_cast<long>(rng.below(50));
    std::vector<std::pair<int, long>> ops;  // (sign, operand)
    std::vector<long> partials{value};
    bool ok = true;
    for (int s = 0; s < steps; ++s) {
      long next = -1;
      int sign = 0;
      long operand = 0;
      for (int attempt = 0; attempt < 64; ++attempt) {
        sign = rng.bernoulli(0.5) ? 1 : -1;
        operand = 1 + static_cast<long>(rng.below(20));
        next = value + sign * operand;
        if (next >= 0 && next <= 99) break;
        next = -1;
      }
      if (next < 0) {
        ok = false;
        break;
      }
      ops.emplace_back(sign, operand);
      value = next;
      partials.push_back(value);
    }
    if (!ok) continue;

    TaskInstance inst;
    inst.kind = TaskKind::kArithChain;
    inst.answer = value;
    inst.expected_steps = steps;

    // Prompt: "C:a+b-c...=", completion: one "x op y = z" step per
    // operation, each closed by the indicator, then "A:value".
    append_text(inst.prompt, "C:");
    append_number(inst.prompt, partials[0]);
    std::string key = "arith|" + std::to_string(partials[0]);
    for (const auto& [sign, operand] : ops) {
      inst.prompt.push_back(sign > 0 ? tok::kPlus : tok::kMinus);
      append_number(inst.prompt, operand);
      key += (sign > 0 ? "+" : "-") + std::to_string(operand);
    }
    inst.prompt.push_back(tok::kEquals);
    inst.fingerprint = fnv1a64(key);
    if (!seen.insert(inst.fingerprint).second) continue;

    auto& ref = inst.reference_completion;
    for (size_t s = 0; s < ops.size(); ++s) {
      append_number(ref, partials[s]);
      ref.push_back(ops[s].first > 0 ? tok::kPlus : tok::kMinus);
      append_number(ref, ops[s].second);
      ref.push_back(tok::kEquals);
      append_number(ref, partials[s + 1]);
      ref.push_back(tok::kBlock);
    }
    ref.push_back(tok::kA);
    ref.push_back(tok::kColon);
    append_number(ref, value);
    out.push_back(std::move(inst));
  }
  return out;
}

Sequence reference_sequence(const TaskInstance& inst, const Vocabulary& vocab,
                            int total_len) {
  Sequence seq;
  seq.prompt_len = static_cast<int>(inst.prompt.size());
  seq.tokens = inst.prompt;
  seq.tokens.insert(seq.tokens.end(), inst.reference_completion.begin(),
                    inst.reference_completion.end());
  seq.tokens.push_back(vocab.eos_id);
  if (static_cast<int>(seq.tokens.size()) > total_len) {
    throw std::invalid_argument("reference_sequence: instance exceeds total_len");
  }
  seq.tokens.resize(static_cast<size_t>(total_len), vocab.pad_id);
  return seq;
}

namespace {

// Last "A:<integer>" value in the rendered text, if any.
std::optional<long> last_answer_value(std::string_view text) {
  std::optional<long> best;
  for (size_t i = 0; i + 1 < text.size(); ++i) {
    if (text[i] != 'A' || text[i + 1] != ':') continue;
    size_t p = i + 2;
    bool neg = false;
    if (p < text.size() && text[p] == '-') {
      neg = true;
      ++p;
    }
    if (p >= text.size() || !std::isdigit(static_cast<unsigned char>(text[p]))) continue;
    long v = 0;
    while (p < text.size() && std::isdigit(static_cast<unsigned char>(text[p]))) {
      v = v * 10 + (text[p] - '0');
      ++p;
    }
    best = neg ? -v : v;
  }
  return best;
}

}  // namespace

VerifyResult verify(const TaskInstance& inst, const Sequence& generated,
                    const Vocabulary& vocab) {
  const std::string text = vocab.render(generated.completion(), /*stop_at_eos=*/true);
  VerifyResult res;
  if (inst.kind == TaskKind::kCountdown3) {
    res.task_reward = countdown_task_reward(text, inst.numbers, inst.target);
    res.correct = res.task_reward == 1.0;
  } else {
    const auto value = last_answer_value(text);
    res.correct = value.has_value() && *value == inst.answer;
    res.task_reward = res.correct ? 1.0 : 0.0;
  }
  return res;
}

SplitPair make_countdown_splits(uint64_t seed, int train_size, int test_size,
                                int number_min, int number_max) {
  SplitPair pair;
  pair.train.split = "train";
  pair.train.seed = seed;
  Rng train_rng(mix_seed(seed, 1));
  pair.train.instances = gen_countdown(train_rng, train_size, number_min, number_max);

  std::unordered_set<uint64_t> train_fp;
  for (const auto& inst : pair.train.instances) train_fp.insert(inst.fingerprint);

  pair.test.split = "test";
  pair.test.seed = seed;
  Rng test_rng(mix_seed(seed, 2));
  std::vector<TaskInstance> fresh;
  while (static_cast<int>(pair.test.instances.size()) < test_size) {
    fresh = gen_countdown(test_rng, 1, number_min, number_max);
    if (train_fp.count(fresh[0].fingerprint) > 0) continue;
    bool dup = false;
    for (const auto& existing : pair.test.instances) {
      if (existing.fingerprint == fresh[0].fingerprint) {
        dup = true;
        break;
      }
    }
    if (!dup) pair.test.instances.push_back(std::move(fresh[0]));
  }
  return pair;
}

}  // namespace medlab
