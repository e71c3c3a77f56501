#include "eepo/env.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "eepo/rng.hpp"

namespace eepo {

TaskSpec::TaskSpec(int task_id, TokenSeq prompt, std::vector<std::vector<TokenSeq>> modes, int vocab,
                   int max_len)
    : task_id_(task_id), prompt_(std::move(prompt)), modes_(std::move(modes)), vocab_(vocab),
      max_len_(max_len) {
  if (vocab_ < 2) throw std::invalid_argument("task: vocabulary must hold at least 2 tokens");
  if (max_len_ < 1) throw std::invalid_argument("task: max_len must be >= 1");
  for (Token t : prompt_) {
    if (t < 0 || t >= vocab_) throw std::invalid_argument("task: prompt token outside vocabulary");
  }
  for (std::size_t m = 0; m < modes_.size(); ++m) {
    if (modes_[m].empty()) throw std::invalid_argument("task: empty mode");
    for (const TokenSeq& seq : modes_[m]) {
      if (seq.empty() || seq.back() != kEos) {
        throw std::invalid_argument("task: accepting answers must end with EOS");
      }
      if (static_cast<int>(seq.size()) > max_len_) {
        throw std::invalid_argument("task: accepting answer longer than max_len");
      }
      for (std::size_t i = 0; i < seq.size(); ++i) {
        if (seq[i] < 0 || seq[i] >= vocab_) throw std::invalid_argument("task: token outside vocabulary");
        if (i + 1 < seq.size() && seq[i] == kEos) {
          throw std::invalid_argument("task: EOS inside an accepting answer");
        }
      }
      if (!index_.emplace(seq, static_cast<int>(m)).second) {
        throw std::invalid_argument("task: accepting answers of different modes overlap");
      }
    }
  }
}

std::optional<int> TaskSpec::mode_of(const TokenSeq& answer) const {
  auto it = index_.find(answer);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

RewardOutcome evaluate_answer(const TaskSpec& task, const TokenSeq& answer, bool terminated) {
  for (Token t : answer) {
    if (t < 0 || t >= task.vocab()) throw std::invalid_argument("evaluate_answer: token outside vocabulary");
  }
  if (!terminated) return {};
  if (auto mode = task.mode_of(answer)) return {1, mode};
  return {};
}

std::string to_string(SuiteKind kind) {
  switch (kind) {
    case SuiteKind::kTwoModeImbalanced: return "two_mode_imbalanced";
    case SuiteKind::kKModeUniform: return "k_mode_uniform";
    case SuiteKind::kSingleMode: return "single_mode";
  }
  return "unknown";
}

SuiteKind suite_kind_from_string(const std::string& name) {
  if (name == "two_mode_imbalanced") return SuiteKind::kTwoModeImbalanced;
  if (name == "k_mode_uniform") return SuiteKind::kKModeUniform;
  if (name == "single_mode") return SuiteKind::kSingleMode;
  throw std::invalid_argument("unknown suite kind '" + name + "'");
}

const TaskSpec& TaskSuite::task(int task_id) const {
  for (const TaskSpec& t : tasks) {
    if (t.task_id() == task_id) return t;
  }
  throw std::invalid_argument("suite: unknown task id " + std::to_string(task_id));
}

namespace {

// Distinct non-EOS tokens, in random order.
std::vector<Token> pick_tokens(std::mt19937_64& rng, int vocab, int count) {
  std::vector<Token> pool(static_cast<std::size_t>(vocab - 1));
  std::iota(pool.begin(), pool.end(), Token{1});
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

void expand(const std::vector<std::vector<Token>>& choices, std::size_t pos, TokenSeq& cur,
            std::vector<TokenSeq>& out) {
  if (pos == choices.size()) {
    TokenSeq seq = cur;
    seq.push_back(kEos);
    out.push_back(std::move(seq));
    return;
  }
  for (Token t : choices[pos]) {
    cur.push_back(t);
    expand(choices, pos + 1, cur, out);
    cur.pop_back();
  }
}

}  // namespace

TaskSuite build_task_suite(const SuiteParams& params) {
  if (params.vocab < 4) throw std::invalid_argument("suite: vocab must be >= 4");
  if (params.answer_len < 1) throw std::invalid_argument("suite: answer_len must be >= 1");
  if (params.num_tasks < 1) throw std::invalid_argument("suite: num_tasks must be >= 1");
  if (params.prompt_len < 0) throw std::invalid_argument("suite: prompt_len must be >= 0");

  int modes = params.num_modes;
  int branching = params.branching;
  switch (params.kind) {
    case SuiteKind::kSingleMode:
      modes = 1;
      branching = 1;
      break;
    case SuiteKind::kTwoModeImbalanced:
      modes = 2;
      break;
    case SuiteKind::kKModeUniform:
      break;
  }
  if (modes < 1) throw std::invalid_argument("suite: need at least one mode");
  if (branching < 1) throw std::invalid_argument("suite: branching must be >= 1");
  // Modes are told apart by their first token, so each needs its own.
  if (modes > params.vocab - 1) {
    throw std::invalid_argument("suite: more modes than distinct first tokens");
  }
  if (branching > params.vocab - 1) {
    throw std::invalid_argument("suite: branching exceeds the non-EOS vocabulary");
  }

  TaskSuite suite;
  suite.params = params;
  for (int i = 0; i < params.num_tasks; ++i) {
    std::mt19937_64 rng(RngStream::child(params.seed, StreamDomain::kSuite,
                                         {static_cast<std::uint64_t>(i)})
                            .next());
    TokenSeq prompt;
    for (int p = 0; p < params.prompt_len; ++p) {
      prompt.push_back(static_cast<Token>(1 + rng() % static_cast<std::uint64_t>(params.vocab - 1)));
    }
    const std::vector<Token> firsts = pick_tokens(rng, params.vocab, modes);
    std::vector<std::vector<TokenSeq>> accepting;
    for (int m = 0; m < modes; ++m) {
      std::vector<std::vector<Token>> choices{{firsts[static_cast<std::size_t>(m)]}};
      for (int pos = 1; pos < params.answer_len; ++pos) {
        std::vector<Token> c = pick_tokens(rng, params.vocab, branching);
        std::sort(c.begin(), c.end());
        choices.push_back(std::move(c));
      }
      std::vector<TokenSeq> seqs;
      TokenSeq cur;
      expand(choices, 0, cur, seqs);
      accepting.push_back(std::move(seqs));
    }
    const int task_id = params.first_task_id + i;
    suite.tasks.emplace_back(task_id, std::move(prompt), std::move(accepting), params.vocab,
                             params.answer_len + 1);
    if (params.kind == SuiteKind::kTwoModeImbalanced && params.delta != 0.0) {
      suite.bias.push_back({task_id, {}, firsts[0], params.delta});
    }
  }
  return suite;
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                    const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) ==
        known.end()) {
      throw std::invalid_argument(where + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace

nlohmann::json suite_params_to_json(const SuiteParams& p) {
  return {{"kind", to_string(p.kind)},     {"num_tasks", p.num_tasks},
          {"vocab", p.vocab},              {"answer_len", p.answer_len},
          {"num_modes", p.num_modes},      {"branching", p.branching},
          {"prompt_len", p.prompt_len},    {"delta", p.delta},
          {"seed", p.seed},                {"first_task_id", p.first_task_id}};
}

SuiteParams suite_params_from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"kind", "num_tasks", "vocab", "answer_len", "num_modes", "branching", "prompt_len",
                  "delta", "seed", "first_task_id"},
                 "suite");
  SuiteParams p;
  try {
    if (j.contains("kind")) p.kind = suite_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("num_tasks")) p.num_tasks = j.at("num_tasks").get<int>();
    if (j.contains("vocab")) p.vocab = j.at("vocab").get<int>();
    if (j.contains("answer_len")) p.answer_len = j.at("answer_len").get<int>();
    if (j.contains("num_modes")) p.num_modes = j.at("num_modes").get<int>();
    if (j.contains("branching")) p.branching = j.at("branching").get<int>();
    if (j.contains("prompt_len")) p.prompt_len = j.at("prompt_len").get<int>();
    if (j.contains("delta")) p.delta = j.at("delta").get<double>();
    if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("first_task_id")) p.first_task_id = j.at("first_task_id").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("suite: ") + e.what());
  }
  return p;
}

nlohmann::json suite_to_json(const TaskSuite& suite) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const TaskSpec& t : suite.tasks) {
    tasks.push_back({{"task_id", t.task_id()},
                     {"prompt", t.prompt()},
                     {"vocab", t.vocab()},
                     {"max_len", t.max_len()},
                     {"modes", t.modes()}});
  }
  nlohmann::json bias = nlohmann::json::array();
  for (const BiasEntry& b : suite.bias) {
    bias.push_back({{"task_id", b.task_id}, {"prefix", b.prefix}, {"token", b.token}, {"delta", b.delta}});
  }
  return {{"params", suite_params_to_json(suite.params)}, {"tasks", tasks}, {"bias", bias}};
}

TaskSuite suite_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"params", "tasks", "bias"}, "suite file");
  TaskSuite suite;
  suite.params = suite_params_from_json(j.value("params", nlohmann::json::object()));
  if (!j.contains("tasks")) return build_task_suite(suite.params);
  try {
    for (const auto& t : j.at("tasks")) {
      suite.tasks.emplace_back(t.at("task_id").get<int>(), t.at("prompt").get<TokenSeq>(),
                               t.at("modes").get<std::vector<std::vector<TokenSeq>>>(),
                               t.at("vocab").get<int>(), t.at("max_len").get<int>());
    }
    for (const auto& b : j.value("bias", nlohmann::json::array())) {
      suite.bias.push_back({b.at("task_id").get<int>(), b.at("prefix").get<TokenSeq>(),
                            b.at("token").get<Token>(), b.at("delta").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("suite file: ") + e.what());
  }
  return suite;
}

}  // namespace eepo
