#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "eepo/types.hpp"

namespace eepo {

/// A prompt plus disjoint sets of accepting answers ("modes"). Every accepting
/// answer ends with kEos and fits in max_len tokens.
class TaskSpec {
 public:
  TaskSpec(int task_id, TokenSeq prompt, std::vector<std::vector<TokenSeq>> modes, int vocab,
           int max_len);

  int task_id() const { return task_id_; }
  const TokenSeq& prompt() const { return prompt_; }
  const std::vector<std::vector<TokenSeq>>& modes() const { return modes_; }
  int num_modes() const { return static_cast<int>(modes_.size()); }
  int vocab() const { return vocab_; }
  int max_len() const { return max_len_; }

  /// Mode index of an accepting answer, or nullopt.
  std::optional<int> mode_of(const TokenSeq& answer) const;

 private:
  int task_id_;
  TokenSeq prompt_;
  std::vector<std::vector<TokenSeq>> modes_;
  int vocab_;
  int max_len_;
  std::map<TokenSeq, int> index_;
};

struct RewardOutcome {
  int reward = 0;
  std::optional<int> mode;
};

/// Binary rule reward: 1 iff the answer terminated and matches an accepting
/// sequence exactly.
RewardOutcome evaluate_answer(const TaskSpec& task, const TokenSeq& answer, bool terminated);

enum class SuiteKind { kTwoModeImbalanced, kKModeUniform, kSingleMode };

std::string to_string(SuiteKind kind);
SuiteKind suite_kind_from_string(const std::string& name);

struct SuiteParams {
  SuiteKind kind = SuiteKind::kTwoModeImbalanced;
  int num_tasks = 1;
  int vocab = 8;
  /// Content tokens before the terminating kEos.
  int answer_len = 3;
  /// Ignored for single_mode (always 1) and two_mode_imbalanced (always 2).
  int num_modes = 2;
  /// Accepted tokens at each position after the first. single_mode uses 1.
  int branching = 3;
  int prompt_len = 2;
  /// Logit boost on the dominant mode's first token (two_mode_imbalanced).
  double delta = 1.0;
  std::uint64_t seed = 0;
  int first_task_id = 0;

  bool operator==(const SuiteParams&) const = default;
};

/// Logit boost to apply to a fresh tabular policy at (task, prefix).
struct BiasEntry {
  int task_id = 0;
  TokenSeq prefix;
  Token token = 0;
  double delta = 0.0;
};

struct TaskSuite {
  SuiteParams params;
  std::vector<TaskSpec> tasks;
  std::vector<BiasEntry> bias;

  const TaskSpec& task(int task_id) const;
};

TaskSuite build_task_suite(const SuiteParams& params);

nlohmann::json suite_params_to_json(const SuiteParams& params);
/// Unknown keys are rejected.
SuiteParams suite_params_from_json(const nlohmann::json& j);

/// Full suite (generator params, materialized tasks and bias) as JSON.
nlohmann::json suite_to_json(const TaskSuite& suite);
TaskSuite suite_from_json(const nlohmann::json& j);

}  // namespace eepo
