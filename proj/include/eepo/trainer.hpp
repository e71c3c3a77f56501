#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "eepo/config.hpp"
#include "eepo/core_math.hpp"
#include "eepo/env.hpp"
#include "eepo/policy.hpp"

namespace eepo {

/// Per-step metrics; one line of the metric stream.
struct IterationRecord {
  int step = 0;
  /// Mean next-token entropy (nats) of the rollout model over sampled tokens,
  /// split by the two halves of each group and over the whole group.
  double stage1_entropy = 0.0;
  double stage2_entropy = 0.0;
  double rollout_entropy = 0.0;
  bool gate_active = false;
  double unlearn_loss = 0.0;
  double mean_reward = 0.0;
  double mean_length = 0.0;
  double grpo_objective = 0.0;
  /// Correct samples per mode index, summed over the task batch.
  std::vector<int> mode_counts;

  bool operator==(const IterationRecord&) const = default;
};

nlohmann::ordered_json record_to_json(const IterationRecord& r);
IterationRecord record_from_json(const nlohmann::json& j);

/// Values observed around the unlearning step; not part of the metric stream.
struct IterationProbe {
  std::uint64_t policy_hash_at_start = 0;
  std::uint64_t rollout_hash_at_start = 0;
  std::uint64_t policy_hash_before_unlearn = 0;
  std::uint64_t policy_hash_after_unlearn = 0;
  /// Summed rollout log-probs of the stage-1 trajectories before and after
  /// the unlearning step (equal when the gate is closed).
  double stage1_logp_before = 0.0;
  double stage1_logp_after = 0.0;
  /// Per-trajectory log-probs before and after, same order as the samples.
  std::vector<double> stage1_traj_logp_before;
  std::vector<double> stage1_traj_logp_after;
  std::vector<Trajectory> trajectories;
};

struct TrainerState {
  TrainerState(const TrainConfig& config, TaskSuite suite);

  TrainConfig config;  // resolved
  TaskSuite suite;
  PolicyParams policy;
  PolicyParams reference;
  PolicyParams rollout;
  GateState gate;
  int step = 0;

  int max_len() const { return config.max_len; }
  /// Tasks trained on at the current step.
  std::vector<const TaskSpec*> batch() const;
};

/// Builds the initial policy for a config: a tabular policy with the suite's
/// mode bias injected, or a seeded neural policy.
PolicyParams initial_policy(const TrainConfig& config, const TaskSuite& suite);

IterationRecord grpo_iteration(TrainerState& state, IterationProbe* probe = nullptr);
IterationRecord eepo_iteration(TrainerState& state, IterationProbe* probe = nullptr);
/// Dispatches on state.config.mode.
IterationRecord train_iteration(TrainerState& state, IterationProbe* probe = nullptr);

struct RunArtifacts {
  std::filesystem::path metrics_path;
  std::vector<std::filesystem::path> checkpoints;
  std::vector<IterationRecord> records;
  PolicyParams final_policy;
};

inline constexpr const char* kMetricsFile = "metrics.jsonl";

/// Runs config.iterations steps. The metric stream is appended and flushed
/// one line per step; checkpoints go to out_dir/checkpoints.
RunArtifacts run_training(const TrainConfig& config, const TaskSuite& suite, const std::filesystem::path& out_dir);

/// Same loop without touching the filesystem.
std::vector<IterationRecord> run_in_memory(const TrainConfig& config, const TaskSuite& suite,
                                           PolicyParams* final_policy = nullptr);

std::vector<IterationRecord> read_metric_stream(const std::filesystem::path& path);

}  // namespace eepo
