#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eepo/config.hpp"
#include "eepo/env.hpp"
#include "eepo/policy.hpp"
#include "eepo/trainer.hpp"

namespace eepo {

/// Unbiased pass@k estimate 1 - C(n-c, k) / C(n, k). Exact integer binomials
/// for n <= 64, a stable product form above that.
double pass_at_k(int n, int c, int k);

/// Fraction of the task's modes hit by at least one correct sample.
double mode_coverage(std::span<const RewardOutcome> samples, const TaskSpec& task);

struct EntropyGapSummary {
  double mean_gap = 0.0;
  int active_steps = 0;
};

/// Mean stage-2 minus stage-1 entropy over gate-active steps; nullopt when the
/// gate never fired.
std::optional<EntropyGapSummary> stage_entropy_gap(std::span<const IterationRecord> records);

struct PassAtKReport {
  int n = 0;
  /// Mean over tasks of the correct count.
  double c = 0.0;
  std::vector<int> ks;
  std::vector<double> estimates;
};

struct ModeCoverageReport {
  std::vector<double> per_task;
  double mean = 0.0;
};

struct EvalReport {
  PassAtKReport pass_at_k;
  ModeCoverageReport coverage;
  /// Fraction of tasks solved by greedy decoding.
  double greedy_pass_at_1 = 0.0;
};

/// Samples eval.samples answers per task at eval.temperature from the policy
/// (independent evaluation streams) and reports pass@k averaged over tasks,
/// mode coverage and greedy accuracy.
EvalReport evaluate_policy(const PolicyParams& policy, const TaskSuite& suite, const EvalConfig& eval);

/// Highest-probability token at every position, until EOS or max_len.
Trajectory greedy_decode(const PolicyParams& policy, const TaskSpec& task, int max_len);

void write_curve_csv(std::span<const IterationRecord> records, const std::filesystem::path& path);
void write_pass_at_k_csv(const PassAtKReport& report, const std::filesystem::path& path);

}  // namespace eepo
