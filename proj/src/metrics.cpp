#include "eepo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace eepo {

namespace {

using u128 = unsigned __int128;

// C(n, k) for n <= 64; every intermediate stays below 2^127.
u128 binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  u128 r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<u128>(n - k + i) / static_cast<u128>(i);
  return r;
}

}  // namespace

double pass_at_k(int n, int c, int k) {
  if (n < 1 || c < 0 || c > n || k < 1 || k > n) {
    throw std::invalid_argument("pass_at_k: need 0 <= c <= n and 1 <= k <= n");
  }
  if (n - c < k) return 1.0;
  if (c == 0) return 0.0;
  if (n <= 64) {
    const u128 total = binomial(n, k);
    const u128 miss = binomial(n - c, k);
    return static_cast<double>(static_cast<long double>(total - miss) / static_cast<long double>(total));
  }
  double miss = 1.0;
  for (int i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  return 1.0 - miss;
}

double mode_coverage(std::span<const RewardOutcome> samples, const TaskSpec& task) {
  if (task.num_modes() == 0) return 0.0;
  std::set<int> hit;
  for (const RewardOutcome& o : samples) {
    if (o.reward == 1 && o.mode) hit.insert(*o.mode);
  }
  return static_cast<double>(hit.size()) / static_cast<double>(task.num_modes());
}

std::optional<EntropyGapSummary> stage_entropy_gap(std::span<const IterationRecord> records) {
  EntropyGapSummary s;
  double total = 0.0;
  for (const IterationRecord& r : records) {
    if (!r.gate_active) continue;
    total += r.stage2_entropy - r.stage1_entropy;
    ++s.active_steps;
  }
  if (s.active_steps == 0) return std::nullopt;
  s.mean_gap = total / s.active_steps;
  return s;
}

Trajectory greedy_decode(const PolicyParams& policy, const TaskSpec& task, int max_len) {
  Trajectory tr;
  tr.task_id = task.task_id();
  while (static_cast<int>(tr.tokens.size()) < max_len) {
    const Distribution d = next_token_distribution(policy, task.task_id(), tr.tokens, 1.0);
    const auto probs = d.probs();
    const auto tok = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    tr.behavior_logps.push_back(std::log(d[tok]));
    tr.token_entropies.push_back(token_entropy(d));
    tr.tokens.push_back(static_cast<Token>(tok));
    if (static_cast<Token>(tok) == kEos) {
      tr.terminated = true;
      break;
    }
  }
  const RewardOutcome r = evaluate_answer(task, tr.tokens, tr.terminated);
  tr.reward = r.reward;
  tr.mode = r.mode;
  return tr;
}

EvalReport evaluate_policy(const PolicyParams& policy, const TaskSuite& suite, const EvalConfig& eval) {
  if (suite.tasks.empty()) throw std::invalid_argument("evaluate: empty suite");
  EvalReport rep;
  rep.pass_at_k.n = eval.samples;
  rep.pass_at_k.ks = eval.ks;
  rep.pass_at_k.estimates.assign(eval.ks.size(), 0.0);
  double greedy = 0.0;
  for (std::size_t ti = 0; ti < suite.tasks.size(); ++ti) {
    const TaskSpec& task = suite.tasks[ti];
    const int max_len = std::min(policy.max_len(), task.max_len());
    std::vector<RewardOutcome> outcomes;
    int correct = 0;
    for (int i = 0; i < eval.samples; ++i) {
      auto rng = RngStream::child(eval.seed, StreamDomain::kEvaluation,
                                  {static_cast<std::uint64_t>(task.task_id()), static_cast<std::uint64_t>(i)});
      const Trajectory tr = sample_trajectory(policy, task, rng, eval.temperature, max_len);
      outcomes.push_back({tr.reward, tr.mode});
      correct += tr.reward;
    }
    rep.pass_at_k.c += correct;
    for (std::size_t j = 0; j < eval.ks.size(); ++j) {
      rep.pass_at_k.estimates[j] += pass_at_k(eval.samples, correct, eval.ks[j]);
    }
    rep.coverage.per_task.push_back(mode_coverage(outcomes, task));
    greedy += greedy_decode(policy, task, max_len).reward;
  }
  const double n_tasks = static_cast<double>(suite.tasks.size());
  rep.pass_at_k.c /= n_tasks;
  for (double& e : rep.pass_at_k.estimates) e /= n_tasks;
  for (double f : rep.coverage.per_task) rep.coverage.mean += f;
  rep.coverage.mean /= n_tasks;
  rep.greedy_pass_at_1 = greedy / n_tasks;
  return rep;
}

void write_curve_csv(std::span<const IterationRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "step,stage1_entropy,stage2_entropy,gate_active,mean_reward,mean_length\n";
  for (const IterationRecord& r : records) {
    out << r.step << ',' << format_double(r.stage1_entropy) << ',' << format_double(r.stage2_entropy) << ','
        << (r.gate_active ? 1 : 0) << ',' << format_double(r.mean_reward) << ',' << format_double(r.mean_length)
        << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_pass_at_k_csv(const PassAtKReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "k,estimate\n";
  for (std::size_t i = 0; i < report.ks.size(); ++i) {
    out << report.ks[i] << ',' << format_double(report.estimates[i]) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace eepo
