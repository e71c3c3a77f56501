#include "eepo/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "eepo/objectives.hpp"

namespace eepo {

nlohmann::ordered_json record_to_json(const IterationRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["stage1_entropy"] = r.stage1_entropy;
  j["stage2_entropy"] = r.stage2_entropy;
  j["rollout_entropy"] = r.rollout_entropy;
  j["gate_active"] = r.gate_active;
  j["unlearn_loss"] = r.unlearn_loss;
  j["mean_reward"] = r.mean_reward;
  j["mean_length"] = r.mean_length;
  j["grpo_objective"] = r.grpo_objective;
  j["mode_counts"] = r.mode_counts;
  return j;
}

IterationRecord record_from_json(const nlohmann::json& j) {
  IterationRecord r;
  try {
    r.step = j.at("step").get<int>();
    r.stage1_entropy = j.at("stage1_entropy").get<double>();
    r.stage2_entropy = j.at("stage2_entropy").get<double>();
    r.rollout_entropy = j.at("rollout_entropy").get<double>();
    r.gate_active = j.at("gate_active").get<bool>();
    r.unlearn_loss = j.at("unlearn_loss").get<double>();
    r.mean_reward = j.at("mean_reward").get<double>();
    r.mean_length = j.at("mean_length").get<double>();
    r.grpo_objective = j.at("grpo_objective").get<double>();
    r.mode_counts = j.at("mode_counts").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("metric record: ") + e.what());
  }
  return r;
}

namespace {

TrainConfig prepare(const TrainConfig& raw, const TaskSuite& suite) {
  raw.validate();
  TrainConfig c = raw.resolved();
  if (suite.tasks.empty()) throw std::invalid_argument("trainer: empty task suite");
  if (c.max_len == 0) {
    for (const TaskSpec& t : suite.tasks) c.max_len = std::max(c.max_len, t.max_len());
  }
  for (const TaskSpec& t : suite.tasks) {
    if (t.vocab() != suite.tasks.front().vocab()) throw std::invalid_argument("trainer: mixed vocabularies");
  }
  c.neural.vocab = suite.tasks.front().vocab();
  return c;
}

}  // namespace

PolicyParams initial_policy(const TrainConfig& config, const TaskSuite& suite) {
  const int vocab = suite.tasks.front().vocab();
  int max_len = config.max_len;
  if (max_len == 0) {
    for (const TaskSpec& t : suite.tasks) max_len = std::max(max_len, t.max_len());
  }
  if (config.policy == PolicyKind::kTabular) {
    PolicyParams p = PolicyParams::tabular(vocab, max_len, suite);
    p.inject_bias(suite.bias);
    return p;
  }
  NeuralShape shape = config.neural;
  shape.vocab = vocab;
  return PolicyParams::neural(shape, max_len, suite, config.seed, config.init_scale);
}

TrainerState::TrainerState(const TrainConfig& cfg, TaskSuite s)
    : config(prepare(cfg, s)),
      suite(std::move(s)),
      policy(initial_policy(config, suite)),
      reference(policy),
      rollout(policy),
      gate(static_cast<std::size_t>(config.window), config.alpha) {}

std::vector<const TaskSpec*> TrainerState::batch() const {
  std::vector<const TaskSpec*> out;
  const auto n = suite.tasks.size();
  for (int b = 0; b < config.batch_tasks; ++b) {
    const std::size_t idx = (static_cast<std::size_t>(step) * static_cast<std::size_t>(config.batch_tasks) +
                             static_cast<std::size_t>(b)) % n;
    out.push_back(&suite.tasks[idx]);
  }
  return out;
}

namespace {

using Groups = std::vector<std::vector<Trajectory>>;

// Samples group members [from, to) for every task slot from the rollout model.
void sample_range(const TrainerState& s, const std::vector<const TaskSpec*>& tasks, int from, int to, int stage,
                  Groups& groups) {
  for (std::size_t b = 0; b < tasks.size(); ++b) {
    for (int i = from; i < to; ++i) {
      auto rng = RngStream::child(s.config.seed, StreamDomain::kRollout,
                                  {static_cast<std::uint64_t>(s.step), b, static_cast<std::uint64_t>(i)});
      Trajectory tr = sample_trajectory(s.rollout, *tasks[b], rng, s.config.temperature, s.config.max_len);
      tr.stage = stage;
      groups[b].push_back(std::move(tr));
    }
  }
}

struct EntropyAccumulator {
  double sum = 0.0;
  std::size_t count = 0;
  void add(const Trajectory& tr) {
    for (double h : tr.token_entropies) sum += h;
    count += tr.token_entropies.size();
  }
  double mean() const { return count == 0 ? 0.0 : sum / static_cast<double>(count); }
};

double sum_log_probs(const PolicyParams& p, std::span<const Trajectory> trs, double temp, std::vector<double>* each) {
  double total = 0.0;
  for (const Trajectory& tr : trs) {
    const double lp = trajectory_log_prob(p, tr, temp);
    if (each != nullptr) each->push_back(lp);
    total += lp;
  }
  return total;
}

void begin_iteration(TrainerState& s, IterationProbe* probe) {
  s.rollout = sync_params(s.policy);
  if (probe != nullptr) {
    probe->policy_hash_at_start = parameter_hash(s.policy);
    probe->rollout_hash_at_start = parameter_hash(s.rollout);
  }
}

// Rewards, advantages and one plain SGD ascent step on the mean group objective.
void finish_iteration(TrainerState& s, const Groups& groups, IterationRecord& rec, IterationProbe* probe) {
  const TrainConfig& c = s.config;
  const int half = c.group_size / 2;
  EntropyAccumulator e1;
  EntropyAccumulator e2;
  EntropyAccumulator all;
  double reward_sum = 0.0;
  double length_sum = 0.0;
  std::size_t n = 0;
  int max_modes = 0;
  for (const TaskSpec& t : s.suite.tasks) max_modes = std::max(max_modes, t.num_modes());
  rec.mode_counts.assign(static_cast<std::size_t>(max_modes), 0);

  Gradient total = s.policy.zero_gradient();
  double objective = 0.0;
  const double per_group = 1.0 / static_cast<double>(groups.size());
  for (const auto& group : groups) {
    std::vector<double> rewards;
    for (std::size_t i = 0; i < group.size(); ++i) {
      const Trajectory& tr = group[i];
      rewards.push_back(tr.reward);
      (static_cast<int>(i) < half ? e1 : e2).add(tr);
      all.add(tr);
      reward_sum += tr.reward;
      length_sum += static_cast<double>(tr.tokens.size());
      ++n;
      if (tr.mode) ++rec.mode_counts[static_cast<std::size_t>(*tr.mode)];
    }
    const AdvantageGroup adv = group_advantages(rewards);
    ObjectiveResult r = grpo_objective_and_gradient(group, s.policy, s.reference, adv, c);
    objective += per_group * r.value;
    total.axpy(per_group, r.gradient);
  }
  s.policy.add_scaled(total, c.lr);

  rec.step = s.step;
  rec.stage1_entropy = e1.mean();
  rec.stage2_entropy = e2.mean();
  rec.rollout_entropy = all.mean();
  rec.mean_reward = reward_sum / static_cast<double>(n);
  rec.mean_length = length_sum / static_cast<double>(n);
  rec.grpo_objective = objective;
  if (probe != nullptr) {
    for (const auto& g : groups) probe->trajectories.insert(probe->trajectories.end(), g.begin(), g.end());
  }
  ++s.step;
}

}  // namespace

IterationRecord grpo_iteration(TrainerState& s, IterationProbe* probe) {
  begin_iteration(s, probe);
  const auto tasks = s.batch();
  Groups groups(tasks.size());
  const int half = s.config.group_size / 2;
  sample_range(s, tasks, 0, half, 1, groups);
  sample_range(s, tasks, half, s.config.group_size, 2, groups);
  IterationRecord rec;
  finish_iteration(s, groups, rec, probe);
  return rec;
}

IterationRecord eepo_iteration(TrainerState& s, IterationProbe* probe) {
  const TrainConfig& c = s.config;
  if (c.group_size % 2 != 0) throw std::invalid_argument("eepo: group size must be even");
  begin_iteration(s, probe);
  const auto tasks = s.batch();
  Groups groups(tasks.size());
  const int half = c.group_size / 2;

  sample_range(s, tasks, 0, half, 1, groups);
  std::vector<Trajectory> stage1;
  EntropyAccumulator h1;
  for (const auto& g : groups) {
    for (const Trajectory& tr : g) {
      stage1.push_back(tr);
      h1.add(tr);
    }
  }
  const bool active = s.gate.update(h1.mean());

  IterationRecord rec;
  rec.gate_active = active;
  if (probe != nullptr) {
    probe->policy_hash_before_unlearn = parameter_hash(s.policy);
    probe->stage1_logp_before = sum_log_probs(s.rollout, stage1, c.temperature, &probe->stage1_traj_logp_before);
  }
  if (active) {
    const ObjectiveResult u =
        unlearn_objective_and_gradient(stage1, s.rollout, true, c.eps_l, c.eps_r, c.temperature);
    rec.unlearn_loss = u.value;
    s.rollout.add_scaled(u.gradient, c.unlearn_rate);
  }
  if (probe != nullptr) {
    probe->policy_hash_after_unlearn = parameter_hash(s.policy);
    probe->stage1_logp_after = sum_log_probs(s.rollout, stage1, c.temperature, &probe->stage1_traj_logp_after);
  }

  sample_range(s, tasks, half, c.group_size, 2, groups);
  finish_iteration(s, groups, rec, probe);
  return rec;
}

IterationRecord train_iteration(TrainerState& state, IterationProbe* probe) {
  return state.config.mode == TrainMode::kEepo ? eepo_iteration(state, probe) : grpo_iteration(state, probe);
}

std::vector<IterationRecord> run_in_memory(const TrainConfig& config, const TaskSuite& suite,
                                           PolicyParams* final_policy) {
  TrainerState state(config, suite);
  std::vector<IterationRecord> out;
  out.reserve(static_cast<std::size_t>(state.config.iterations));
  for (int k = 0; k < state.config.iterations; ++k) out.push_back(train_iteration(state));
  if (final_policy != nullptr) *final_policy = state.policy;
  return out;
}

namespace {

std::string checkpoint_name(int step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%07d.ckpt", step);
  return buf;
}

}  // namespace

RunArtifacts run_training(const TrainConfig& config, const TaskSuite& suite, const std::filesystem::path& out_dir) {
  TrainerState state(config, suite);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "checkpoints", ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir.string() + "': " + ec.message());

  RunArtifacts art{out_dir / kMetricsFile, {}, {}, state.policy};
  std::ofstream metrics(art.metrics_path, std::ios::binary | std::ios::trunc);
  if (!metrics) throw IoError("cannot write '" + art.metrics_path.string() + "'");

  auto checkpoint = [&](const std::string& name) {
    const auto path = out_dir / "checkpoints" / name;
    save_checkpoint(state.policy, path.string());
    art.checkpoints.push_back(path);
  };
  checkpoint(checkpoint_name(0));
  const int every = state.config.checkpoint_every;
  for (int k = 0; k < state.config.iterations; ++k) {
    IterationRecord rec = train_iteration(state);
    metrics << record_to_json(rec).dump() << '\n';
    metrics.flush();
    if (!metrics) throw IoError("failed writing '" + art.metrics_path.string() + "'");
    art.records.push_back(std::move(rec));
    if (every > 0 && state.step % every == 0 && state.step != state.config.iterations) {
      checkpoint(checkpoint_name(state.step));
    }
  }
  if (state.config.iterations > 0) checkpoint(checkpoint_name(state.step));
  save_checkpoint(state.policy, (out_dir / "checkpoints" / "final.ckpt").string());
  art.final_policy = state.policy;
  return art;
}

std::vector<IterationRecord> read_metric_stream(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read metric stream '" + path.string() + "'");
  std::vector<IterationRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument("metric stream '" + path.string() + "': " + e.what());
    }
  }
  return out;
}

}  // namespace eepo
