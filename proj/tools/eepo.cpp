// eepo: train, evaluate, sweep and report on the desk-scale RL lab.
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "eepo/config.hpp"
#include "eepo/metrics.hpp"
#include "eepo/trainer.hpp"

namespace fs = std::filesystem;
using namespace eepo;

namespace {

constexpr int kManifestVersion = 1;
constexpr int kMetricsVersion = 1;
constexpr const char* kManifestFile = "manifest.json";

/// Usage and config problems (exit 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> mode;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ExperimentConfig load(const CommonArgs& a) {
  ExperimentConfig c = a.config.empty() ? ExperimentConfig{} : load_experiment(a.config);
  if (a.seed) {
    c.trainer.seed = *a.seed;
    c.suite.seed = *a.seed;
  }
  if (a.mode) c.trainer.mode = train_mode_from_string(*a.mode);
  c.trainer.validate();
  return c;
}

void write_json(const nlohmann::ordered_json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

nlohmann::ordered_json manifest_base(const std::string& command, const ExperimentConfig& c, const TaskSuite& suite,
                                     const std::string& started) {
  nlohmann::ordered_json m;
  m["command"] = command;
  m["versions"] = {{"manifest", kManifestVersion}, {"metrics", kMetricsVersion}, {"checkpoint", kCheckpointVersion}};
  m["experiment"] = experiment_to_json(c);
  m["resolved_trainer"] = train_config_to_json(c.trainer.resolved());
  m["provenance"] = config_provenance();
  m["suite"] = suite_to_json(suite);
  m["started"] = started;
  return m;
}

EvalReport evaluate_on(PolicyParams policy, const TaskSuite& suite, const EvalConfig& ev) {
  for (const TaskSpec& t : suite.tasks) {
    if (!policy.knows_task(t.task_id())) policy.register_task(t.task_id(), t.prompt());
  }
  return evaluate_policy(policy, suite, ev);
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["samples"] = r.pass_at_k.n;
  j["mean_correct"] = r.pass_at_k.c;
  nlohmann::ordered_json pk = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < r.pass_at_k.ks.size(); ++i) pk[std::to_string(r.pass_at_k.ks[i])] = r.pass_at_k.estimates[i];
  j["pass_at_k"] = pk;
  j["mode_coverage"] = r.coverage.mean;
  j["mode_coverage_per_task"] = r.coverage.per_task;
  j["greedy_pass_at_1"] = r.greedy_pass_at_1;
  return j;
}

/// Mean reward and rollout entropy over the last 100 steps (or fewer).
std::pair<double, double> tail_means(const std::vector<IterationRecord>& recs) {
  const std::size_t tail = std::min<std::size_t>(recs.size(), 100);
  if (tail == 0) return {0.0, 0.0};
  double reward = 0, entropy = 0;
  for (std::size_t j = recs.size() - tail; j < recs.size(); ++j) {
    reward += recs[j].mean_reward;
    entropy += recs[j].rollout_entropy;
  }
  return {reward / static_cast<double>(tail), entropy / static_cast<double>(tail)};
}

int cmd_train(const CommonArgs& a) {
  const ExperimentConfig c = load(a);
  const std::string started = utc_now();
  const fs::path out = a.out.empty() ? fs::path("run") : fs::path(a.out);
  make_dir(out);
  const TaskSuite suite = build_task_suite(c.suite);
  const RunArtifacts art = run_training(c.trainer, suite, out);
  write_curve_csv(art.records, out / "curve.csv");

  auto m = manifest_base("train", c, suite, started);
  m["finished"] = utc_now();
  std::vector<std::string> ckpts;
  for (const auto& p : art.checkpoints) ckpts.push_back(fs::relative(p, out).string());
  m["outputs"] = {{"metrics", kMetricsFile}, {"checkpoints", ckpts}, {"final_checkpoint", "checkpoints/final.ckpt"},
                  {"curve", "curve.csv"}};
  write_json(m, out / kManifestFile);
  std::printf("trained %d iterations, %zu checkpoints, output in %s\n", c.trainer.iterations, art.checkpoints.size(),
              out.string().c_str());
  return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& checkpoint, bool held_out) {
  ExperimentConfig c = load(a);
  const std::string started = utc_now();
  if (held_out) {
    c.suite.seed += 1;
    c.suite.first_task_id += c.suite.num_tasks;
  }
  const PolicyParams policy = load_checkpoint(checkpoint);
  const TaskSuite suite = build_task_suite(c.suite);
  const EvalReport rep = evaluate_on(policy, suite, c.eval);

  const fs::path out = a.out.empty() ? fs::path("eval") : fs::path(a.out);
  make_dir(out);
  write_pass_at_k_csv(rep.pass_at_k, out / "passk.csv");
  write_json(report_to_json(rep), out / "eval.json");
  auto m = manifest_base("eval", c, suite, started);
  m["checkpoint"] = fs::absolute(checkpoint).string();
  m["held_out"] = held_out;
  m["finished"] = utc_now();
  m["outputs"] = {{"pass_at_k", "passk.csv"}, {"report", "eval.json"}};
  write_json(m, out / kManifestFile);
  for (std::size_t i = 0; i < rep.pass_at_k.ks.size(); ++i) {
    std::printf("pass@%d %.6f\n", rep.pass_at_k.ks[i], rep.pass_at_k.estimates[i]);
  }
  std::printf("mode_coverage %.6f\ngreedy_pass@1 %.6f\n", rep.coverage.mean, rep.greedy_pass_at_1);
  return 0;
}

std::vector<std::string> split_values(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw UsageError("--values needs at least one value");
  return out;
}

int cmd_sweep(const CommonArgs& a, const std::string& knob, const std::string& values) {
  const ExperimentConfig c = load(a);
  const std::string started = utc_now();
  const auto vals = split_values(values);
  std::vector<TrainConfig> configs;
  for (const auto& v : vals) {
    TrainConfig t = c.trainer;
    set_knob(t, knob, v);
    t.validate();
    configs.push_back(t);
  }
  const fs::path out = a.out.empty() ? fs::path("sweep") : fs::path(a.out);
  make_dir(out);
  const TaskSuite suite = build_task_suite(c.suite);

  std::ofstream table(out / "sweep.csv");
  if (!table) throw IoError("cannot write '" + (out / "sweep.csv").string() + "'");
  table << "knob,value";
  for (int k : c.eval.ks) table << ",pass_at_" << k;
  table << ",mode_coverage,greedy_pass_at_1,final_mean_reward,final_rollout_entropy\n";
  for (std::size_t i = 0; i < vals.size(); ++i) {
    PolicyParams fin = initial_policy(configs[i].resolved(), suite);
    const auto recs = run_in_memory(configs[i], suite, &fin);
    const EvalReport rep = evaluate_on(fin, suite, c.eval);
    const auto [reward, entropy] = tail_means(recs);
    table << knob << "," << vals[i];
    for (double e : rep.pass_at_k.estimates) table << "," << format_double(e);
    table << "," << format_double(rep.coverage.mean) << "," << format_double(rep.greedy_pass_at_1) << ","
          << format_double(reward) << "," << format_double(entropy) << "\n";
    std::printf("%s=%s pass@%d %.4f coverage %.4f\n", knob.c_str(), vals[i].c_str(), rep.pass_at_k.ks.back(),
                rep.pass_at_k.estimates.back(), rep.coverage.mean);
  }
  table.close();
  if (!table) throw IoError("failed writing sweep table");

  auto m = manifest_base("sweep", c, suite, started);
  m["sweep"] = {{"knob", knob}, {"values", vals}};
  m["finished"] = utc_now();
  m["outputs"] = {{"table", "sweep.csv"}};
  write_json(m, out / kManifestFile);
  return 0;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out_arg) {
  if (runs.empty()) throw UsageError("report needs at least one run directory");
  const fs::path out = out_arg.empty() ? fs::path(runs.front()) : fs::path(out_arg);
  make_dir(out);
  std::ofstream summary(out / "summary.csv");
  if (!summary) throw IoError("cannot write '" + (out / "summary.csv").string() + "'");
  summary << "run,steps,gate_active_steps,mean_stage_gap,final_mean_reward,final_rollout_entropy\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const fs::path dir(runs[i]);
    const auto recs = read_metric_stream(dir / kMetricsFile);
    const std::string name = runs.size() == 1 ? "curve.csv" : "curve_" + std::to_string(i) + ".csv";
    write_curve_csv(recs, out / name);
    const auto gap = stage_entropy_gap(recs);
    const auto [reward, entropy] = tail_means(recs);
    summary << dir.string() << "," << recs.size() << "," << (gap ? gap->active_steps : 0) << ","
            << (gap ? format_double(gap->mean_gap) : std::string()) << "," << format_double(reward) << ","
            << format_double(entropy) << "\n";
  }
  summary.close();
  if (!summary) throw IoError("failed writing summary table");
  std::printf("report written to %s\n", out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eepo: GRPO and EEPO trainers on synthetic multi-mode tasks"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string checkpoint, knob, values, report_out;
  bool held_out = false;
  std::vector<std::string> report_runs;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "overrides trainer and suite seeds");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--mode", common.mode, "trainer override")->check(CLI::IsMember({"grpo", "eepo"}));
  };
  auto* train = app.add_subcommand("train", "run a trainer and write manifest, metrics and checkpoints");
  add_common(train);
  auto* eval = app.add_subcommand("eval", "pass@k, mode coverage and greedy accuracy of a checkpoint");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_flag("--held-out", held_out, "evaluate on fresh instances from the same generator");
  auto* sweep = app.add_subcommand("sweep", "grid over one knob, one table row per value");
  add_common(sweep);
  sweep->add_option("--knob", knob, "temperature, entropy_coef, clip_high, rollouts, alpha or unlearn_rate")
      ->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  auto* report = app.add_subcommand("report", "curve and summary tables from metric streams");
  report->add_option("runs", report_runs, "run directories")->required();
  report->add_option("--out", report_out, "output directory (default: first run)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "eepo: " << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (*train) return cmd_train(common);
    if (*eval) return cmd_eval(common, checkpoint, held_out);
    if (*sweep) return cmd_sweep(common, knob, values);
    return cmd_report(report_runs, report_out);
  } catch (const UsageError& e) {
    std::cerr << "eepo: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "eepo: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "eepo: " << e.what() << "\n";
    return 2;
  }
}
