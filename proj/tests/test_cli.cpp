#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "eepo/metrics.hpp"
#include "json.hpp"

using namespace eepo;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  static const fs::path d = [] {
    auto p = fs::temp_directory_path() / "eepo_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

struct Result {
  int code = -1;
  std::string err;
};

Result run(const std::string& args) {
  const fs::path err = work_dir() / "stderr.txt";
  const std::string cmd = std::string(EEPO_CLI) + " " + args + " > " + (work_dir() / "stdout.txt").string() + " 2> " +
                          err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(err)};
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("train with zero iterations writes a manifest and an empty metric stream") {
  const fs::path cfg = work_dir() / "k0.json";
  write_file(cfg, R"({"trainer": {"iterations": 0}})");
  const fs::path out = work_dir() / "k0";
  const Result r = run("train --config " + cfg.string() + " --out " + out.string());
  CHECK(r.code == 0);
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / "metrics.jsonl"));
  CHECK(read_file(out / "metrics.jsonl").empty());
  CHECK(fs::exists(out / "checkpoints" / "final.ckpt"));
  int manifests = 0;
  for (const auto& e : fs::recursive_directory_iterator(out)) manifests += e.path().filename() == "manifest.json";
  CHECK(manifests == 1);

  const auto m = nlohmann::json::parse(read_file(out / "manifest.json"));
  for (const char* key : {"versions", "experiment", "resolved_trainer", "provenance", "suite", "started", "finished",
                          "outputs"}) {
    CHECK(m.contains(key));
  }
  CHECK(m["resolved_trainer"]["iterations"] == 0);
  CHECK(m["provenance"].contains("gate_entropy_source"));
}

TEST_CASE("a manifest reproduces the metric stream byte for byte") {
  const fs::path a = work_dir() / "seed_a";
  const fs::path b = work_dir() / "seed_b";
  const fs::path cfg = work_dir() / "short.json";
  write_file(cfg, R"({"trainer": {"iterations": 40, "checkpoint_every": 20}})");
  REQUIRE(run("train --config " + cfg.string() + " --seed 9 --out " + a.string()).code == 0);
  REQUIRE(run("train --config " + cfg.string() + " --seed 9 --out " + b.string()).code == 0);
  CHECK(read_file(a / "metrics.jsonl") == read_file(b / "metrics.jsonl"));
  CHECK(count_lines(read_file(a / "metrics.jsonl")) == 40);
  CHECK(read_file(a / "checkpoints" / "final.ckpt") == read_file(b / "checkpoints" / "final.ckpt"));

  // Feed the recorded experiment back in as a config.
  const auto m = nlohmann::json::parse(read_file(a / "manifest.json"));
  const fs::path replay_cfg = work_dir() / "replay.json";
  write_file(replay_cfg, m["experiment"].dump(2));
  const fs::path c = work_dir() / "replay";
  REQUIRE(run("train --config " + replay_cfg.string() + " --out " + c.string()).code == 0);
  CHECK(read_file(c / "metrics.jsonl") == read_file(a / "metrics.jsonl"));

  const fs::path g = work_dir() / "grpo";
  REQUIRE(run("train --config " + cfg.string() + " --seed 9 --mode grpo --out " + g.string()).code == 0);
  CHECK(nlohmann::json::parse(read_file(g / "manifest.json"))["resolved_trainer"]["mode"] == "grpo");

  const fs::path rep = work_dir() / "report";
  REQUIRE(run("report " + a.string() + " " + g.string() + " --out " + rep.string()).code == 0);
  CHECK(read_file(rep / "curve_0.csv").rfind("step,stage1_entropy,stage2_entropy,gate_active,mean_reward,mean_length\n",
                                             0) == 0);
  CHECK(count_lines(read_file(rep / "curve_1.csv")) == 41);
  const std::string summary = read_file(rep / "summary.csv");
  CHECK(summary.rfind("run,steps,gate_active_steps,mean_stage_gap,final_mean_reward,final_rollout_entropy\n", 0) == 0);
  CHECK(count_lines(summary) == 3);
}

TEST_CASE("eval of a uniform checkpoint matches the enumerated success mass") {
  const fs::path cfg = work_dir() / "uniform.json";
  write_file(cfg, R"({"trainer": {"iterations": 0},
                      "suite": {"kind": "single_mode", "vocab": 8, "answer_len": 1},
                      "eval": {"samples": 20000, "ks": [1, 8]}})");
  const fs::path run_dir = work_dir() / "uniform_run";
  REQUIRE(run("train --config " + cfg.string() + " --out " + run_dir.string()).code == 0);
  const fs::path ckpt = run_dir / "checkpoints" / "final.ckpt";
  const fs::path out = work_dir() / "uniform_eval";
  REQUIRE(run("eval --config " + cfg.string() + " --checkpoint " + ckpt.string() + " --out " + out.string()).code == 0);

  const PolicyParams policy = load_checkpoint(ckpt.string());
  SuiteParams sp;
  sp.kind = SuiteKind::kSingleMode;
  sp.vocab = 8;
  sp.answer_len = 1;
  const TaskSuite suite = build_task_suite(sp);
  double exact = 0;
  for (const auto& [tr, p] : enumerate_distribution(policy, suite.tasks[0], suite.tasks[0].max_len())) {
    exact += p * tr.reward;
  }
  const auto rep = nlohmann::json::parse(read_file(out / "eval.json"));
  const double est = rep["pass_at_k"]["1"];
  CHECK(std::abs(est - exact) < 3 * std::sqrt(exact * (1 - exact) / 20000));
  CHECK(read_file(out / "passk.csv").rfind("k,estimate\n1,", 0) == 0);
  CHECK(fs::exists(out / "manifest.json"));

  const fs::path held = work_dir() / "uniform_held_out";
  REQUIRE(run("eval --config " + cfg.string() + " --checkpoint " + ckpt.string() + " --held-out --out " + held.string())
              .code == 0);
  CHECK(nlohmann::json::parse(read_file(held / "manifest.json"))["held_out"] == true);
}

TEST_CASE("sweep emits one row per value") {
  const fs::path cfg = work_dir() / "sweep.json";
  write_file(cfg, R"({"trainer": {"iterations": 20}, "eval": {"samples": 16, "ks": [1, 4]}})");
  const fs::path out = work_dir() / "sweep";
  REQUIRE(run("sweep --config " + cfg.string() + " --knob rollouts --values 4,8,16 --out " + out.string()).code == 0);
  const std::string table = read_file(out / "sweep.csv");
  CHECK(table.rfind("knob,value,pass_at_1,pass_at_4,mode_coverage,greedy_pass_at_1,final_mean_reward,"
                    "final_rollout_entropy\n",
                    0) == 0);
  CHECK(count_lines(table) == 4);
  CHECK(table.find("\nrollouts,16,") != std::string::npos);
  CHECK(nlohmann::json::parse(read_file(out / "manifest.json"))["sweep"]["knob"] == "rollouts");
}

TEST_CASE("errors map to exit codes with a diagnostic") {
  Result r = run("bogus");
  CHECK(r.code == 1);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(run("").code == 1);

  const fs::path bad = work_dir() / "bad.json";
  write_file(bad, R"({"trainer": {"learning_rate": 1}})");
  r = run("train --config " + bad.string() + " --out " + (work_dir() / "never").string());
  CHECK(r.code == 1);
  CHECK(r.err.find("learning_rate") != std::string::npos);
  CHECK(count_lines(r.err) == 1);

  write_file(bad, R"({"trainer": {"group_size": 7}})");
  CHECK(run("train --config " + bad.string()).code == 1);
  CHECK(run("train --mode ppo").code == 1);
  CHECK(run("sweep --knob top_k --values 1").code == 1);
  CHECK(run("sweep --knob temperature --values ,").code == 1);

  r = run("eval --checkpoint " + (work_dir() / "missing.ckpt").string());
  CHECK(r.code == 2);
  CHECK(count_lines(r.err) == 1);

  const fs::path blocked = work_dir() / "blocked";
  write_file(blocked, "file");
  CHECK(run("train --out " + blocked.string()).code == 2);
  CHECK(run("report " + (work_dir() / "no_such_run").string()).code == 2);
}
