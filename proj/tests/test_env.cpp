#include <set>
#include <stdexcept>

#include "doctest.h"
#include "eepo/env.hpp"
#include "eepo/policy.hpp"

using namespace eepo;

namespace {

TaskSpec three_modes() {
  return TaskSpec(7, {1, 2}, {{{1, 2, kEos}}, {{2, kEos}, {3, 3, kEos}}, {{4, kEos}}}, 5, 4);
}

bool all_seqs_disjoint(const TaskSpec& t) {
  std::set<TokenSeq> seen;
  for (const auto& mode : t.modes()) {
    for (const auto& s : mode) {
      if (!seen.insert(s).second) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("evaluate_answer examples") {
  const TaskSpec t = three_modes();
  auto hit = evaluate_answer(t, {3, 3, kEos}, true);
  CHECK(hit.reward == 1);
  REQUIRE(hit.mode.has_value());
  CHECK(*hit.mode == 1);

  auto miss = evaluate_answer(t, {3, 2, kEos}, true);
  CHECK(miss.reward == 0);
  CHECK_FALSE(miss.mode.has_value());

  auto trunc = evaluate_answer(t, {3, 3, kEos}, false);
  CHECK(trunc.reward == 0);
  CHECK_FALSE(trunc.mode.has_value());

  CHECK_THROWS_AS(evaluate_answer(t, {5, kEos}, true), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_answer(t, {-1}, false), std::invalid_argument);
}

TEST_CASE("reward is binary and consistent with mode membership") {
  const TaskSpec t = three_modes();
  // Every answer up to length 3 over the vocabulary.
  std::vector<TokenSeq> answers{{}};
  for (int len = 1; len <= 3; ++len) {
    std::vector<TokenSeq> next;
    for (const auto& a : answers) {
      if (static_cast<int>(a.size()) != len - 1) continue;
      for (Token x = 0; x < 5; ++x) {
        TokenSeq b = a;
        b.push_back(x);
        next.push_back(b);
      }
    }
    answers.insert(answers.end(), next.begin(), next.end());
  }
  for (const auto& a : answers) {
    for (bool term : {false, true}) {
      const auto o = evaluate_answer(t, a, term);
      CHECK((o.reward == 0 || o.reward == 1));
      CHECK((o.reward == 1) == o.mode.has_value());
      int owner = -1;
      for (int m = 0; m < t.num_modes(); ++m) {
        for (const auto& s : t.modes()[static_cast<std::size_t>(m)]) {
          if (s == a) owner = m;
        }
      }
      CHECK(o.reward == (term && owner >= 0 ? 1 : 0));
      if (o.mode) CHECK(*o.mode == owner);
      const auto again = evaluate_answer(t, a, term);
      CHECK(again.reward == o.reward);
      CHECK(again.mode == o.mode);
    }
  }
}

TEST_CASE("task construction rejects malformed modes") {
  CHECK_THROWS_AS(TaskSpec(0, {}, {{{1, 2}}}, 4, 3), std::invalid_argument);
  CHECK_THROWS_AS(TaskSpec(0, {}, {{{1, kEos, 2, kEos}}}, 4, 5), std::invalid_argument);
  CHECK_THROWS_AS(TaskSpec(0, {}, {{{1, 2, 3, kEos}}}, 4, 3), std::invalid_argument);
  CHECK_THROWS_AS(TaskSpec(0, {}, {{{1, kEos}}, {{1, kEos}}}, 4, 3), std::invalid_argument);
  CHECK_THROWS_AS(TaskSpec(0, {}, {{{4, kEos}}}, 4, 3), std::invalid_argument);
  CHECK_THROWS_AS(TaskSpec(0, {}, {{}}, 4, 3), std::invalid_argument);
  CHECK_NOTHROW(TaskSpec(0, {}, {{{1, kEos}}, {{2, kEos}}}, 4, 3));
}

TEST_CASE("single_mode suite") {
  SuiteParams p;
  p.kind = SuiteKind::kSingleMode;
  p.vocab = 4;
  p.answer_len = 2;
  const TaskSuite s = build_task_suite(p);
  REQUIRE(s.tasks.size() == 1);
  const TaskSpec& t = s.tasks[0];
  CHECK(t.num_modes() == 1);
  REQUIRE(t.modes()[0].size() == 1);
  CHECK(t.modes()[0][0].size() == 3);
  CHECK(t.modes()[0][0].back() == kEos);
  CHECK(s.bias.empty());
}

TEST_CASE("two_mode_imbalanced bias gives the dominant mode at least twice the mass") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SuiteParams p;
    p.seed = seed;
    const TaskSuite s = build_task_suite(p);
    REQUIRE(s.tasks[0].num_modes() == 2);
    REQUIRE(s.bias.size() == 1);
    CHECK(s.bias[0].token == s.tasks[0].modes()[0][0][0]);
    PolicyParams policy = PolicyParams::tabular(p.vocab, s.tasks[0].max_len(), s);
    policy.inject_bias(s.bias);
    double mass[2] = {0, 0};
    for (const auto& [tr, prob] : enumerate_distribution(policy, s.tasks[0], s.tasks[0].max_len())) {
      if (tr.mode) mass[*tr.mode] += prob;
    }
    CHECK(mass[0] >= 2.0 * mass[1]);
    CHECK(mass[1] > 0.0);
    // With delta = 1 the ratio is exactly e.
    CHECK(mass[0] / mass[1] == doctest::Approx(std::exp(1.0)).epsilon(1e-9));
  }
}

TEST_CASE("k_mode_uniform suite: disjoint and reachable modes") {
  SuiteParams p;
  p.kind = SuiteKind::kKModeUniform;
  p.num_modes = 4;
  p.num_tasks = 3;
  const TaskSuite s = build_task_suite(p);
  CHECK(s.bias.empty());
  for (const TaskSpec& t : s.tasks) {
    CHECK(t.num_modes() == 4);
    CHECK(all_seqs_disjoint(t));
    PolicyParams policy = PolicyParams::tabular(p.vocab, t.max_len(), s);
    std::vector<double> mass(4, 0.0);
    for (const auto& [tr, prob] : enumerate_distribution(policy, t, t.max_len())) {
      if (tr.mode) mass[static_cast<std::size_t>(*tr.mode)] += prob;
    }
    for (double m : mass) CHECK(m > 0.0);
    for (const auto& mode : t.modes()) {
      for (const auto& seq : mode) CHECK(static_cast<int>(seq.size()) <= t.max_len());
    }
  }
}

TEST_CASE("suite generation is seed-deterministic") {
  SuiteParams p;
  p.num_tasks = 4;
  p.seed = 99;
  const TaskSuite a = build_task_suite(p);
  const TaskSuite b = build_task_suite(p);
  CHECK(suite_to_json(a) == suite_to_json(b));
  p.seed = 100;
  CHECK(suite_to_json(build_task_suite(p)) != suite_to_json(a));
  std::set<int> ids;
  for (const auto& t : a.tasks) ids.insert(t.task_id());
  CHECK(ids.size() == 4);
}

TEST_CASE("infeasible suites are rejected") {
  SuiteParams p;
  p.kind = SuiteKind::kKModeUniform;
  p.vocab = 4;
  p.num_modes = 4;
  CHECK_THROWS_AS(build_task_suite(p), std::invalid_argument);
  p.num_modes = 2;
  p.branching = 4;
  CHECK_THROWS_AS(build_task_suite(p), std::invalid_argument);
  p.branching = 1;
  p.vocab = 3;
  CHECK_THROWS_AS(build_task_suite(p), std::invalid_argument);
  p.vocab = 4;
  p.answer_len = 0;
  CHECK_THROWS_AS(build_task_suite(p), std::invalid_argument);
}

TEST_CASE("suite JSON round trip and unknown keys") {
  SuiteParams p;
  p.kind = SuiteKind::kKModeUniform;
  p.num_modes = 3;
  p.num_tasks = 2;
  p.seed = 5;
  CHECK(suite_params_from_json(suite_params_to_json(p)) == p);
  const TaskSuite s = build_task_suite(p);
  const TaskSuite back = suite_from_json(suite_to_json(s));
  CHECK(suite_to_json(back) == suite_to_json(s));
  REQUIRE(back.tasks.size() == s.tasks.size());
  CHECK(back.tasks[1].modes() == s.tasks[1].modes());

  auto j = suite_params_to_json(p);
  j["branchin"] = 2;
  CHECK_THROWS_AS(suite_params_from_json(j), std::invalid_argument);
  CHECK_THROWS_AS(suite_kind_from_string("three_mode"), std::invalid_argument);
}
