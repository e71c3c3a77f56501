#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "eepo/env.hpp"
#include "eepo/policy.hpp"

namespace eepo {

enum class TrainMode { kGrpo, kEepo };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

/// Baseline exploration knobs. Each one, when set, replaces exactly one
/// trainer field in resolved().
struct BaselineOverrides {
  std::optional<double> temperature;
  std::optional<double> entropy_coef;
  std::optional<double> clip_high;
  std::optional<int> rollouts;

  bool operator==(const BaselineOverrides&) const = default;
};

struct TrainConfig {
  TrainMode mode = TrainMode::kEepo;
  PolicyKind policy = PolicyKind::kTabular;

  int group_size = 8;
  int batch_tasks = 1;
  int iterations = 500;
  double lr = 2.0;
  double unlearn_rate = 1.0;
  double alpha = 0.3;
  int window = 3;

  double eps_low = 0.2;
  double eps_high = 0.2;
  /// false disables the surrogate clip entirely (plain importance-weighted objective).
  bool clip = true;
  double eps_l = 1e-6;
  double eps_r = 1e-2;

  double beta_kl = 1e-4;
  double lambda_ent = 1e-5;
  double temperature = 1.0;
  /// 0 takes the task suite's answer length (content tokens + EOS).
  int max_len = 0;
  std::uint64_t seed = 0;
  /// 0 writes only the initial and final checkpoints.
  int checkpoint_every = 0;

  NeuralShape neural{8, 4, 8, 32};
  double init_scale = 0.5;

  BaselineOverrides baseline;

  /// Copy with the baseline overrides folded into their target fields.
  TrainConfig resolved() const;
  /// Throws std::invalid_argument on any violated invariant.
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

struct EvalConfig {
  int samples = 64;
  std::vector<int> ks{1, 4, 8};
  double temperature = 1.0;
  std::uint64_t seed = 12345;

  bool operator==(const EvalConfig&) const = default;
};

/// The whole experiment file: trainer, task suite and evaluation sections.
struct ExperimentConfig {
  TrainConfig trainer;
  SuiteParams suite;
  EvalConfig eval;

  bool operator==(const ExperimentConfig&) const = default;
};

nlohmann::ordered_json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::ordered_json experiment_to_json(const ExperimentConfig& c);
/// Missing keys take defaults; unknown keys are errors.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::string& path);

/// Where each trainer default comes from, keyed by field name.
nlohmann::ordered_json config_provenance();

/// Sets one trainer field by name from a decimal string. Used by sweeps.
void set_knob(TrainConfig& c, const std::string& knob, const std::string& value);

}  // namespace eepo
