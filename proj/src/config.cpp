#include "eepo/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace eepo {

std::string to_string(TrainMode mode) { return mode == TrainMode::kGrpo ? "grpo" : "eepo"; }

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "grpo") return TrainMode::kGrpo;
  if (name == "eepo") return TrainMode::kEepo;
  throw std::invalid_argument("unknown mode '" + name + "' (expected grpo or eepo)");
}

TrainConfig TrainConfig::resolved() const {
  TrainConfig c = *this;
  if (baseline.temperature) c.temperature = *baseline.temperature;
  if (baseline.entropy_coef) c.lambda_ent = *baseline.entropy_coef;
  if (baseline.clip_high) c.eps_high = *baseline.clip_high;
  if (baseline.rollouts) c.group_size = *baseline.rollouts;
  c.baseline = {};
  return c;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + what);
  };
  const TrainConfig c = resolved();
  require(c.group_size >= 2 && c.group_size % 2 == 0, "group_size must be even and >= 2");
  require(c.batch_tasks >= 1, "batch_tasks must be >= 1");
  require(c.iterations >= 0, "iterations must be >= 0");
  require(c.lr > 0 && std::isfinite(c.lr), "lr must be > 0");
  require(c.unlearn_rate > 0 && std::isfinite(c.unlearn_rate), "unlearn_rate must be > 0");
  require(c.alpha >= 0, "alpha must be >= 0");
  require(c.window >= 1, "window must be >= 1");
  require(c.eps_low > 0 && c.eps_low < 1, "eps_low must lie in (0,1)");
  require(c.eps_high > 0, "eps_high must be > 0");
  require(c.eps_l > 0 && c.eps_r > 0 && c.eps_l < 1 - c.eps_r, "need 0 < eps_l < 1 - eps_r");
  require(c.beta_kl >= 0, "beta_kl must be >= 0");
  require(c.lambda_ent >= 0, "lambda_ent must be >= 0");
  require(c.temperature > 0 && std::isfinite(c.temperature), "temperature must be > 0");
  require(c.max_len >= 0, "max_len must be >= 0");
  require(c.checkpoint_every >= 0, "checkpoint_every must be >= 0");
  require(c.neural.window >= 1 && c.neural.d_emb >= 1 && c.neural.d_hidden >= 1, "invalid neural shape");
  require(c.init_scale >= 0, "init_scale must be >= 0");
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
      throw std::invalid_argument(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
  } else {
    out = j.at(key).get<T>();
  }
}

template <typename T>
nlohmann::json opt(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(c.mode);
  j["policy"] = to_string(c.policy);
  j["group_size"] = c.group_size;
  j["batch_tasks"] = c.batch_tasks;
  j["iterations"] = c.iterations;
  j["lr"] = c.lr;
  j["unlearn_rate"] = c.unlearn_rate;
  j["alpha"] = c.alpha;
  j["window"] = c.window;
  j["eps_low"] = c.eps_low;
  j["eps_high"] = c.eps_high;
  j["clip"] = c.clip;
  j["eps_l"] = c.eps_l;
  j["eps_r"] = c.eps_r;
  j["beta_kl"] = c.beta_kl;
  j["lambda_ent"] = c.lambda_ent;
  j["temperature"] = c.temperature;
  j["max_len"] = c.max_len;
  j["seed"] = c.seed;
  j["checkpoint_every"] = c.checkpoint_every;
  j["neural"] = {{"window", c.neural.window}, {"d_emb", c.neural.d_emb}, {"d_hidden", c.neural.d_hidden}};
  j["init_scale"] = c.init_scale;
  j["baseline"] = {{"temperature", opt(c.baseline.temperature)},
                   {"entropy_coef", opt(c.baseline.entropy_coef)},
                   {"clip_high", opt(c.baseline.clip_high)},
                   {"rollouts", opt(c.baseline.rollouts)}};
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"mode", "policy", "group_size", "batch_tasks", "iterations", "lr", "unlearn_rate", "alpha",
                  "window", "eps_low", "eps_high", "clip", "eps_l", "eps_r", "beta_kl", "lambda_ent",
                  "temperature", "max_len", "seed", "checkpoint_every", "neural", "init_scale", "baseline"},
                 "trainer");
  TrainConfig c;
  try {
    if (j.contains("mode")) c.mode = train_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("policy")) c.policy = policy_kind_from_string(j.at("policy").get<std::string>());
    read(j, "group_size", c.group_size);
    read(j, "batch_tasks", c.batch_tasks);
    read(j, "iterations", c.iterations);
    read(j, "lr", c.lr);
    read(j, "unlearn_rate", c.unlearn_rate);
    read(j, "alpha", c.alpha);
    read(j, "window", c.window);
    read(j, "eps_low", c.eps_low);
    read(j, "eps_high", c.eps_high);
    read(j, "clip", c.clip);
    read(j, "eps_l", c.eps_l);
    read(j, "eps_r", c.eps_r);
    read(j, "beta_kl", c.beta_kl);
    read(j, "lambda_ent", c.lambda_ent);
    read(j, "temperature", c.temperature);
    read(j, "max_len", c.max_len);
    read(j, "seed", c.seed);
    read(j, "checkpoint_every", c.checkpoint_every);
    read(j, "init_scale", c.init_scale);
    if (j.contains("neural")) {
      const auto& n = j.at("neural");
      reject_unknown(n, {"window", "d_emb", "d_hidden"}, "trainer.neural");
      read(n, "window", c.neural.window);
      read(n, "d_emb", c.neural.d_emb);
      read(n, "d_hidden", c.neural.d_hidden);
    }
    if (j.contains("baseline")) {
      const auto& b = j.at("baseline");
      reject_unknown(b, {"temperature", "entropy_coef", "clip_high", "rollouts"}, "trainer.baseline");
      read_opt(b, "temperature", c.baseline.temperature);
      read_opt(b, "entropy_coef", c.baseline.entropy_coef);
      read_opt(b, "clip_high", c.baseline.clip_high);
      read_opt(b, "rollouts", c.baseline.rollouts);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("trainer: ") + e.what());
  }
  return c;
}

nlohmann::ordered_json experiment_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["trainer"] = train_config_to_json(c.trainer);
  j["suite"] = suite_params_to_json(c.suite);
  j["eval"] = {{"samples", c.eval.samples},
               {"ks", c.eval.ks},
               {"temperature", c.eval.temperature},
               {"seed", c.eval.seed}};
  return j;
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"trainer", "suite", "eval"}, "config");
  ExperimentConfig c;
  if (j.contains("trainer")) c.trainer = train_config_from_json(j.at("trainer"));
  if (j.contains("suite")) c.suite = suite_params_from_json(j.at("suite"));
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    reject_unknown(e, {"samples", "ks", "temperature", "seed"}, "eval");
    try {
      read(e, "samples", c.eval.samples);
      read(e, "ks", c.eval.ks);
      read(e, "temperature", c.eval.temperature);
      read(e, "seed", c.eval.seed);
    } catch (const nlohmann::json::exception& ex) {
      throw std::invalid_argument(std::string("eval: ") + ex.what());
    }
    if (c.eval.samples < 1) throw std::invalid_argument("eval: samples must be >= 1");
    for (int k : c.eval.ks) {
      if (k < 1 || k > c.eval.samples) throw std::invalid_argument("eval: every k must lie in [1, samples]");
    }
    if (!(c.eval.temperature > 0)) throw std::invalid_argument("eval: temperature must be > 0");
  }
  c.trainer.validate();
  return c;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config '" + path + "': " + e.what());
  }
  return experiment_from_json(j);
}

nlohmann::ordered_json config_provenance() {
  nlohmann::ordered_json p;
  p["group_size"] = "8 rollouts per question, as in the reference training setup";
  p["batch_tasks"] = "desk scale: one policy update per step over a small task batch";
  p["lr"] = "desk-scale plain SGD rate for tabular logits, calibrated by pilot runs";
  p["unlearn_rate"] = "desk-scale unlearning rate; 3e-3 is the LLM-scale value and is used by the suppression check";
  p["alpha"] = "entropy threshold 0.3 nats";
  p["window"] = "moving-average horizon m = 3 training steps";
  p["eps_low"] = "standard surrogate clip 0.2";
  p["eps_high"] = "standard surrogate clip 0.2; the clip-higher baseline raises it";
  p["eps_l"] = "unspecified upstream; 1e-6 chosen";
  p["eps_r"] = "unspecified upstream; 1e-2 chosen";
  p["beta_kl"] = "KL coefficient 1e-4";
  p["lambda_ent"] = "entropy coefficient 1e-5";
  p["temperature"] = "sampling temperature 1.0";
  p["gate_entropy_source"] = "stage-1 tokens of the current step, pooled over the task batch";
  p["reference_policy"] = "step-0 snapshot of the policy, fixed for the run";
  p["task_batching"] = "round-robin over the suite, batch_tasks tasks per step";
  p["held_out_eval"] = "eval --held-out draws fresh instances from the same generator: next suite seed, new task ids";
  return p;
}

void set_knob(TrainConfig& c, const std::string& knob, const std::string& value) {
  double v = 0.0;
  try {
    std::size_t used = 0;
    v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw std::invalid_argument("knob value '" + value + "' is not a number");
  }
  if (knob == "temperature") {
    c.baseline.temperature = v;
  } else if (knob == "entropy_coef") {
    c.baseline.entropy_coef = v;
  } else if (knob == "clip_high") {
    c.baseline.clip_high = v;
  } else if (knob == "rollouts") {
    if (v != std::floor(v)) throw std::invalid_argument("rollouts must be an integer");
    c.baseline.rollouts = static_cast<int>(v);
  } else if (knob == "alpha") {
    c.alpha = v;
  } else if (knob == "unlearn_rate") {
    c.unlearn_rate = v;
  } else {
    throw std::invalid_argument("unknown knob '" + knob +
                                "' (expected temperature, entropy_coef, clip_high, rollouts, alpha, unlearn_rate)");
  }
}

}  // namespace eepo
