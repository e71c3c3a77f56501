#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "eepo/core_math.hpp"
#include "eepo/env.hpp"
#include "eepo/rng.hpp"
#include "eepo/types.hpp"

namespace eepo {

struct ContextKey {
  int task_id = 0;
  TokenSeq prefix;

  auto operator<=>(const ContextKey&) const = default;
};

/// Logit table keyed by (task, answer prefix). Missing entries are all-zero
/// logits, i.e. the uniform distribution.
class TabularPolicy {
 public:
  explicit TabularPolicy(int vocab);

  int vocab() const { return vocab_; }
  std::vector<double> logits(const ContextKey& key) const;
  /// Creates the entry (zero-filled) on first access.
  std::vector<double>& entry(const ContextKey& key);
  const std::map<ContextKey, std::vector<double>>& table() const { return table_; }

  bool operator==(const TabularPolicy& other) const;

 private:
  int vocab_;
  std::map<ContextKey, std::vector<double>> table_;
};

struct NeuralShape {
  int vocab = 8;
  int window = 4;
  int d_emb = 8;
  int d_hidden = 32;

  bool operator==(const NeuralShape&) const = default;
};

/// Embeds the last `window` context tokens (zero vectors where the context is
/// shorter), applies one tanh hidden layer and projects to vocabulary logits.
class WindowNeuralPolicy {
 public:
  WindowNeuralPolicy(NeuralShape shape, std::uint64_t seed, double init_scale = 0.5);
  /// Zero-initialized parameters; used when loading checkpoints.
  explicit WindowNeuralPolicy(NeuralShape shape);

  const NeuralShape& shape() const { return shape_; }
  std::size_t num_params() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  std::vector<double> logits(std::span<const Token> context) const;
  /// Adds the parameter gradient implied by dL/dlogits at `context` into `grad`.
  void backprop(std::span<const Token> context, std::span<const double> dlogits,
                std::span<double> grad) const;

  bool operator==(const WindowNeuralPolicy& other) const = default;

 private:
  struct Offsets {
    std::size_t emb, w1, b1, w2, b2, total;
  };
  Offsets offsets() const;
  std::vector<double> gather_input(std::span<const Token> context) const;

  NeuralShape shape_;
  std::vector<double> params_;
};

enum class PolicyKind { kTabular, kNeural };

std::string to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& name);

/// Parameter gradient. Tabular policies use the sparse map, neural policies
/// the dense vector.
struct Gradient {
  std::map<ContextKey, std::vector<double>> sparse;
  std::vector<double> dense;

  /// this += scale * other
  void axpy(double scale, const Gradient& other);
  void scale(double factor);
  bool is_zero() const;
  /// Every coordinate as (label, value), in a fixed order.
  std::vector<std::pair<std::string, double>> flatten() const;
};

/// Policy parameters plus the task registry (prompt per task id) and the
/// maximum answer length the policy is used with.
class PolicyParams {
 public:
  PolicyParams(TabularPolicy impl, int max_len);
  PolicyParams(WindowNeuralPolicy impl, int max_len);

  static PolicyParams tabular(int vocab, int max_len, const TaskSuite& suite);
  static PolicyParams neural(NeuralShape shape, int max_len, const TaskSuite& suite,
                             std::uint64_t seed, double init_scale = 0.5);

  PolicyKind kind() const;
  int vocab() const;
  int max_len() const { return max_len_; }

  void register_task(int task_id, TokenSeq prompt);
  const std::map<int, TokenSeq>& tasks() const { return prompts_; }
  bool knows_task(int task_id) const { return prompts_.contains(task_id); }

  std::vector<double> logits(int task_id, std::span<const Token> prefix) const;
  /// grad += scale * d(params)/d(logits)^T dlogits at (task, prefix).
  void accumulate(int task_id, std::span<const Token> prefix, std::span<const double> dlogits,
                  double scale, Gradient& grad) const;

  /// In-place params += rate * grad.
  void add_scaled(const Gradient& grad, double rate);
  Gradient zero_gradient() const;

  /// Adds a fixed logit offset at a tabular context (initial mode bias).
  void inject_bias(const std::vector<BiasEntry>& bias);

  TabularPolicy* as_tabular() { return std::get_if<TabularPolicy>(&impl_); }
  const TabularPolicy* as_tabular() const { return std::get_if<TabularPolicy>(&impl_); }
  WindowNeuralPolicy* as_neural() { return std::get_if<WindowNeuralPolicy>(&impl_); }
  const WindowNeuralPolicy* as_neural() const { return std::get_if<WindowNeuralPolicy>(&impl_); }

  bool operator==(const PolicyParams& other) const;

 private:
  TokenSeq context_of(int task_id, std::span<const Token> prefix) const;

  std::variant<TabularPolicy, WindowNeuralPolicy> impl_;
  std::map<int, TokenSeq> prompts_;
  int max_len_;
};

struct Trajectory {
  int task_id = 0;
  TokenSeq tokens;
  /// Per-token log-probabilities under the sampling distribution, temperature included.
  std::vector<double> behavior_logps;
  /// Entropy (nats) of each per-token sampling distribution.
  std::vector<double> token_entropies;
  bool terminated = false;
  int reward = 0;
  std::optional<int> mode;
  int stage = 1;
};

Distribution next_token_distribution(const PolicyParams& policy, int task_id,
                                     std::span<const Token> prefix, double temperature);

Trajectory sample_trajectory(const PolicyParams& policy, const TaskSpec& task, RngStream& rng,
                             double temperature, int max_len);

/// Index of the first token whose cumulative mass exceeds u.
std::size_t sample_index(const Distribution& d, double u);

double trajectory_log_prob(const PolicyParams& policy, const Trajectory& trajectory,
                           double temperature);

/// d trajectory_log_prob / d params
Gradient trajectory_log_prob_gradient(const PolicyParams& policy, const Trajectory& trajectory,
                                      double temperature);

enum class Direction { kAscent, kDescent };

/// params +/- rate * gradient. Stateless (no momentum).
PolicyParams sgd_step(PolicyParams params, const Gradient& gradient, double rate,
                      Direction direction);

/// Deep, independent copy.
PolicyParams sync_params(const PolicyParams& source);

/// All terminated or truncated answers with their exact probabilities.
/// Throws ResourceError when more than `leaf_budget` leaves would be visited.
std::vector<std::pair<Trajectory, double>> enumerate_distribution(const PolicyParams& policy,
                                                                  const TaskSpec& task, int max_len,
                                                                  double temperature = 1.0,
                                                                  std::size_t leaf_budget = 1'000'000);

/// Central differences over every coordinate of `layout` (tabular) or every
/// parameter (neural).
Gradient finite_difference_gradient(const PolicyParams& policy,
                                    const std::function<double(const PolicyParams&)>& loss,
                                    double step, const Gradient& layout);

// Checkpoint format, version 1. Header line:
//   eepo-checkpoint 1 <kind> <vocab> <max_len> [<window> <d_emb> <d_hidden>]
// then "task <id> <n> <prompt...>" lines and one record per parameter entry:
//   tabular: "entry <task> <n> <prefix...> <v_0> ... <v_{V-1}>"
//   neural:  "param <index> <value>"
// Values carry 17 significant digits, so a round trip is bit-exact.
inline constexpr int kCheckpointVersion = 1;

std::string serialize_checkpoint(const PolicyParams& policy);
PolicyParams parse_checkpoint(const std::string& text);
void save_checkpoint(const PolicyParams& policy, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);

/// FNV-1a over parameter bit patterns; all-zero tabular entries are skipped so
/// that the hash depends only on the represented function.
std::uint64_t parameter_hash(const PolicyParams& policy);

std::string format_double(double v);

}  // namespace eepo
