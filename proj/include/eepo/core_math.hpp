#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

namespace eepo {

/// Categorical distribution over the vocabulary. Only softmax_with_temperature
/// creates one, so the probabilities are always normalized.
class Distribution {
 public:
  std::span<const double> probs() const { return probs_; }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::size_t size() const { return probs_.size(); }

 private:
  friend Distribution softmax_with_temperature(std::span<const double>, double);
  explicit Distribution(std::vector<double> p) : probs_(std::move(p)) {}
  std::vector<double> probs_;
};

Distribution softmax_with_temperature(std::span<const double> logits, double temperature);

/// Shannon entropy in nats, with 0 ln 0 taken as 0.
double token_entropy(const Distribution& d);

/// Moving-average entropy gate. The gate opens only after `window` step
/// entropies have been observed and their mean drops below `alpha`.
class GateState {
 public:
  GateState(std::size_t window, double alpha);

  /// Pushes one step-level entropy and returns whether unlearning is active.
  bool update(double step_entropy);

  bool warm() const { return history_.size() == window_; }
  bool active() const { return active_; }
  double mean() const;
  std::size_t window() const { return window_; }
  double alpha() const { return alpha_; }
  const std::deque<double>& history() const { return history_; }

 private:
  std::size_t window_;
  double alpha_;
  std::deque<double> history_;
  bool active_ = false;
};

struct AdvantageGroup {
  std::vector<double> rewards;
  std::vector<double> advantages;
  bool degenerate = false;
};

/// Group-normalized advantages (r - mean) / std with the population std.
/// Groups whose std falls below 1e-8 are degenerate and get all-zero advantages.
AdvantageGroup group_advantages(std::span<const double> rewards);

double importance_ratio(double logp_new, double logp_old);

/// min(r A, clip(r, 1 - eps_low, 1 + eps_high) A)
double clipped_surrogate_term(double ratio, double advantage, double eps_low, double eps_high);

/// True when the surrogate term has a non-zero derivative in the ratio,
/// i.e. the unclipped branch is selected.
bool surrogate_passes_gradient(double ratio, double advantage, double eps_low, double eps_high);

double kl_divergence_exact(const Distribution& p, const Distribution& q);

double nll_token_loss(double p);

/// ln(1 - clip(p, eps_l, 1 - eps_r)).
double complementary_token_loss(double p, double eps_l, double eps_r);

/// d/dp of complementary_token_loss. Zero where the clip is saturated.
double complementary_token_loss_dp(double p, double eps_l, double eps_r);

// Gradients with respect to the raw logits z of d = softmax(z / T).

/// d ln d[token] / dz
std::vector<double> log_prob_logit_grad(const Distribution& d, std::size_t token, double temperature);

/// d H(d) / dz
std::vector<double> entropy_logit_grad(const Distribution& d, double temperature);

/// d KL(d || ref) / dz, with ref held fixed.
std::vector<double> kl_logit_grad(const Distribution& d, const Distribution& ref, double temperature);

}  // namespace eepo
