#include "eepo/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace eepo {

ObjectiveResult unlearn_objective_and_gradient(std::span<const Trajectory> stage1, const PolicyParams& rollout,
                                               bool gate_active, double eps_l, double eps_r,
                                               double temperature) {
  if (stage1.empty()) throw std::invalid_argument("unlearn objective: empty stage-1 set");
  ObjectiveResult out;
  out.gradient = rollout.zero_gradient();
  if (!gate_active) return out;

  const double per_traj = 1.0 / static_cast<double>(stage1.size());
  for (const Trajectory& tr : stage1) {
    if (tr.tokens.empty()) continue;
    const double weight = per_traj / static_cast<double>(tr.tokens.size());
    std::span<const Token> toks(tr.tokens);
    for (std::size_t t = 0; t < toks.size(); ++t) {
      const Distribution d = next_token_distribution(rollout, tr.task_id, toks.first(t), temperature);
      const auto tok = static_cast<std::size_t>(toks[t]);
      const double p = d[tok];
      out.value += weight * complementary_token_loss(p, eps_l, eps_r);
      const double dl_dp = complementary_token_loss_dp(p, eps_l, eps_r);
      if (dl_dp == 0.0) continue;
      // dp/dz_j = p (1[j = tok] - p_j) / T
      std::vector<double> dz = log_prob_logit_grad(d, tok, temperature);
      for (double& v : dz) v *= p * dl_dp;
      rollout.accumulate(tr.task_id, toks.first(t), dz, weight, out.gradient);
    }
  }
  return out;
}

ObjectiveResult grpo_objective_and_gradient(std::span<const Trajectory> group, const PolicyParams& policy,
                                            const PolicyParams& reference, const AdvantageGroup& adv,
                                            const TrainConfig& config) {
  if (group.size() != adv.advantages.size()) {
    throw std::invalid_argument("grpo objective: group and advantage sizes differ");
  }
  std::size_t total_tokens = 0;
  for (const Trajectory& tr : group) {
    if (tr.behavior_logps.size() != tr.tokens.size()) {
      throw std::invalid_argument("grpo objective: behavior log-probs missing");
    }
    total_tokens += tr.tokens.size();
  }
  ObjectiveResult out;
  out.gradient = policy.zero_gradient();
  if (total_tokens == 0) return out;

  const double temp = config.temperature;
  const double inv_n = 1.0 / static_cast<double>(total_tokens);
  const bool need_kl = config.beta_kl != 0.0;
  const bool need_ent = config.lambda_ent != 0.0;

  for (std::size_t i = 0; i < group.size(); ++i) {
    const Trajectory& tr = group[i];
    const double a = adv.advantages[i];
    std::span<const Token> toks(tr.tokens);
    for (std::size_t t = 0; t < toks.size(); ++t) {
      const auto prefix = toks.first(t);
      const Distribution d = next_token_distribution(policy, tr.task_id, prefix, temp);
      const auto tok = static_cast<std::size_t>(toks[t]);
      std::vector<double> dz(d.size(), 0.0);

      if (a != 0.0) {
        const double ratio = importance_ratio(std::log(d[tok]), tr.behavior_logps[t]);
        bool passes = true;
        if (config.clip) {
          out.value += inv_n * clipped_surrogate_term(ratio, a, config.eps_low, config.eps_high);
          passes = surrogate_passes_gradient(ratio, a, config.eps_low, config.eps_high);
        } else {
          out.value += inv_n * ratio * a;
        }
        if (passes) {
          // d(r A)/dz = A r d ln pi / dz
          const auto g = log_prob_logit_grad(d, tok, temp);
          for (std::size_t j = 0; j < dz.size(); ++j) dz[j] += a * ratio * g[j];
        }
      }
      if (need_kl) {
        const Distribution ref = next_token_distribution(reference, tr.task_id, prefix, temp);
        out.value -= inv_n * config.beta_kl * kl_divergence_exact(d, ref);
        const auto g = kl_logit_grad(d, ref, temp);
        for (std::size_t j = 0; j < dz.size(); ++j) dz[j] -= config.beta_kl * g[j];
      }
      if (need_ent) {
        out.value += inv_n * config.lambda_ent * token_entropy(d);
        const auto g = entropy_logit_grad(d, temp);
        for (std::size_t j = 0; j < dz.size(); ++j) dz[j] += config.lambda_ent * g[j];
      }
      policy.accumulate(tr.task_id, prefix, dz, inv_n, out.gradient);
    }
  }
  return out;
}

}  // namespace eepo
