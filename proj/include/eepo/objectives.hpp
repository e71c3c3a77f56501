#pragma once

#include <span>

#include "eepo/config.hpp"
#include "eepo/core_math.hpp"
#include "eepo/policy.hpp"

namespace eepo {

struct ObjectiveResult {
  double value = 0.0;
  Gradient gradient;
};

/// Unlearning loss over the stage-1 set: the mean over trajectories of the
/// per-token mean of ln(1 - p_clip), with p taken from the rollout model at
/// `temperature`. Returns zero value and gradient when the gate is closed.
ObjectiveResult unlearn_objective_and_gradient(std::span<const Trajectory> stage1, const PolicyParams& rollout,
                                               bool gate_active, double eps_l, double eps_r,
                                               double temperature);

/// Group-relative clipped surrogate, token-averaged over the group, minus
/// beta * mean-token exact KL to the reference plus lambda * mean-token
/// entropy. Ratios use each trajectory's stored behavior log-probabilities.
/// The gradient is the ascent direction with respect to the policy params.
ObjectiveResult grpo_objective_and_gradient(std::span<const Trajectory> group, const PolicyParams& policy,
                                            const PolicyParams& reference, const AdvantageGroup& adv,
                                            const TrainConfig& config);

}  // namespace eepo
