#include "eepo/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace eepo {

Distribution softmax_with_temperature(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("softmax: temperature must be positive and finite");
  }
  if (logits.empty()) throw std::invalid_argument("softmax: empty logit vector");
  for (double z : logits) {
    if (!std::isfinite(z)) throw std::invalid_argument("softmax: non-finite logit");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - top) / temperature);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return Distribution(std::move(p));
}

double token_entropy(const Distribution& d) {
  double h = 0.0;
  for (double p : d.probs()) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

GateState::GateState(std::size_t window, double alpha) : window_(window), alpha_(alpha) {
  if (window == 0) throw std::invalid_argument("gate: window must be >= 1");
  if (!(alpha >= 0.0)) throw std::invalid_argument("gate: alpha must be >= 0");
}

bool GateState::update(double step_entropy) {
  if (!(step_entropy >= 0.0)) throw std::invalid_argument("gate: entropy must be >= 0");
  history_.push_back(step_entropy);
  while (history_.size() > window_) history_.pop_front();
  active_ = warm() && mean() < alpha_;
  return active_;
}

double GateState::mean() const {
  if (history_.empty()) return 0.0;
  return std::accumulate(history_.begin(), history_.end(), 0.0) /
         static_cast<double>(history_.size());
}

AdvantageGroup group_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw std::invalid_argument("advantages: group size must be >= 2");
  AdvantageGroup out;
  out.rewards.assign(rewards.begin(), rewards.end());
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  out.advantages.assign(rewards.size(), 0.0);
  if (sd < 1e-8) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < rewards.size(); ++i) out.advantages[i] = (rewards[i] - mean) / sd;
  return out;
}

double importance_ratio(double logp_new, double logp_old) {
  if (!std::isfinite(logp_new) || !std::isfinite(logp_old)) {
    throw std::invalid_argument("importance_ratio: non-finite log-probability");
  }
  return std::exp(logp_new - logp_old);
}

namespace {

void check_clip_bounds(double ratio, double eps_low, double eps_high) {
  if (!(ratio >= 0.0)) throw std::invalid_argument("surrogate: ratio must be >= 0");
  if (!(eps_low > 0.0 && eps_low < 1.0)) throw std::invalid_argument("surrogate: eps_low must lie in (0,1)");
  if (!(eps_high > 0.0)) throw std::invalid_argument("surrogate: eps_high must be > 0");
}

}  // namespace

double clipped_surrogate_term(double ratio, double advantage, double eps_low, double eps_high) {
  check_clip_bounds(ratio, eps_low, eps_high);
  const double clipped = std::clamp(ratio, 1.0 - eps_low, 1.0 + eps_high);
  return std::min(ratio * advantage, clipped * advantage);
}

bool surrogate_passes_gradient(double ratio, double advantage, double eps_low, double eps_high) {
  check_clip_bounds(ratio, eps_low, eps_high);
  if (advantage > 0.0) return ratio <= 1.0 + eps_high;
  if (advantage < 0.0) return ratio >= 1.0 - eps_low;
  return false;
}

double kl_divergence_exact(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl: dimension mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) throw std::invalid_argument("kl: q has zero mass where p is positive");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, 0.0);
}

double nll_token_loss(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("nll: probability must lie in (0,1]");
  return -std::log(p);
}

namespace {

void check_unlearn_bounds(double p, double eps_l, double eps_r) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("complementary loss: p outside [0,1]");
  if (!(eps_l > 0.0 && eps_r > 0.0 && eps_l < 1.0 - eps_r)) {
    throw std::invalid_argument("complementary loss: need 0 < eps_L < 1 - eps_R < 1");
  }
}

}  // namespace

double complementary_token_loss(double p, double eps_l, double eps_r) {
  check_unlearn_bounds(p, eps_l, eps_r);
  return std::log1p(-std::clamp(p, eps_l, 1.0 - eps_r));
}

double complementary_token_loss_dp(double p, double eps_l, double eps_r) {
  check_unlearn_bounds(p, eps_l, eps_r);
  if (p <= eps_l || p >= 1.0 - eps_r) return 0.0;
  return -1.0 / (1.0 - p);
}

std::vector<double> log_prob_logit_grad(const Distribution& d, std::size_t token, double temperature) {
  if (token >= d.size()) throw std::invalid_argument("log_prob grad: token out of range");
  std::vector<double> g(d.size());
  for (std::size_t j = 0; j < d.size(); ++j) {
    g[j] = ((j == token ? 1.0 : 0.0) - d[j]) / temperature;
  }
  return g;
}

std::vector<double> entropy_logit_grad(const Distribution& d, double temperature) {
  const double h = token_entropy(d);
  std::vector<double> g(d.size(), 0.0);
  for (std::size_t j = 0; j < d.size(); ++j) {
    if (d[j] > 0.0) g[j] = -d[j] * (std::log(d[j]) + h) / temperature;
  }
  return g;
}

std::vector<double> kl_logit_grad(const Distribution& d, const Distribution& ref, double temperature) {
  const double kl = kl_divergence_exact(d, ref);
  std::vector<double> g(d.size(), 0.0);
  for (std::size_t j = 0; j < d.size(); ++j) {
    if (d[j] > 0.0) g[j] = d[j] * (std::log(d[j] / ref[j]) - kl) / temperature;
  }
  return g;
}

}  // namespace eepo
