#include "eepo/policy.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace eepo {

// ---------------------------------------------------------------------------
// TabularPolicy

TabularPolicy::TabularPolicy(int vocab) : vocab_(vocab) {
  if (vocab < 2) throw std::invalid_argument("tabular policy: vocab must be >= 2");
}

std::vector<double> TabularPolicy::logits(const ContextKey& key) const {
  auto it = table_.find(key);
  if (it == table_.end()) return std::vector<double>(static_cast<std::size_t>(vocab_), 0.0);
  return it->second;
}

std::vector<double>& TabularPolicy::entry(const ContextKey& key) {
  auto [it, inserted] = table_.try_emplace(key);
  if (inserted) it->second.assign(static_cast<std::size_t>(vocab_), 0.0);
  return it->second;
}

namespace {

bool all_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

// Compares a's non-zero entries against b.
bool covered_by(const TabularPolicy& a, const TabularPolicy& b) {
  for (const auto& [key, values] : a.table()) {
    if (all_zero(values)) continue;
    auto it = b.table().find(key);
    if (it == b.table().end() || it->second != values) return false;
  }
  return true;
}

}  // namespace

bool TabularPolicy::operator==(const TabularPolicy& other) const {
  return vocab_ == other.vocab_ && covered_by(*this, other) && covered_by(other, *this);
}

// ---------------------------------------------------------------------------
// WindowNeuralPolicy

WindowNeuralPolicy::WindowNeuralPolicy(NeuralShape shape) : shape_(shape) {
  if (shape.vocab < 2 || shape.window < 1 || shape.d_emb < 1 || shape.d_hidden < 1) {
    throw std::invalid_argument("neural policy: invalid shape");
  }
  params_.assign(offsets().total, 0.0);
}

WindowNeuralPolicy::WindowNeuralPolicy(NeuralShape shape, std::uint64_t seed, double init_scale)
    : WindowNeuralPolicy(shape) {
  auto rng = RngStream::child(seed, StreamDomain::kInit, {});
  std::normal_distribution<double> normal(0.0, 1.0);
  const Offsets o = offsets();
  const double w1_scale = 1.0 / std::sqrt(static_cast<double>(shape_.window * shape_.d_emb));
  const double w2_scale = init_scale / std::sqrt(static_cast<double>(shape_.d_hidden));
  for (std::size_t i = o.emb; i < o.w1; ++i) params_[i] = init_scale * normal(rng.engine());
  for (std::size_t i = o.w1; i < o.b1; ++i) params_[i] = w1_scale * normal(rng.engine());
  for (std::size_t i = o.w2; i < o.b2; ++i) params_[i] = w2_scale * normal(rng.engine());
}

WindowNeuralPolicy::Offsets WindowNeuralPolicy::offsets() const {
  const auto v = static_cast<std::size_t>(shape_.vocab);
  const auto k = static_cast<std::size_t>(shape_.window);
  const auto e = static_cast<std::size_t>(shape_.d_emb);
  const auto h = static_cast<std::size_t>(shape_.d_hidden);
  Offsets o{};
  o.emb = 0;
  o.w1 = o.emb + v * e;
  o.b1 = o.w1 + h * k * e;
  o.w2 = o.b1 + h;
  o.b2 = o.w2 + v * h;
  o.total = o.b2 + v;
  return o;
}

std::vector<double> WindowNeuralPolicy::gather_input(std::span<const Token> context) const {
  const auto k = static_cast<std::size_t>(shape_.window);
  const auto e = static_cast<std::size_t>(shape_.d_emb);
  std::vector<double> x(k * e, 0.0);
  const std::size_t n = std::min(k, context.size());
  const std::size_t pad = k - n;
  const Offsets o = offsets();
  for (std::size_t slot = 0; slot < n; ++slot) {
    const Token t = context[context.size() - n + slot];
    if (t < 0 || t >= shape_.vocab) throw std::invalid_argument("neural policy: token outside vocabulary");
    const double* row = params_.data() + o.emb + static_cast<std::size_t>(t) * e;
    std::copy(row, row + e, x.begin() + static_cast<std::ptrdiff_t>((pad + slot) * e));
  }
  return x;
}

std::vector<double> WindowNeuralPolicy::logits(std::span<const Token> context) const {
  const Offsets o = offsets();
  const auto v = static_cast<std::size_t>(shape_.vocab);
  const auto h = static_cast<std::size_t>(shape_.d_hidden);
  const std::vector<double> x = gather_input(context);
  std::vector<double> hidden(h);
  for (std::size_t i = 0; i < h; ++i) {
    double acc = params_[o.b1 + i];
    const double* w = params_.data() + o.w1 + i * x.size();
    for (std::size_t j = 0; j < x.size(); ++j) acc += w[j] * x[j];
    hidden[i] = std::tanh(acc);
  }
  std::vector<double> out(v);
  for (std::size_t i = 0; i < v; ++i) {
    double acc = params_[o.b2 + i];
    const double* w = params_.data() + o.w2 + i * h;
    for (std::size_t j = 0; j < h; ++j) acc += w[j] * hidden[j];
    out[i] = acc;
  }
  return out;
}

void WindowNeuralPolicy::backprop(std::span<const Token> context, std::span<const double> dlogits,
                                  std::span<double> grad) const {
  const Offsets o = offsets();
  const auto v = static_cast<std::size_t>(shape_.vocab);
  const auto h = static_cast<std::size_t>(shape_.d_hidden);
  const auto k = static_cast<std::size_t>(shape_.window);
  const auto e = static_cast<std::size_t>(shape_.d_emb);
  if (dlogits.size() != v || grad.size() != o.total) {
    throw std::invalid_argument("neural policy: gradient shape mismatch");
  }
  const std::vector<double> x = gather_input(context);
  std::vector<double> hidden(h);
  for (std::size_t i = 0; i < h; ++i) {
    double acc = params_[o.b1 + i];
    const double* w = params_.data() + o.w1 + i * x.size();
    for (std::size_t j = 0; j < x.size(); ++j) acc += w[j] * x[j];
    hidden[i] = std::tanh(acc);
  }
  std::vector<double> dhidden(h, 0.0);
  for (std::size_t i = 0; i < v; ++i) {
    const double g = dlogits[i];
    if (g == 0.0) continue;
    grad[o.b2 + i] += g;
    const double* w = params_.data() + o.w2 + i * h;
    double* gw = grad.data() + o.w2 + i * h;
    for (std::size_t j = 0; j < h; ++j) {
      gw[j] += g * hidden[j];
      dhidden[j] += g * w[j];
    }
  }
  std::vector<double> dx(x.size(), 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    const double da = dhidden[i] * (1.0 - hidden[i] * hidden[i]);
    if (da == 0.0) continue;
    grad[o.b1 + i] += da;
    const double* w = params_.data() + o.w1 + i * x.size();
    double* gw = grad.data() + o.w1 + i * x.size();
    for (std::size_t j = 0; j < x.size(); ++j) {
      gw[j] += da * x[j];
      dx[j] += da * w[j];
    }
  }
  const std::size_t n = std::min(k, context.size());
  const std::size_t pad = k - n;
  for (std::size_t slot = 0; slot < n; ++slot) {
    const auto t = static_cast<std::size_t>(context[context.size() - n + slot]);
    double* gr = grad.data() + o.emb + t * e;
    const double* d = dx.data() + (pad + slot) * e;
    for (std::size_t j = 0; j < e; ++j) gr[j] += d[j];
  }
}

// ---------------------------------------------------------------------------
// Gradient

void Gradient::axpy(double scale, const Gradient& other) {
  for (const auto& [key, values] : other.sparse) {
    auto [it, inserted] = sparse.try_emplace(key, values.size(), 0.0);
    if (it->second.size() != values.size()) throw std::invalid_argument("gradient: shape mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) it->second[i] += scale * values[i];
  }
  if (!other.dense.empty()) {
    if (dense.empty()) dense.assign(other.dense.size(), 0.0);
    if (dense.size() != other.dense.size()) throw std::invalid_argument("gradient: shape mismatch");
    for (std::size_t i = 0; i < dense.size(); ++i) dense[i] += scale * other.dense[i];
  }
}

void Gradient::scale(double factor) {
  for (auto& [_, values] : sparse) {
    for (double& v : values) v *= factor;
  }
  for (double& v : dense) v *= factor;
}

bool Gradient::is_zero() const {
  for (const auto& [_, values] : sparse) {
    if (!all_zero(values)) return false;
  }
  return all_zero(dense);
}

std::vector<std::pair<std::string, double>> Gradient::flatten() const {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [key, values] : sparse) {
    std::string label = "t" + std::to_string(key.task_id) + ":";
    for (Token t : key.prefix) label += std::to_string(t) + ",";
    for (std::size_t i = 0; i < values.size(); ++i) out.emplace_back(label + "#" + std::to_string(i), values[i]);
  }
  for (std::size_t i = 0; i < dense.size(); ++i) out.emplace_back("p" + std::to_string(i), dense[i]);
  return out;
}

// ---------------------------------------------------------------------------
// PolicyParams

std::string to_string(PolicyKind kind) { return kind == PolicyKind::kTabular ? "tabular" : "neural"; }

PolicyKind policy_kind_from_string(const std::string& name) {
  if (name == "tabular") return PolicyKind::kTabular;
  if (name == "neural") return PolicyKind::kNeural;
  throw std::invalid_argument("unknown policy kind '" + name + "'");
}

PolicyParams::PolicyParams(TabularPolicy impl, int max_len) : impl_(std::move(impl)), max_len_(max_len) {
  if (max_len < 1) throw std::invalid_argument("policy: max_len must be >= 1");
}

PolicyParams::PolicyParams(WindowNeuralPolicy impl, int max_len) : impl_(std::move(impl)), max_len_(max_len) {
  if (max_len < 1) throw std::invalid_argument("policy: max_len must be >= 1");
}

PolicyParams PolicyParams::tabular(int vocab, int max_len, const TaskSuite& suite) {
  PolicyParams p(TabularPolicy(vocab), max_len);
  for (const TaskSpec& t : suite.tasks) p.register_task(t.task_id(), t.prompt());
  return p;
}

PolicyParams PolicyParams::neural(NeuralShape shape, int max_len, const TaskSuite& suite,
                                  std::uint64_t seed, double init_scale) {
  PolicyParams p(WindowNeuralPolicy(shape, seed, init_scale), max_len);
  for (const TaskSpec& t : suite.tasks) p.register_task(t.task_id(), t.prompt());
  return p;
}

PolicyKind PolicyParams::kind() const {
  return std::holds_alternative<TabularPolicy>(impl_) ? PolicyKind::kTabular : PolicyKind::kNeural;
}

int PolicyParams::vocab() const {
  if (const auto* t = as_tabular()) return t->vocab();
  return as_neural()->shape().vocab;
}

void PolicyParams::register_task(int task_id, TokenSeq prompt) {
  for (Token t : prompt) {
    if (t < 0 || t >= vocab()) throw std::invalid_argument("policy: prompt token outside vocabulary");
  }
  prompts_[task_id] = std::move(prompt);
}

TokenSeq PolicyParams::context_of(int task_id, std::span<const Token> prefix) const {
  auto it = prompts_.find(task_id);
  if (it == prompts_.end()) throw std::invalid_argument("policy: unknown task id " + std::to_string(task_id));
  TokenSeq ctx = it->second;
  ctx.insert(ctx.end(), prefix.begin(), prefix.end());
  return ctx;
}

std::vector<double> PolicyParams::logits(int task_id, std::span<const Token> prefix) const {
  if (static_cast<int>(prefix.size()) >= max_len_) {
    throw std::invalid_argument("policy: prefix reaches max_len");
  }
  if (const auto* t = as_tabular()) {
    if (!knows_task(task_id)) throw std::invalid_argument("policy: unknown task id " + std::to_string(task_id));
    return t->logits(ContextKey{task_id, TokenSeq(prefix.begin(), prefix.end())});
  }
  return as_neural()->logits(context_of(task_id, prefix));
}

void PolicyParams::accumulate(int task_id, std::span<const Token> prefix, std::span<const double> dlogits,
                              double scale, Gradient& grad) const {
  if (static_cast<int>(dlogits.size()) != vocab()) throw std::invalid_argument("policy: dlogits size mismatch");
  if (const auto* t = as_tabular()) {
    (void)t;
    if (!knows_task(task_id)) throw std::invalid_argument("policy: unknown task id " + std::to_string(task_id));
    auto [it, inserted] = grad.sparse.try_emplace(ContextKey{task_id, TokenSeq(prefix.begin(), prefix.end())},
                                                  dlogits.size(), 0.0);
    for (std::size_t i = 0; i < dlogits.size(); ++i) it->second[i] += scale * dlogits[i];
    return;
  }
  const auto* n = as_neural();
  if (grad.dense.empty()) grad.dense.assign(n->num_params(), 0.0);
  std::vector<double> scaled(dlogits.begin(), dlogits.end());
  for (double& v : scaled) v *= scale;
  n->backprop(context_of(task_id, prefix), scaled, grad.dense);
}

void PolicyParams::add_scaled(const Gradient& grad, double rate) {
  if (auto* t = as_tabular()) {
    if (!grad.dense.empty()) throw std::invalid_argument("sgd: dense gradient for a tabular policy");
    for (const auto& [key, values] : grad.sparse) {
      if (static_cast<int>(values.size()) != t->vocab()) throw std::invalid_argument("sgd: gradient shape mismatch");
      if (all_zero(values)) continue;
      std::vector<double>& e = t->entry(key);
      for (std::size_t i = 0; i < values.size(); ++i) e[i] += rate * values[i];
    }
    return;
  }
  auto* n = as_neural();
  if (!grad.sparse.empty()) throw std::invalid_argument("sgd: sparse gradient for a neural policy");
  if (grad.dense.empty()) return;
  if (grad.dense.size() != n->num_params()) throw std::invalid_argument("sgd: gradient shape mismatch");
  auto p = n->params();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] += rate * grad.dense[i];
}

Gradient PolicyParams::zero_gradient() const {
  Gradient g;
  if (const auto* n = as_neural()) g.dense.assign(n->num_params(), 0.0);
  return g;
}

void PolicyParams::inject_bias(const std::vector<BiasEntry>& bias) {
  if (bias.empty()) return;
  auto* t = as_tabular();
  if (t == nullptr) throw std::invalid_argument("policy: bias injection requires a tabular policy");
  for (const BiasEntry& b : bias) {
    if (!knows_task(b.task_id)) throw std::invalid_argument("policy: bias for unknown task");
    if (b.token < 0 || b.token >= t->vocab()) throw std::invalid_argument("policy: bias token outside vocabulary");
    t->entry(ContextKey{b.task_id, b.prefix})[static_cast<std::size_t>(b.token)] += b.delta;
  }
}

bool PolicyParams::operator==(const PolicyParams& other) const {
  return max_len_ == other.max_len_ && prompts_ == other.prompts_ && impl_ == other.impl_;
}

// ---------------------------------------------------------------------------
// Sampling and likelihoods

Distribution next_token_distribution(const PolicyParams& policy, int task_id, std::span<const Token> prefix,
                                     double temperature) {
  const std::vector<double> z = policy.logits(task_id, prefix);
  return softmax_with_temperature(z, temperature);
}

std::size_t sample_index(const Distribution& d, double u) {
  double cum = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] <= 0.0) continue;
    last = i;
    cum += d[i];
    if (u < cum) return i;
  }
  return last;
}

Trajectory sample_trajectory(const PolicyParams& policy, const TaskSpec& task, RngStream& rng,
                             double temperature, int max_len) {
  if (max_len < 1) throw std::invalid_argument("sample_trajectory: max_len must be >= 1");
  Trajectory tr;
  tr.task_id = task.task_id();
  while (static_cast<int>(tr.tokens.size()) < max_len) {
    const Distribution d = next_token_distribution(policy, task.task_id(), tr.tokens, temperature);
    const std::size_t tok = sample_index(d, rng.uniform());
    tr.behavior_logps.push_back(std::log(d[tok]));
    tr.token_entropies.push_back(token_entropy(d));
    tr.tokens.push_back(static_cast<Token>(tok));
    if (static_cast<Token>(tok) == kEos) {
      tr.terminated = true;
      break;
    }
  }
  const RewardOutcome outcome = evaluate_answer(task, tr.tokens, tr.terminated);
  tr.reward = outcome.reward;
  tr.mode = outcome.mode;
  return tr;
}

namespace {

void check_tokens(const PolicyParams& policy, const Trajectory& tr) {
  for (Token t : tr.tokens) {
    if (t < 0 || t >= policy.vocab()) throw std::invalid_argument("trajectory: token outside vocabulary");
  }
}

}  // namespace

double trajectory_log_prob(const PolicyParams& policy, const Trajectory& trajectory, double temperature) {
  check_tokens(policy, trajectory);
  double total = 0.0;
  std::span<const Token> toks(trajectory.tokens);
  for (std::size_t t = 0; t < toks.size(); ++t) {
    const Distribution d = next_token_distribution(policy, trajectory.task_id, toks.first(t), temperature);
    total += std::log(d[static_cast<std::size_t>(toks[t])]);
  }
  return total;
}

Gradient trajectory_log_prob_gradient(const PolicyParams& policy, const Trajectory& trajectory,
                                      double temperature) {
  check_tokens(policy, trajectory);
  Gradient g = policy.zero_gradient();
  std::span<const Token> toks(trajectory.tokens);
  for (std::size_t t = 0; t < toks.size(); ++t) {
    const Distribution d = next_token_distribution(policy, trajectory.task_id, toks.first(t), temperature);
    const auto dz = log_prob_logit_grad(d, static_cast<std::size_t>(toks[t]), temperature);
    policy.accumulate(trajectory.task_id, toks.first(t), dz, 1.0, g);
  }
  return g;
}

PolicyParams sgd_step(PolicyParams params, const Gradient& gradient, double rate, Direction direction) {
  if (!(rate >= 0.0) || !std::isfinite(rate)) throw std::invalid_argument("sgd: rate must be finite and >= 0");
  if (direction == Direction::kAscent) {
    params.add_scaled(gradient, rate);
  } else {
    params.add_scaled(gradient, -rate);
  }
  return params;
}

PolicyParams sync_params(const PolicyParams& source) { return PolicyParams(source); }

namespace {

void enumerate_rec(const PolicyParams& policy, const TaskSpec& task, int max_len, double temperature,
                   std::size_t budget, Trajectory& cur, double prob,
                   std::vector<std::pair<Trajectory, double>>& out) {
  const bool done = (!cur.tokens.empty() && cur.tokens.back() == kEos) ||
                    static_cast<int>(cur.tokens.size()) >= max_len;
  if (done) {
    if (out.size() >= budget) throw ResourceError("enumerate_distribution: leaf budget exceeded");
    Trajectory leaf = cur;
    leaf.terminated = !leaf.tokens.empty() && leaf.tokens.back() == kEos;
    const RewardOutcome r = evaluate_answer(task, leaf.tokens, leaf.terminated);
    leaf.reward = r.reward;
    leaf.mode = r.mode;
    out.emplace_back(std::move(leaf), prob);
    return;
  }
  const Distribution d = next_token_distribution(policy, task.task_id(), cur.tokens, temperature);
  const double h = token_entropy(d);
  for (std::size_t tok = 0; tok < d.size(); ++tok) {
    if (d[tok] <= 0.0) continue;
    cur.tokens.push_back(static_cast<Token>(tok));
    cur.behavior_logps.push_back(std::log(d[tok]));
    cur.token_entropies.push_back(h);
    enumerate_rec(policy, task, max_len, temperature, budget, cur, prob * d[tok], out);
    cur.tokens.pop_back();
    cur.behavior_logps.pop_back();
    cur.token_entropies.pop_back();
  }
}

}  // namespace

std::vector<std::pair<Trajectory, double>> enumerate_distribution(const PolicyParams& policy,
                                                                  const TaskSpec& task, int max_len,
                                                                  double temperature, std::size_t leaf_budget) {
  if (max_len < 1) throw std::invalid_argument("enumerate_distribution: max_len must be >= 1");
  // Upper bound on leaves: sum of V^l over lengths, checked up front.
  double bound = 0.0;
  double level = 1.0;
  for (int l = 1; l <= max_len; ++l) {
    level *= policy.vocab();
    bound += level;
  }
  if (bound > 1e9) throw ResourceError("enumerate_distribution: tree too large to enumerate");
  std::vector<std::pair<Trajectory, double>> out;
  Trajectory cur;
  cur.task_id = task.task_id();
  enumerate_rec(policy, task, max_len, temperature, leaf_budget, cur, 1.0, out);
  return out;
}

Gradient finite_difference_gradient(const PolicyParams& policy,
                                    const std::function<double(const PolicyParams&)>& loss, double step,
                                    const Gradient& layout) {
  if (!(step > 0.0)) throw std::invalid_argument("finite differences: step must be > 0");
  Gradient out;
  PolicyParams probe = policy;
  if (auto* n = probe.as_neural()) {
    out.dense.assign(n->num_params(), 0.0);
    auto p = n->params();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + step;
      const double up = loss(probe);
      p[i] = saved - step;
      const double down = loss(probe);
      p[i] = saved;
      out.dense[i] = (up - down) / (2.0 * step);
    }
    return out;
  }
  std::vector<ContextKey> keys;
  for (const auto& [key, _] : layout.sparse) keys.push_back(key);
  for (const auto& [key, _] : policy.as_tabular()->table()) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  auto* t = probe.as_tabular();
  for (const ContextKey& key : keys) {
    std::vector<double> g(static_cast<std::size_t>(t->vocab()), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double saved = t->entry(key)[i];
      t->entry(key)[i] = saved + step;
      const double up = loss(probe);
      t->entry(key)[i] = saved - step;
      const double down = loss(probe);
      t->entry(key)[i] = saved;
      g[i] = (up - down) / (2.0 * step);
    }
    out.sparse.emplace(key, std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("checkpoint: malformed number '" + s + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(const std::string& s) {
  Int v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("checkpoint: malformed integer '" + s + "'");
  }
  return v;
}

std::vector<std::string> split_words(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

}  // namespace

std::string serialize_checkpoint(const PolicyParams& policy) {
  std::ostringstream out;
  out << "eepo-checkpoint " << kCheckpointVersion << ' ' << to_string(policy.kind()) << ' ' << policy.vocab()
      << ' ' << policy.max_len();
  if (const auto* n = policy.as_neural()) {
    out << ' ' << n->shape().window << ' ' << n->shape().d_emb << ' ' << n->shape().d_hidden;
  }
  out << '\n';
  for (const auto& [id, prompt] : policy.tasks()) {
    out << "task " << id << ' ' << prompt.size();
    for (Token t : prompt) out << ' ' << t;
    out << '\n';
  }
  if (const auto* t = policy.as_tabular()) {
    for (const auto& [key, values] : t->table()) {
      out << "entry " << key.task_id << ' ' << key.prefix.size();
      for (Token tok : key.prefix) out << ' ' << tok;
      for (double v : values) out << ' ' << format_double(v);
      out << '\n';
    }
  } else {
    const auto p = policy.as_neural()->params();
    for (std::size_t i = 0; i < p.size(); ++i) out << "param " << i << ' ' << format_double(p[i]) << '\n';
  }
  return out.str();
}

PolicyParams parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("checkpoint: empty input");
  const auto head = split_words(line);
  if (head.size() < 5 || head[0] != "eepo-checkpoint") throw std::invalid_argument("checkpoint: bad header");
  if (parse_int<int>(head[1]) != kCheckpointVersion) throw std::invalid_argument("checkpoint: unsupported version");
  const PolicyKind kind = policy_kind_from_string(head[2]);
  const int vocab = parse_int<int>(head[3]);
  const int max_len = parse_int<int>(head[4]);
  std::optional<PolicyParams> policy;
  if (kind == PolicyKind::kTabular) {
    if (head.size() != 5) throw std::invalid_argument("checkpoint: bad tabular header");
    policy.emplace(TabularPolicy(vocab), max_len);
  } else {
    if (head.size() != 8) throw std::invalid_argument("checkpoint: bad neural header");
    NeuralShape shape{vocab, parse_int<int>(head[5]), parse_int<int>(head[6]), parse_int<int>(head[7])};
    policy.emplace(WindowNeuralPolicy(shape), max_len);
  }
  std::size_t params_seen = 0;
  while (std::getline(in, line)) {
    const auto w = split_words(line);
    if (w.empty()) continue;
    if (w[0] == "task") {
      if (w.size() < 3) throw std::invalid_argument("checkpoint: bad task record");
      const auto n = parse_int<std::size_t>(w[2]);
      if (w.size() != 3 + n) throw std::invalid_argument("checkpoint: bad task record");
      TokenSeq prompt;
      for (std::size_t i = 0; i < n; ++i) prompt.push_back(parse_int<Token>(w[3 + i]));
      policy->register_task(parse_int<int>(w[1]), std::move(prompt));
    } else if (w[0] == "entry" && kind == PolicyKind::kTabular) {
      if (w.size() < 3) throw std::invalid_argument("checkpoint: bad entry record");
      const auto n = parse_int<std::size_t>(w[2]);
      if (w.size() != 3 + n + static_cast<std::size_t>(vocab)) throw std::invalid_argument("checkpoint: bad entry record");
      ContextKey key{parse_int<int>(w[1]), {}};
      for (std::size_t i = 0; i < n; ++i) key.prefix.push_back(parse_int<Token>(w[3 + i]));
      std::vector<double>& e = policy->as_tabular()->entry(key);
      for (std::size_t i = 0; i < static_cast<std::size_t>(vocab); ++i) e[i] = parse_double(w[3 + n + i]);
    } else if (w[0] == "param" && kind == PolicyKind::kNeural) {
      if (w.size() != 3) throw std::invalid_argument("checkpoint: bad param record");
      const auto idx = parse_int<std::size_t>(w[1]);
      auto p = policy->as_neural()->params();
      if (idx >= p.size()) throw std::invalid_argument("checkpoint: parameter index out of range");
      p[idx] = parse_double(w[2]);
      ++params_seen;
    } else {
      throw std::invalid_argument("checkpoint: unexpected record '" + w[0] + "'");
    }
  }
  if (kind == PolicyKind::kNeural && params_seen != policy->as_neural()->num_params()) {
    throw std::invalid_argument("checkpoint: parameter count mismatch");
  }
  return std::move(*policy);
}

void save_checkpoint(const PolicyParams& policy, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << serialize_checkpoint(policy);
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

namespace {

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  void real(double v) { bytes(std::bit_cast<std::uint64_t>(v)); }
  void integer(std::int64_t v) { bytes(static_cast<std::uint64_t>(v)); }
};

}  // namespace

std::uint64_t parameter_hash(const PolicyParams& policy) {
  Fnv1a f;
  f.integer(static_cast<int>(policy.kind()));
  f.integer(policy.vocab());
  f.integer(policy.max_len());
  for (const auto& [id, prompt] : policy.tasks()) {
    f.integer(id);
    f.integer(static_cast<std::int64_t>(prompt.size()));
    for (Token t : prompt) f.integer(t);
  }
  if (const auto* t = policy.as_tabular()) {
    for (const auto& [key, values] : t->table()) {
      if (all_zero(values)) continue;
      f.integer(key.task_id);
      f.integer(static_cast<std::int64_t>(key.prefix.size()));
      for (Token tok : key.prefix) f.integer(tok);
      for (double v : values) f.real(v);
    }
  } else {
    for (double v : policy.as_neural()->params()) f.real(v);
  }
  return f.h;
}

}  // namespace eepo
