#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "eepo/core_math.hpp"
#include "oracles.hpp"

using namespace eepo;

TEST_CASE("softmax examples") {
  const std::vector<double> zeros(4, 0.0);
  auto d = softmax_with_temperature(zeros, 1.0);
  for (double p : d.probs()) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));

  auto d1 = softmax_with_temperature(std::vector<double>{1.0, 0.0}, 1.0);
  CHECK(d1[0] == doctest::Approx(0.731059).epsilon(1e-6));
  CHECK(d1[1] == doctest::Approx(0.268941).epsilon(1e-6));
  auto o1 = oracle::softmax({1.0, 0.0});
  CHECK(std::abs(d1[0] - static_cast<double>(o1[0])) < 1e-15);

  auto d2 = softmax_with_temperature(std::vector<double>{1.0, 0.0}, 2.0);
  CHECK(d2[0] == doctest::Approx(0.622459).epsilon(1e-6));
  CHECK(d2[1] == doctest::Approx(0.377541).epsilon(1e-6));
  auto o2 = oracle::softmax({1.0, 0.0}, 2.0L);
  CHECK(std::abs(d2[1] - static_cast<double>(o2[1])) < 1e-15);
}

TEST_CASE("softmax errors and stability") {
  CHECK_THROWS_AS(softmax_with_temperature(std::vector<double>{0.0, 1.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(softmax_with_temperature(std::vector<double>{0.0, 1.0}, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(softmax_with_temperature(std::vector<double>{0.0, NAN}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(softmax_with_temperature(std::vector<double>{0.0, INFINITY}, 1.0), std::invalid_argument);
  auto big = softmax_with_temperature(std::vector<double>{1000.0, 999.0}, 1.0);
  CHECK(big[0] == doctest::Approx(0.731059).epsilon(1e-6));
}

TEST_CASE("softmax invariants on random logits") {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(2 + trial % 7);
    for (double& v : z) v = n(gen);
    double prev_h = -1.0;
    std::size_t arg = 0;
    for (std::size_t i = 1; i < z.size(); ++i) {
      if (z[i] > z[arg]) arg = i;
    }
    for (double t : {0.25, 0.5, 1.0, 2.0, 4.0}) {
      auto d = softmax_with_temperature(z, t);
      double s = 0;
      std::size_t am = 0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(d[i] >= 0.0);
        s += d[i];
        if (d[i] > d[am]) am = i;
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
      CHECK(am == arg);
      const double h = token_entropy(d);
      CHECK(h >= prev_h - 1e-12);
      prev_h = h;
    }
  }
}

TEST_CASE("token entropy examples") {
  CHECK(token_entropy(softmax_with_temperature(std::vector<double>(4, 0.0), 1.0)) ==
        doctest::Approx(1.386294).epsilon(1e-6));
  CHECK(token_entropy(oracle::dist({0, 1, 0, 0})) == 0.0);
  CHECK(token_entropy(oracle::dist({0.5, 0.5, 0, 0})) == doctest::Approx(0.693147).epsilon(1e-6));
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> z(5);
    for (double& v : z) v = u(gen);
    const double h = token_entropy(softmax_with_temperature(z, 1.0));
    CHECK(std::abs(h - static_cast<double>(oracle::entropy(oracle::softmax(z)))) < 1e-13);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(5.0) + 1e-12);
  }
}

TEST_CASE("gate examples") {
  GateState g(3, 0.3);
  CHECK_FALSE(g.update(0.5));
  CHECK_FALSE(g.update(0.4));
  CHECK_FALSE(g.update(0.2));
  CHECK(g.mean() == doctest::Approx(0.366667).epsilon(1e-6));
  CHECK(g.warm());

  GateState h(3, 0.3);
  h.update(0.25);
  h.update(0.25);
  CHECK(h.update(0.25));
  CHECK(h.mean() == doctest::Approx(0.25));

  GateState cold(3, 0.3);
  CHECK_FALSE(cold.update(0.0));
  CHECK_FALSE(cold.warm());

  CHECK_THROWS_AS(cold.update(-0.1), std::invalid_argument);
}

TEST_CASE("gate keeps exactly the last m entries") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 0.6);
  for (std::size_t m : {1u, 2u, 3u, 5u}) {
    GateState g(m, 0.3);
    std::vector<double> seen;
    for (int i = 0; i < 40; ++i) {
      const double e = u(gen);
      seen.push_back(e);
      const bool active = g.update(e);
      CHECK(g.history().size() == std::min<std::size_t>(seen.size(), m));
      long double s = 0;
      for (std::size_t j = seen.size() - g.history().size(); j < seen.size(); ++j) s += seen[j];
      const double mean = static_cast<double>(s / g.history().size());
      CHECK(g.mean() == doctest::Approx(mean).epsilon(1e-12));
      CHECK(active == (seen.size() >= m && mean < 0.3));
      if (active) CHECK(g.warm());
    }
  }
  GateState never(3, 0.0);
  for (int i = 0; i < 10; ++i) CHECK_FALSE(never.update(0.0));
}

TEST_CASE("group advantage examples") {
  auto a = group_advantages(std::vector<double>{1, 0, 0, 0});
  CHECK_FALSE(a.degenerate);
  CHECK(a.advantages[0] == doctest::Approx(1.732051).epsilon(1e-6));
  for (int i = 1; i < 4; ++i) CHECK(a.advantages[i] == doctest::Approx(-0.577350).epsilon(1e-6));

  auto b = group_advantages(std::vector<double>{1, 1, 1, 1});
  CHECK(b.degenerate);
  for (double x : b.advantages) CHECK(x == 0.0);

  auto c = group_advantages(std::vector<double>{1, 1, 0, 0});
  CHECK(c.advantages == std::vector<double>{1, 1, -1, -1});

  CHECK_THROWS_AS(group_advantages(std::vector<double>{1}), std::invalid_argument);
}

TEST_CASE("group advantage properties") {
  std::mt19937_64 gen(5);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> r(2 + trial % 15);
    for (double& x : r) x = coin(gen) ? 1.0 : 0.0;
    auto a = group_advantages(r);
    if (oracle::population_std(r) < 1e-8) {
      CHECK(a.degenerate);
      for (double x : a.advantages) CHECK(x == 0.0);
      continue;
    }
    CHECK_FALSE(a.degenerate);
    CHECK(std::abs(static_cast<double>(oracle::mean(a.advantages))) < 1e-9);
    CHECK(std::abs(static_cast<double>(oracle::population_std(a.advantages)) - 1.0) < 1e-9);
    const double m = static_cast<double>(oracle::mean(r));
    const double sd = static_cast<double>(oracle::population_std(r));
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(a.advantages[i] == doctest::Approx((r[i] - m) / sd));

    std::vector<double> shifted = r;
    for (double& x : shifted) x += 3.5;
    auto s = group_advantages(shifted);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(std::abs(s.advantages[i] - a.advantages[i]) < 1e-9);

    std::vector<double> reflected = r;
    for (double& x : reflected) x = 2 * m - x;
    auto f = group_advantages(reflected);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(std::abs(f.advantages[i] + a.advantages[i]) < 1e-9);
  }
}

TEST_CASE("importance ratio examples") {
  CHECK(importance_ratio(-1.2, -1.2) == 1.0);
  CHECK(importance_ratio(std::log(2.0) - 0.7, -0.7) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(importance_ratio(-std::log(4.0), 0.0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK_THROWS_AS(importance_ratio(NAN, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(importance_ratio(0.0, -INFINITY), std::invalid_argument);
}

TEST_CASE("clipped surrogate examples and bound") {
  for (double a : {-2.0, -0.5, 0.0, 0.3, 1.7}) CHECK(clipped_surrogate_term(1.0, a, 0.2, 0.2) == a);
  CHECK(clipped_surrogate_term(1.5, 1.0, 0.2, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_surrogate_term(0.5, -1.0, 0.2, 0.2) == doctest::Approx(-0.8));
  CHECK_THROWS_AS(clipped_surrogate_term(-0.1, 1.0, 0.2, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(clipped_surrogate_term(1.0, 1.0, 1.0, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(clipped_surrogate_term(1.0, 1.0, 0.2, 0.0), std::invalid_argument);

  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> ur(0.0, 3.0);
  std::uniform_real_distribution<double> ua(-3.0, 3.0);
  std::uniform_real_distribution<double> ue(0.01, 0.9);
  for (int i = 0; i < 2000; ++i) {
    const double r = ur(gen), a = ua(gen), el = ue(gen), eh = ue(gen);
    const double v = clipped_surrogate_term(r, a, el, eh);
    CHECK(v <= r * a + 1e-15);
    const double clipped = std::clamp(r, 1 - el, 1 + eh) * a;
    CHECK(v == std::min(r * a, clipped));
    // The gradient flag agrees with a one-sided finite difference in r.
    const double h = 1e-7;
    const double slope = (clipped_surrogate_term(r + h, a, el, eh) - v) / h;
    const bool passes = surrogate_passes_gradient(r, a, el, eh);
    if (std::abs(r - (1 - el)) > 1e-5 && std::abs(r - (1 + eh)) > 1e-5 && a != 0.0) {
      CHECK(passes == (std::abs(slope - a) < 1e-6));
    }
  }
}

TEST_CASE("KL examples and properties") {
  CHECK(kl_divergence_exact(oracle::dist({0.75, 0.25}), oracle::dist({0.5, 0.5})) ==
        doctest::Approx(0.130812).epsilon(1e-6));
  CHECK(kl_divergence_exact(oracle::dist({0.5, 0.5}), oracle::dist({0.75, 0.25})) ==
        doctest::Approx(0.143841).epsilon(1e-6));
  CHECK(kl_divergence_exact(oracle::dist({0.3, 0.7}), oracle::dist({0.3, 0.7})) == 0.0);
  CHECK_THROWS_AS(kl_divergence_exact(oracle::dist({0.5, 0.5}), oracle::dist({1.0, 0.0})), std::invalid_argument);
  CHECK_THROWS_AS(kl_divergence_exact(oracle::dist({0.5, 0.5}), oracle::dist({0.2, 0.3, 0.5})),
                  std::invalid_argument);

  std::mt19937_64 gen(21);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(4), b(4);
    for (double& v : a) v = n(gen);
    for (double& v : b) v = n(gen);
    auto p = softmax_with_temperature(a, 1.0);
    auto q = softmax_with_temperature(b, 1.0);
    const double k = kl_divergence_exact(p, q);
    CHECK(k >= 0.0);
    CHECK(std::abs(k - static_cast<double>(oracle::kl(oracle::softmax(a), oracle::softmax(b)))) < 1e-12);
    CHECK(kl_divergence_exact(p, p) == doctest::Approx(0.0).epsilon(1e-15));
  }
}

TEST_CASE("NLL and complementary loss examples") {
  CHECK(nll_token_loss(1.0) == 0.0);
  CHECK(nll_token_loss(0.5) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(nll_token_loss(0.01) == doctest::Approx(4.605170).epsilon(1e-6));
  CHECK_THROWS_AS(nll_token_loss(0.0), std::invalid_argument);
  CHECK_THROWS_AS(nll_token_loss(-0.5), std::invalid_argument);

  CHECK(complementary_token_loss(0.5, 1e-6, 1e-2) == doctest::Approx(-0.693147).epsilon(1e-6));
  CHECK(complementary_token_loss(0.999, 1e-6, 1e-2) == doctest::Approx(std::log(0.01)).epsilon(1e-12));
  CHECK(complementary_token_loss(0.999, 1e-6, 1e-2) == doctest::Approx(-4.605170).epsilon(1e-6));
  CHECK(complementary_token_loss(1e-9, 1e-6, 1e-2) == doctest::Approx(-1.0000005e-6).epsilon(1e-6));
  CHECK_THROWS_AS(complementary_token_loss(0.5, 0.0, 1e-2), std::invalid_argument);
  CHECK_THROWS_AS(complementary_token_loss(0.5, 0.6, 0.5), std::invalid_argument);
  for (double p = 0.0; p <= 1.0; p += 0.01) {
    CHECK(complementary_token_loss(p, 1e-6, 1e-2) <= std::log1p(-1e-6));
  }
}

TEST_CASE("complementary loss emphasises dominant tokens") {
  const double h = 1e-6;
  double prev_c = 0.0;
  double prev_n = INFINITY;
  for (int i = 1; i <= 9; ++i) {
    const double p = 0.1 * i;
    const double dc = (complementary_token_loss(p + h, 1e-6, 1e-2) - complementary_token_loss(p - h, 1e-6, 1e-2)) / (2 * h);
    const double dn = (nll_token_loss(p + h) - nll_token_loss(p - h)) / (2 * h);
    CHECK(std::abs(dc) == doctest::Approx(1.0 / (1.0 - p)).epsilon(1e-6));
    CHECK(std::abs(dn) == doctest::Approx(1.0 / p).epsilon(1e-6));
    CHECK(std::abs(dc) > prev_c);
    CHECK(std::abs(dn) < prev_n);
    prev_c = std::abs(dc);
    prev_n = std::abs(dn);
    CHECK(complementary_token_loss_dp(p, 1e-6, 1e-2) == doctest::Approx(dc).epsilon(1e-6));
  }
  CHECK(complementary_token_loss_dp(0.995, 1e-6, 1e-2) == 0.0);
  CHECK(complementary_token_loss_dp(1e-9, 1e-6, 1e-2) == 0.0);
}

TEST_CASE("logit gradients match finite differences") {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> n(0.0, 1.5);
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    const double t = trial % 3 == 0 ? 1.0 : 0.5 + trial % 4 * 0.5;
    std::vector<double> z(5), r(5);
    for (double& v : z) v = n(gen);
    for (double& v : r) v = n(gen);
    const auto ref = softmax_with_temperature(r, 1.0);
    const auto d = softmax_with_temperature(z, t);
    const std::size_t tok = static_cast<std::size_t>(trial) % 5;
    const auto glp = log_prob_logit_grad(d, tok, t);
    const auto gh = entropy_logit_grad(d, t);
    const auto gk = kl_logit_grad(d, ref, t);
    for (std::size_t j = 0; j < z.size(); ++j) {
      auto zp = z, zm = z;
      zp[j] += h;
      zm[j] -= h;
      const auto dp = softmax_with_temperature(zp, t);
      const auto dm = softmax_with_temperature(zm, t);
      CHECK(oracle::rel_err(glp[j], (std::log(dp[tok]) - std::log(dm[tok])) / (2 * h)) < 1e-7);
      CHECK(oracle::rel_err(gh[j], (token_entropy(dp) - token_entropy(dm)) / (2 * h)) < 1e-7);
      CHECK(oracle::rel_err(gk[j], (kl_divergence_exact(dp, ref) - kl_divergence_exact(dm, ref)) / (2 * h)) < 1e-7);
    }
  }
}
