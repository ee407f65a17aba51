#include <cmath>
#include <random>

#include "cmlo/envs.hpp"
#include "cmlo/error.hpp"
#include "cmlo/mdp.hpp"
#include "doctest.h"
#include "support/reference.hpp"

using namespace cmlo;
using mdp::TabularMdp;
using mdp::TabularPolicy;

namespace {

TabularMdp single_state(double r, double gamma) {
  TabularMdp m;
  m.n_states = 1;
  m.n_actions = 1;
  m.transition = {1.0};
  m.reward = {r};
  m.gamma = gamma;
  m.reward_bound = std::abs(r);
  return m;
}

// s0 -> s1, s1 absorbing; r(s0) = 0, r(s1) = 1.
TabularMdp absorbing_chain(double gamma) {
  TabularMdp m;
  m.n_states = 2;
  m.n_actions = 1;
  m.transition = {0.0, 1.0, 0.0, 1.0};
  m.reward = {0.0, 1.0};
  m.gamma = gamma;
  m.reward_bound = 1.0;
  return m;
}

TabularPolicy random_policy(int S, int A, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  TabularPolicy pi;
  pi.n_states = S;
  pi.n_actions = A;
  pi.probs.resize(S * A);
  for (int s = 0; s < S; ++s) {
    double z = 0.0;
    for (int a = 0; a < A; ++a) z += (pi.probs[s * A + a] = u(rng));
    for (int a = 0; a < A; ++a) pi.probs[s * A + a] /= z;
  }
  return pi;
}

}  // namespace

TEST_CASE("empirical model rows are normalized counts") {
  const std::vector<double> reward(4, 0.0);
  std::vector<std::int64_t> counts = {3, 0, 1, 1, 2, 1, 0, 5};
  const auto m = mdp::build_empirical_model(counts, 2, 2, reward, 0.9, 1.0);
  CHECK(m.p(0, 0, 0) == 1.0);
  CHECK(m.p(0, 0, 1) == 0.0);
  CHECK(m.p(1, 0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(m.p(1, 0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("empirical model from 10k draws is close to the generator") {
  TabularMdp truth;
  truth.n_states = 2;
  truth.n_actions = 1;
  truth.transition = {0.2, 0.8, 0.5, 0.5};
  truth.reward = {0.0, 0.0};
  truth.reward_bound = 1.0;
  env::GenerativeSampler sampler(truth, 11);
  const auto m = mdp::build_empirical_model(sampler.draw_all(10000), 2, 1, truth.reward, 0.9, 1.0);
  CHECK(std::abs(m.p(0, 0, 0) - 0.2) < 0.02);
  CHECK(std::abs(m.p(0, 0, 1) - 0.8) < 0.02);
}

TEST_CASE("empirical model reports the first empty pair") {
  std::vector<std::int64_t> counts = {1, 0, 0, 0};
  const std::vector<double> reward(2, 0.0);
  try {
    mdp::build_empirical_model(counts, 2, 1, reward, 0.9, 1.0);
    FAIL("expected MissingSamples");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingSamples);
  }
}

TEST_CASE("policy evaluation on analytic instances") {
  const auto one = single_state(1.0, 0.5);
  const auto ctx1 = mdp::EvalContext::uniform(1);
  const auto ev = mdp::policy_evaluation(one, TabularPolicy::uniform(1, 1), ctx1);
  CHECK(ev.expected_return == doctest::Approx(2.0).epsilon(1e-14));

  const auto chain = absorbing_chain(0.5);
  const auto ev2 = mdp::policy_evaluation(chain, TabularPolicy::uniform(2, 1), mdp::EvalContext::uniform(2));
  CHECK(ev2.table.values[1] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(ev2.table.values[0] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("policy evaluation matches power iteration on random MDPs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = env::random_mdp(8, 3, seed, seed % 2 ? 0.5 : 1.0, 0.9);
    const auto pi = random_policy(8, 3, seed + 100);
    const auto ctx = mdp::EvalContext::uniform(8);
    const auto ev = mdp::policy_evaluation(m, pi, ctx);
    const auto v = ref::power_iteration_values(m, pi);
    for (int s = 0; s < 8; ++s) CHECK(std::abs(ev.table.values[s] - v[s]) <= 1e-9);
    CHECK(std::abs(ev.expected_return - ref::weighted(v, ctx.initial_dist)) <= 1e-9);
  }
}

TEST_CASE("value iteration on analytic instances") {
  TabularMdp zero = env::random_mdp(5, 2, 3, 1.0, 0.9);
  std::fill(zero.reward.begin(), zero.reward.end(), 0.0);
  const auto vi0 = mdp::value_iteration(zero, 1e-10, mdp::EvalContext::uniform(5));
  for (double v : vi0.table.values) CHECK(v == 0.0);

  TabularMdp two;
  two.n_states = 1;
  two.n_actions = 2;
  two.transition = {1.0, 1.0};
  two.reward = {0.0, 1.0};
  two.gamma = 0.9;
  two.reward_bound = 1.0;
  const auto vi = mdp::value_iteration(two, 1e-12, mdp::EvalContext::uniform(1));
  CHECK(vi.table.values[0] == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(vi.greedy_actions[0] == 1);
}

TEST_CASE("value iteration certificate holds under exact evaluation") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto m = env::random_mdp(10, 3, seed, 0.6, 0.9);
    const auto ctx = mdp::EvalContext::uniform(10);
    const auto vi = mdp::value_iteration(m, 1e-3, ctx);
    const double v_star = mdp::value_iteration(m, 1e-13, ctx).table_return;
    const double v_greedy = mdp::policy_evaluation(m, vi.greedy, ctx).expected_return;
    CHECK(v_greedy >= v_star - vi.eps_opt_certificate - 1e-9);
    CHECK(vi.eps_opt_certificate == doctest::Approx(2.0 * 0.9 * 1e-3 / 0.1));
  }
}

TEST_CASE("visitation on analytic instances") {
  const auto one = single_state(1.0, 0.7);
  const auto d1 = mdp::visitation_distribution(one, TabularPolicy::uniform(1, 1), mdp::EvalContext::uniform(1));
  CHECK(d1.at(0, 0) == doctest::Approx(1.0).epsilon(1e-14));

  const auto chain = absorbing_chain(0.5);
  mdp::EvalContext start{{1.0, 0.0}};
  const auto d = mdp::visitation_distribution(chain, TabularPolicy::uniform(2, 1), start);
  CHECK(d.at(0, 0) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(d.at(1, 0) == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("visitation matches Monte-Carlo occupancy within 3 sigma") {
  const auto m = env::random_mdp(5, 2, 42, 0.8, 0.8);
  const auto pi = random_policy(5, 2, 7);
  const auto ctx = mdp::EvalContext::uniform(5);
  const auto d = mdp::visitation_distribution(m, pi, ctx);
  const int n = 200000;
  const auto mc = ref::occupancy_monte_carlo(m, pi, ctx.initial_dist, n, 5);
  for (int s = 0; s < 5; ++s)
    for (int a = 0; a < 2; ++a) {
      const double p = d.at(s, a);
      const double sigma = std::sqrt(p * (1.0 - p) / n);
      CHECK(std::abs(mc[s * 2 + a] - p) <= 3.0 * sigma + 1e-12);
    }
  const auto prop = ref::occupancy_by_propagation(m, pi, ctx.initial_dist);
  for (int i = 0; i < 10; ++i) CHECK(std::abs(prop[i] - d.density[i]) <= 1e-12);
}

TEST_CASE("tv distance") {
  const std::vector<double> p = {0.5, 0.5}, q = {0.25, 0.75};
  CHECK(mdp::tv_distance(p, p) == 0.0);
  const std::vector<double> e0 = {1.0, 0.0}, e1 = {0.0, 1.0};
  CHECK(mdp::tv_distance(e0, e1) == 1.0);
  CHECK(mdp::tv_distance(p, q) == 0.25);
  const std::vector<double> shorter = {1.0};
  CHECK_THROWS_AS(mdp::tv_distance(p, shorter), Error);
}

TEST_CASE("tv distance is half L1 and symmetric") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 2000; ++t) {
    const int n = 2 + t % 9;
    std::vector<double> p(n), q(n);
    double zp = 0.0, zq = 0.0;
    for (int i = 0; i < n; ++i) {
      zp += (p[i] = u(rng));
      zq += (q[i] = u(rng));
    }
    double l1 = 0.0;
    for (int i = 0; i < n; ++i) {
      p[i] /= zp;
      q[i] /= zq;
      l1 += std::abs(p[i] - q[i]);
    }
    CHECK(std::abs(mdp::tv_distance(p, q) - 0.5 * l1) <= 1e-12);
    CHECK(mdp::tv_distance(p, q) == mdp::tv_distance(q, p));
  }
}

TEST_CASE("model inconsistency") {
  const auto m = env::random_mdp(6, 2, 9, 1.0, 0.9);
  const auto pi = random_policy(6, 2, 3);
  const auto ctx = mdp::EvalContext::uniform(6);
  CHECK(mdp::model_inconsistency(m, m, pi, ctx) == 0.0);

  TabularMdp a;
  a.n_states = 2;
  a.n_actions = 1;
  a.transition = {1.0, 0.0, 1.0, 0.0};
  a.reward = {0.0, 0.0};
  a.reward_bound = 1.0;
  auto b = a;
  b.transition = {0.7, 0.3, 0.7, 0.3};
  CHECK(mdp::model_inconsistency(a, b, TabularPolicy::uniform(2, 1), mdp::EvalContext{{1.0, 0.0}}) ==
        doctest::Approx(0.3).epsilon(1e-12));

  const auto other = env::random_mdp(6, 2, 10, 1.0, 0.9);
  const auto occ = ref::occupancy_by_propagation(m, pi, ctx.initial_dist);
  double brute = 0.0;
  for (int s = 0; s < 6; ++s)
    for (int a2 = 0; a2 < 2; ++a2) {
      double l1 = 0.0;
      for (int t = 0; t < 6; ++t) l1 += std::abs(m.p(s, a2, t) - other.p(s, a2, t));
      brute += occ[s * 2 + a2] * 0.5 * l1;
    }
  CHECK(std::abs(mdp::model_inconsistency(m, other, pi, ctx) - brute) <= 1e-12);
}

TEST_CASE("mdp validation and json round trip") {
  auto m = env::random_mdp(4, 2, 1, 1.0, 0.9);
  CHECK_NOTHROW(m.validate());
  const auto back = mdp::mdp_from_json(mdp::to_json(m));
  CHECK(back.transition == m.transition);
  CHECK(back.reward == m.reward);
  m.gamma = 1.0;
  CHECK_THROWS_AS(m.validate(), Error);
}
