#include <cmath>
#include <random>
#include <sstream>

#include "cmlo/bounds.hpp"
#include "cmlo/envs.hpp"
#include "cmlo/error.hpp"
#include "doctest.h"

using namespace cmlo;
using namespace cmlo::bounds;

TEST_CASE("kappa arithmetic") {
  CHECK(kappa(0.9, 1.0) == doctest::Approx(180.0).epsilon(1e-12));
  CHECK(kappa(0.99, 1.0) == doctest::Approx(19800.0).epsilon(1e-12));
  CHECK(kappa(0.9, 0.0) == 0.0);
  CHECK_THROWS_AS(kappa(1.0, 1.0), Error);
}

TEST_CASE("gap bound on degenerate arguments") {
  BoundInputs in;
  in.kappa = 180.0;
  in.eps_m1_pi1 = in.eps_m2_pi2 = 0.04;
  in.ceiling_v1 = in.ceiling_v2 = 3.0;
  CHECK(gap_bound(in).bound_c == 0.0);

  BoundInputs b;
  b.kappa = 180.0;
  b.ceiling_v1 = 1.0;
  b.ceiling_v2 = 2.0;
  b.eps_opt = 0.1;
  CHECK(gap_bound(b).bound_c == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(gap_bound(b).conservative_c == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("ceiling gap bound") {
  const auto m = env::random_mdp(5, 2, 1, 1.0, 0.9);
  const double L = m.reward_bound / (1.0 - m.gamma);
  CHECK(ceiling_gap_bound(m, m, L, m.gamma) == 0.0);

  mdp::TabularMdp one;
  one.n_states = 1;
  one.n_actions = 2;
  one.transition = {1.0, 1.0};
  one.reward = {0.5, -0.5};
  one.reward_bound = 1.0;
  auto other = one;
  other.reward = {0.1, 0.2};
  CHECK(ceiling_gap_bound(one, other, 10.0, 0.9) == 0.0);

  CHECK_THROWS_AS(ceiling_gap_bound(m, m, 0.5 * L, m.gamma), Error);
}

TEST_CASE("ceiling gap bound holds on random pairs") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto m1 = env::random_mdp(6, 3, seed, 0.7, 0.9);
    auto m2 = env::random_mdp(6, 3, seed + 5000, 0.7, 0.9);
    m2.reward = m1.reward;
    m2.reward_bound = m1.reward_bound;
    const auto ctx = mdp::EvalContext::uniform(6);
    const double v1 = mdp::value_iteration(m1, 1e-12, ctx).table_return;
    const double v2 = mdp::value_iteration(m2, 1e-12, ctx).table_return;
    const double L = m1.reward_bound / (1.0 - m1.gamma);
    CHECK(std::abs(v2 - v1) <= ceiling_gap_bound(m1, m2, L, 0.9) + kExactTol);
  }
}

TEST_CASE("refined bound constraint") {
  const auto m1 = env::random_mdp(5, 2, 3, 1.0, 0.9);
  BoundInputs in;
  in.kappa = kappa(0.9, 1.0);
  in.lipschitz = 10.0;
  in.sigma = 0.37;
  const auto same = refined_gap_bound(in, m1, m1);
  CHECK(same.constraint_lhs == 0.0);
  CHECK(same.constraint_satisfied);

  const auto m2 = env::random_mdp(5, 2, 4, 1.0, 0.9);
  in.sigma = 0.0;
  CHECK_FALSE(refined_gap_bound(in, m1, m2).constraint_satisfied);

  double brute = 0.0;
  for (int s = 0; s < 5; ++s)
    for (int a = 0; a < 2; ++a) {
      double l1 = 0.0;
      for (int t = 0; t < 5; ++t) l1 += std::abs(m1.p(s, a, t) - m2.p(s, a, t));
      brute = std::max(brute, 0.5 * l1);
    }
  in.sigma = brute;
  const auto rep = refined_gap_bound(in, m1, m2);
  CHECK(rep.constraint_lhs == doctest::Approx(brute).epsilon(1e-14));
  CHECK(rep.constraint_satisfied);
}

TEST_CASE("requirement R1") {
  BoundInputs in;
  in.gamma = 0.9;
  in.reward_bound = 1.0;
  in.kappa = kappa(0.9, 1.0);
  in.lipschitz = 10.0;
  in.eps_m1_pi1 = 0.2;
  in.sigma = 0.01;
  in.eps_opt = 0.1;
  CHECK(check_r1(in, 0.0));
  CHECK_FALSE(check_r1(in, in.eps_m1_pi1));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    in.eps_m1_pi1 = u(rng);
    in.sigma = 0.1 * u(rng);
    in.eps_opt = u(rng);
    const double e2 = u(rng);
    // ||.||_1 form: 2 e2 <= 2 e1 - (1-g) L / R * 2 sigma - 2 eps_opt / kappa
    const double rhs = 2 * in.eps_m1_pi1 - 0.1 * 10.0 * 2 * in.sigma - 2 * in.eps_opt / in.kappa;
    CHECK(check_r1(in, e2) == (2 * e2 <= rhs));
  }
}

TEST_CASE("corollary interval") {
  IntervalQuery q;
  q.delta_m1 = 0.1;
  q.reward_bound = 1.0;
  q.gamma = 0.9;
  q.lipschitz = 10.0;
  q.vol_s = 4;
  q.xi = 0.05;
  q.n_existing = 100;
  CHECK(corollary_interval_k(q) == 1027);

  const double total = 2.0 / (0.1 * 0.1) * std::log(14.0 / 0.05);
  q.n_existing = static_cast<std::int64_t>(std::ceil(total));
  CHECK(corollary_interval_k(q) == 0);
  q.n_existing -= 1;
  CHECK(corollary_interval_k(q) == 1);

  q.n_existing = 10;
  std::int64_t previous = -1;
  for (double delta = 0.9; delta >= 0.05; delta -= 0.05) {
    q.delta_m1 = delta;
    const auto k = corollary_interval_k(q);
    CHECK(k > previous);
    previous = k;
  }

  q.delta_m1 = 0.1;
  q.sigma = 0.1;
  CHECK_THROWS_AS(corollary_interval_k(q), Error);
}

TEST_CASE("l1 concentration bound") {
  CHECK(l1_concentration_bound(50, 0.2, 2) == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-12));
  CHECK(l1_concentration_bound(50, 0.2, 2) == doctest::Approx(0.73576).epsilon(1e-5));
  CHECK(l1_concentration_bound(50, 100.0, 4) < 1e-300);
  CHECK(l1_concentration_bound(200, 0.3, 4) == doctest::Approx(14.0 * std::exp(-9.0)).epsilon(1e-12));
  CHECK(l1_concentration_bound(200, 0.3, 4) == doctest::Approx(1.728e-3).epsilon(1e-3));
}

TEST_CASE("concentration Monte Carlo stays under the bound") {
  const auto c = concentration_check(4, 200, 0.3, 100000, 17);
  CHECK(c.ok);
  CHECK(c.frequency <= c.bound);
  CHECK(c.draws == 100000);
}

TEST_CASE("gap campaign degenerate cases") {
  CampaignConfig cfg;
  CHECK(verify_gap_campaign(cfg).empty());

  cfg.n_trials = 1;
  cfg.extra_samples = 0;
  const auto trials = verify_gap_campaign(cfg);
  REQUIRE(trials.size() == 1);
  const auto& t = trials.front();
  CHECK(t.report.actual_gap == 0.0);
  CHECK(t.report.bound_c == doctest::Approx(-t.inputs.eps_opt).epsilon(1e-12));
  CHECK(t.report.bound_c <= 0.0);
  CHECK(t.hard_pass());
}

TEST_CASE("gap campaign hard invariants on a small sweep") {
  CampaignConfig cfg;
  cfg.n_trials = 100;
  cfg.seed = 5;
  const auto trials = verify_gap_campaign(cfg, 2);
  REQUIRE(trials.size() == 100);
  for (const auto& t : trials) {
    CHECK(t.conservative_ok);
    CHECK(t.report.actual_gap >= t.report.conservative_c - kExactTol);
    CHECK(t.ceiling_ok);
    CHECK(t.sim_m1.ok);
    CHECK(t.sim_m2.ok);
  }
  // Same seed, different worker count: identical results.
  const auto again = verify_gap_campaign(cfg, 1);
  for (std::size_t i = 0; i < trials.size(); ++i)
    CHECK(again[i].report.actual_gap == trials[i].report.actual_gap);

  std::ostringstream csv;
  write_campaign_csv(csv, trials);
  int lines = 0;
  for (char ch : csv.str()) lines += ch == '\n';
  CHECK(lines == 101);
}

TEST_CASE("simulation gap on the tight fixture") {
  const auto inst = tight_simulation_instance(0.9, 1.0, 0.1);
  const double k = kappa(0.9, 1.0);
  const auto check = simulation_gap_check(inst.truth, inst.model, inst.policy, inst.ctx, k);
  CHECK(check.ok);
  CHECK(check.gap == doctest::Approx(k * check.eps).epsilon(1e-9));
  const auto sabotaged = simulation_gap_check(inst.truth, inst.model, inst.policy, inst.ctx, k / 2);
  CHECK_FALSE(sabotaged.ok);
}

TEST_CASE("simulation gap campaign") {
  const auto trials = simulation_gap_campaign(200, 9);
  REQUIRE(trials.size() == 200);
  for (const auto& t : trials) {
    CHECK(t.check.ok);
    CHECK(t.n_states >= 2);
    CHECK(t.n_states <= 10);
    CHECK(t.n_actions >= 1);
    CHECK(t.n_actions <= 3);
  }
  CHECK(simulation_gap_campaign(0, 1).empty());
}

TEST_CASE("corollary Monte Carlo") {
  CorollaryConfig cfg;
  cfg.instances = 20;
  cfg.repeats = 5;
  cfg.seed = 2;
  const auto rep = corollary_check(cfg);
  CHECK(rep.ok);
  CHECK(rep.trials == 100);
  for (const auto& i : rep.instances) {
    CHECK(i.eps > 0.0);
    CHECK(i.k == corollary_interval_k(i.query));
  }
  cfg.instances = 0;
  CHECK(corollary_check(cfg).ok);
}
