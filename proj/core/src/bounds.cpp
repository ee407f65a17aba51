#include "cmlo/bounds.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <mutex>
#include <thread>

#include "cmlo/envs.hpp"
#include "cmlo/error.hpp"
#include "cmlo/random.hpp"

namespace cmlo::bounds {

double kappa(double gamma, double reward_bound) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorKind::InvalidArgument, "gamma must lie in (0,1)");
  if (reward_bound < 0.0) throw Error(ErrorKind::InvalidArgument, "reward bound must be >= 0");
  const double d = 1.0 - gamma;
  return 2.0 * reward_bound * gamma / (d * d);
}

GapBoundResult gap_bound(const BoundInputs& in) {
  const double ceiling = in.ceiling_v2 - in.ceiling_v1;
  return {in.kappa * (in.eps_m1_pi1 - in.eps_m2_pi2) + ceiling - in.eps_opt,
          -in.kappa * (in.eps_m1_pi1 + in.eps_m2_pi2) + ceiling - in.eps_opt};
}

double ceiling_gap_bound(const mdp::TabularMdp& m1, const mdp::TabularMdp& m2, double lipschitz,
                         double gamma) {
  const double floor_l = std::max(m1.reward_bound, m2.reward_bound) / (1.0 - gamma);
  // Relative slack so that L = R/(1-gamma) computed elsewhere is accepted.
  if (lipschitz < floor_l * (1.0 - 1e-12)) {
    throw Error(ErrorKind::InvalidLipschitz, "L must be at least R/(1-gamma)");
  }
  // max L1 = 2 * max TV
  return gamma / (1.0 - gamma) * lipschitz * 2.0 * mdp::max_pair_tv(m1, m2);
}

BoundReport refined_gap_bound(const BoundInputs& in, const mdp::TabularMdp& m1,
                                    const mdp::TabularMdp& m2) {
  BoundReport out;
  out.constraint_lhs = mdp::max_pair_tv(m2, m1);
  out.constraint_satisfied = out.constraint_lhs <= in.sigma;
  const double shift = in.gamma / (1.0 - in.gamma) * in.lipschitz * 2.0 * in.sigma;
  out.bound_c = in.kappa * (in.eps_m1_pi1 - in.eps_m2_pi2) - shift - in.eps_opt;
  out.conservative_c = -in.kappa * (in.eps_m1_pi1 + in.eps_m2_pi2) - shift - in.eps_opt;
  return out;
}

bool check_r1(const BoundInputs& in, double eps_m2_pi2) {
  const double rhs = 2.0 * in.eps_m1_pi1 -
                     (1.0 - in.gamma) * in.lipschitz / in.reward_bound * 2.0 * in.sigma -
                     2.0 / in.kappa * in.eps_opt;
  return 2.0 * eps_m2_pi2 <= rhs;
}

double interval_epsilon(const IntervalQuery& q) {
  const double g = q.gamma;
  const double r = q.reward_bound;
  return q.delta_m1 - (1.0 - g) * q.lipschitz / r * 2.0 * q.sigma -
         (1.0 - g) * (1.0 - g) / (r * g) * q.eps_opt;
}

std::int64_t corollary_interval_k(const IntervalQuery& q) {
  if (q.vol_s < 2) throw Error(ErrorKind::InvalidArgument, "vol_s must be >= 2");
  if (!(q.xi > 0.0 && q.xi < 1.0)) throw Error(ErrorKind::InvalidArgument, "xi must lie in (0,1)");
  const double eps = interval_epsilon(q);
  if (!(eps > 0.0)) {
    throw Error(ErrorKind::InfeasibleInterval,
                "model bias already consumed by the shift and optimization budget");
  }
  const double outcomes = std::exp2(static_cast<double>(q.vol_s)) - 2.0;
  const double total = 2.0 / (eps * eps) * std::log(outcomes / q.xi);
  const double k = std::ceil(total - static_cast<double>(q.n_existing));
  return k <= 0.0 ? 0 : static_cast<std::int64_t>(k);
}

double l1_concentration_bound(std::int64_t m, double eps, int alphabet) {
  if (m < 1 || !(eps > 0.0) || alphabet < 2) {
    throw Error(ErrorKind::InvalidArgument, "need m >= 1, eps > 0, alphabet >= 2");
  }
  const double log_bound = std::log(std::exp2(static_cast<double>(alphabet)) - 2.0) -
                           static_cast<double>(m) * eps * eps / 2.0;
  return std::clamp(std::exp(log_bound), 0.0, 1.0);
}

SimulationGapCheck simulation_gap_check(const mdp::TabularMdp& truth, const mdp::TabularMdp& model,
                                        const mdp::TabularPolicy& policy,
                                        const mdp::EvalContext& ctx, double kappa_value) {
  SimulationGapCheck out;
  const double v_true = mdp::policy_evaluation(truth, policy, ctx).expected_return;
  const double v_model = mdp::policy_evaluation(model, policy, ctx).expected_return;
  out.gap = std::abs(v_true - v_model);
  out.eps = mdp::model_inconsistency(truth, model, policy, ctx);
  out.bound = kappa_value * out.eps;
  out.ok = out.gap <= out.bound + kExactTol;
  return out;
}

TightInstance tight_simulation_instance(double gamma, double reward_bound, double leak) {
  TightInstance inst;
  auto make = [&](double p_leak) {
    mdp::TabularMdp m;
    m.n_states = 2;
    m.n_actions = 1;
    m.gamma = gamma;
    m.reward_bound = reward_bound;
    m.transition = {1.0 - p_leak, p_leak, 0.0, 1.0};
    m.reward = {reward_bound, -reward_bound};
    return m;
  };
  inst.truth = make(leak);
  inst.model = make(0.0);
  inst.policy = mdp::TabularPolicy::uniform(2, 1);
  inst.ctx = mdp::EvalContext{{1.0, 0.0}};
  return inst;
}

TrialReport run_gap_trial(const CampaignConfig& config, int trial) {
  TrialReport t;
  t.trial = trial;
  t.seed = derive_seed(config.seed, static_cast<std::uint64_t>(trial));
  t.n = config.n_samples;
  t.k = config.extra_samples;

  const auto truth =
      env::random_mdp(config.n_states, config.n_actions, t.seed, config.sparsity, config.gamma);
  const auto ctx = mdp::EvalContext::uniform(config.n_states);

  // M2 extends M1's sample stream with k further draws per pair.
  env::GenerativeSampler sampler(truth, t.seed);
  auto counts1 = sampler.draw_all(config.n_samples);
  auto counts2 = counts1;
  if (config.extra_samples > 0) {
    auto extra = sampler.draw_all(config.extra_samples);
    for (std::size_t i = 0; i < counts2.size(); ++i) counts2[i] += extra[i];
  }
  const auto m1 = mdp::build_empirical_model(counts1, truth.n_states, truth.n_actions, truth.reward,
                                             truth.gamma, truth.reward_bound);
  const auto m2 = mdp::build_empirical_model(counts2, truth.n_states, truth.n_actions, truth.reward,
                                             truth.gamma, truth.reward_bound);

  const auto oracle1 = mdp::value_iteration(m1, config.oracle_tol, ctx);
  const auto oracle2 = mdp::value_iteration(m2, config.oracle_tol, ctx);
  const double v_star1 = mdp::value_iteration(m1, config.ceiling_tol, ctx).table_return;
  const double v_star2 = mdp::value_iteration(m2, config.ceiling_tol, ctx).table_return;

  BoundInputs& in = t.inputs;
  in.gamma = truth.gamma;
  in.reward_bound = truth.reward_bound;
  in.kappa = kappa(in.gamma, in.reward_bound) * config.kappa_scale;
  in.lipschitz = config.lipschitz_scale * in.reward_bound / (1.0 - in.gamma);
  in.eps_opt = std::max(oracle1.eps_opt_certificate, oracle2.eps_opt_certificate);
  in.eps_m1_pi1 = mdp::model_inconsistency(truth, m1, oracle1.greedy, ctx);
  in.eps_m2_pi2 = mdp::model_inconsistency(truth, m2, oracle2.greedy, ctx);
  in.ceiling_v1 = v_star1;
  in.ceiling_v2 = v_star2;

  const double real1 = mdp::policy_evaluation(truth, oracle1.greedy, ctx).expected_return;
  const double real2 = mdp::policy_evaluation(truth, oracle2.greedy, ctx).expected_return;
  const double gap = real2 - real1;

  const double shift_lhs = mdp::max_pair_tv(m2, m1);
  in.sigma = config.sigma.value_or(shift_lhs);

  const auto cb = gap_bound(in);
  t.report.bound_c = cb.bound_c;
  t.report.conservative_c = cb.conservative_c;
  t.report.actual_gap = gap;
  t.report.constraint_lhs = shift_lhs;
  t.report.constraint_satisfied = shift_lhs <= in.sigma;

  t.refined = refined_gap_bound(in, m1, m2);
  t.refined.actual_gap = gap;
  t.refined_conservative_c = t.refined.conservative_c;

  t.ceiling_gap = std::abs(v_star2 - v_star1);
  t.ceiling_bound = ceiling_gap_bound(m1, m2, in.lipschitz, in.gamma);

  const double model_gap = oracle1.greedy_return - real1;
  t.equality_residual = std::abs(model_gap - in.kappa * in.eps_m1_pi1);
  t.equality_holds = t.equality_residual <= 1e-6 * in.kappa * in.eps_m1_pi1;

  t.conservative_ok = gap >= cb.conservative_c - kExactTol;
  t.refined_ok = !t.refined.constraint_satisfied || gap >= t.refined_conservative_c - kExactTol;
  t.ceiling_ok = t.ceiling_gap <= t.ceiling_bound + kExactTol;
  t.exact_c_ok = gap >= cb.bound_c - kExactTol;
  t.r1 = check_r1(in, in.eps_m2_pi2);
  t.sim_m1 = simulation_gap_check(truth, m1, oracle1.greedy, ctx, in.kappa);
  t.sim_m2 = simulation_gap_check(truth, m2, oracle2.greedy, ctx, in.kappa);
  return t;
}

std::vector<TrialReport> verify_gap_campaign(const CampaignConfig& config, int workers) {
  std::vector<TrialReport> out(std::max(0, config.n_trials));
  if (out.empty()) return out;
  workers = std::clamp(workers, 1, config.n_trials);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (int i = next++; i < config.n_trials; i = next++) {
      try {
        out[i] = run_gap_trial(config, i);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

void write_campaign_csv(std::ostream& out, const std::vector<TrialReport>& trials) {
  out << "trial,seed,N,k,kappa,eps_opt,eps_m1_pi1,eps_m2_pi2,ceiling_v1,ceiling_v2,sigma,"
         "C,conservative_c,actual_gap,constraint_lhs,constraint_satisfied,refined_c,"
         "refined_conservative_c,ceiling_gap,ceiling_bound,equality_residual,"
         "conservative_ok,refined_ok,ceiling_ok,sim_ok,exact_c_ok,equality_holds,r1\n";
  const auto old_precision = out.precision(17);
  for (const auto& t : trials) {
    const auto& in = t.inputs;
    out << t.trial << ',' << t.seed << ',' << t.n << ',' << t.k << ',' << in.kappa << ','
        << in.eps_opt << ',' << in.eps_m1_pi1 << ',' << in.eps_m2_pi2 << ',' << in.ceiling_v1
        << ',' << in.ceiling_v2 << ',' << in.sigma << ',' << t.report.bound_c << ','
        << t.report.conservative_c << ',' << t.report.actual_gap << ','
        << t.report.constraint_lhs << ',' << t.report.constraint_satisfied << ','
        << t.refined.bound_c << ',' << t.refined_conservative_c << ',' << t.ceiling_gap << ','
        << t.ceiling_bound << ',' << t.equality_residual << ',' << t.conservative_ok << ','
        << t.refined_ok << ',' << t.ceiling_ok << ',' << (t.sim_m1.ok && t.sim_m2.ok) << ','
        << t.exact_c_ok << ',' << t.equality_holds << ',' << t.r1 << '\n';
  }
  out.precision(old_precision);
}

std::vector<SimulationTrial> simulation_gap_campaign(int n_trials, std::uint64_t seed,
                                                     double kappa_scale) {
  if (n_trials < 0) throw Error(ErrorKind::InvalidArgument, "n_trials must be >= 0");
  std::vector<SimulationTrial> out;
  out.reserve(static_cast<std::size_t>(n_trials));
  for (int i = 0; i < n_trials; ++i) {
    const auto s = derive_seed(seed, static_cast<std::uint64_t>(i));
    Rng rng = make_rng(s, 0x5a);
    std::uniform_int_distribution<int> n_s(2, 10), n_a(1, 3);
    SimulationTrial t;
    t.trial = i;
    t.n_states = n_s(rng);
    t.n_actions = n_a(rng);
    t.gamma = 0.5 + 0.49 * uniform01(rng);
    const double sparsity = 0.3 + 0.7 * uniform01(rng);
    const auto truth = env::random_mdp(t.n_states, t.n_actions, s, sparsity, t.gamma);
    auto model = env::random_mdp(t.n_states, t.n_actions, derive_seed(s, 1), 1.0, t.gamma);
    const double mix = uniform01(rng);
    for (std::size_t j = 0; j < model.transition.size(); ++j)
      model.transition[j] = (1.0 - mix) * truth.transition[j] + mix * model.transition[j];
    model.reward = truth.reward;
    model.reward_bound = truth.reward_bound;

    mdp::TabularPolicy pi;
    pi.n_states = t.n_states;
    pi.n_actions = t.n_actions;
    pi.probs.resize(static_cast<std::size_t>(t.n_states * t.n_actions));
    for (int st = 0; st < t.n_states; ++st) {
      double z = 0.0;
      for (int a = 0; a < t.n_actions; ++a) {
        auto& w = pi.probs[static_cast<std::size_t>(st * t.n_actions + a)];
        w = -std::log(1.0 - uniform01(rng));
        z += w;
      }
      for (int a = 0; a < t.n_actions; ++a) pi.probs[static_cast<std::size_t>(st * t.n_actions + a)] /= z;
    }
    mdp::EvalContext ctx;
    ctx.initial_dist.resize(static_cast<std::size_t>(t.n_states));
    double z = 0.0;
    for (auto& w : ctx.initial_dist) z += (w = -std::log(1.0 - uniform01(rng)));
    for (auto& w : ctx.initial_dist) w /= z;

    t.check = simulation_gap_check(truth, model, pi, ctx,
                                   kappa(t.gamma, truth.reward_bound) * kappa_scale);
    out.push_back(t);
  }
  return out;
}

ConcentrationCell concentration_check(int alphabet, std::int64_t m, double eps, std::int64_t draws,
                                      std::uint64_t seed) {
  if (alphabet < 2 || m < 1 || !(eps > 0.0) || draws < 1)
    throw Error(ErrorKind::InvalidArgument, "concentration check needs alphabet >= 2, m >= 1, eps > 0");
  ConcentrationCell c;
  c.alphabet = alphabet;
  c.m = m;
  c.eps = eps;
  c.draws = draws;
  c.bound = l1_concentration_bound(m, eps, alphabet);
  Rng rng = make_rng(seed, 0xc0ffee);
  std::uniform_int_distribution<int> pick(0, alphabet - 1);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(alphabet));
  const double p = 1.0 / alphabet;
  for (std::int64_t d = 0; d < draws; ++d) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::int64_t i = 0; i < m; ++i) ++counts[static_cast<std::size_t>(pick(rng))];
    double l1 = 0.0;
    for (auto n : counts) l1 += std::abs(static_cast<double>(n) / static_cast<double>(m) - p);
    if (l1 > eps) ++c.violations;
  }
  c.frequency = static_cast<double>(c.violations) / static_cast<double>(draws);
  c.std_error = std::sqrt(c.frequency * (1.0 - c.frequency) / static_cast<double>(draws));
  c.ok = c.frequency <= c.bound + 3.0 * c.std_error;
  return c;
}

CorollaryReport corollary_check(const CorollaryConfig& config) {
  if (config.instances < 0 || config.repeats < 1 || !(config.xi > 0.0 && config.xi < 1.0))
    throw Error(ErrorKind::InvalidArgument, "corollary check needs repeats >= 1 and xi in (0, 1)");
  CorollaryReport rep;
  for (int i = 0; i < config.instances; ++i) {
    const auto seed = derive_seed(config.seed, static_cast<std::uint64_t>(i));
    const auto truth =
        env::random_mdp(config.n_states, config.n_actions, seed, config.sparsity, config.gamma);
    env::GenerativeSampler sampler(truth, seed);
    const auto base = mdp::build_empirical_model(sampler.draw_all(config.n_existing), truth.n_states,
                                                 truth.n_actions, truth.reward, truth.gamma,
                                                 truth.reward_bound);
    const double delta = 2.0 * mdp::max_pair_tv(truth, base);

    CorollaryInstance inst;
    inst.index = i;
    IntervalQuery& q = inst.query;
    q.delta_m1 = delta;
    q.eps_opt = config.eps_opt;
    q.reward_bound = truth.reward_bound;
    q.gamma = truth.gamma;
    q.lipschitz = truth.reward_bound / (1.0 - truth.gamma);
    q.vol_s = config.n_states;
    q.xi = config.xi;
    q.n_existing = config.n_existing;
    Rng rng = make_rng(seed, 0xc0);
    // sigma up to a quarter of delta keeps eps positive.
    q.sigma = 0.25 * delta * uniform01(rng);
    inst.eps = interval_epsilon(q);
    if (!(inst.eps > 0.0)) continue;
    inst.k = corollary_interval_k(q);

    for (int r = 0; r < config.repeats; ++r) {
      const auto counts = sampler.draw_all(config.n_existing + inst.k);
      const auto est = mdp::build_empirical_model(counts, truth.n_states, truth.n_actions,
                                                  truth.reward, truth.gamma, truth.reward_bound);
      const double worst = 2.0 * mdp::max_pair_tv(truth, est);
      inst.worst_l1 = std::max(inst.worst_l1, worst);
      ++inst.trials;
      if (worst <= inst.eps) ++inst.all_pairs_ok;
    }
    rep.trials += inst.trials;
    rep.successes += inst.all_pairs_ok;
    rep.instances.push_back(inst);
  }
  if (rep.trials == 0) {
    rep.ok = true;
    return rep;
  }
  const double t = static_cast<double>(rep.trials);
  rep.fraction = static_cast<double>(rep.successes) / t;
  rep.required = (1.0 - config.xi) - 3.0 * std::sqrt(config.xi * (1.0 - config.xi) / t);
  rep.ok = rep.fraction >= rep.required;
  return rep;
}

}  // namespace cmlo::bounds
