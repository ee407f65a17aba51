#pragma once

// Exact finite-MDP machinery: empirical models, policy evaluation, value
// iteration, discounted occupancy and transition-kernel distances.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cmlo::mdp {

// Discounted MDP over finite state and action sets.
// transition is laid out row-major as (s, a, s'), reward as (s, a).
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> transition;
  std::vector<double> reward;
  double gamma = 0.9;
  double reward_bound = 0.0;

  std::size_t pair_index(int s, int a) const {
    return static_cast<std::size_t>(s) * n_actions + a;
  }
  double p(int s, int a, int next) const {
    return transition[pair_index(s, a) * n_states + next];
  }
  double r(int s, int a) const { return reward[pair_index(s, a)]; }
  std::span<const double> row(int s, int a) const {
    return {transition.data() + pair_index(s, a) * n_states,
            static_cast<std::size_t>(n_states)};
  }

  // Throws InvalidArgument when any invariant (stochastic rows, reward bound,
  // discount in (0,1)) is broken.
  void validate() const;
};

struct TabularPolicy {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> probs;  // (s, a)

  double prob(int s, int a) const { return probs[static_cast<std::size_t>(s) * n_actions + a]; }

  static TabularPolicy uniform(int n_states, int n_actions);
  static TabularPolicy deterministic(int n_states, int n_actions, std::span<const int> actions);
  void validate() const;
};

struct EvalContext {
  std::vector<double> initial_dist;

  static EvalContext uniform(int n_states);
  void validate(int n_states) const;
};

struct ValueTable {
  std::vector<double> values;
  double residual = 0.0;
};

struct Visitation {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> density;  // (s, a)

  double at(int s, int a) const { return density[static_cast<std::size_t>(s) * n_actions + a]; }
};

struct PolicyEvaluation {
  ValueTable table;
  double expected_return = 0.0;  // mu-weighted value
};

struct ValueIterationResult {
  ValueTable table;
  TabularPolicy greedy;
  std::vector<int> greedy_actions;
  double eps_opt_certificate = 0.0;
  double table_return = 0.0;   // mu-weighted last iterate
  double greedy_return = 0.0;  // exact return of the greedy policy
  int iterations = 0;
};

// Transition rows from next-state counts; counts are laid out like
// TabularMdp::transition. Throws MissingSamples naming the first empty pair.
TabularMdp build_empirical_model(std::span<const std::int64_t> sample_counts, int n_states,
                                 int n_actions, std::span<const double> reward, double gamma,
                                 double reward_bound);

// Solves the Bellman equation for a fixed policy. Direct LU solve up to
// kDirectSolveLimit states, fixed-point iteration to 1e-12 beyond.
PolicyEvaluation policy_evaluation(const TabularMdp& mdp, const TabularPolicy& policy,
                                   const EvalContext& ctx);

inline constexpr int kDirectSolveLimit = 512;

// Iterates the optimality operator until the sup-norm change is <= tol.
// The greedy policy (ties to the lowest action) is eps_opt-optimal with
// eps_opt = 2*gamma*tol/(1-gamma).
ValueIterationResult value_iteration(const TabularMdp& mdp, double tol, const EvalContext& ctx,
                                     int max_iterations = 1'000'000);

double eps_opt_certificate(double gamma, double tol);

// Normalized discounted occupancy d(s,a) = (1-gamma) sum_h gamma^h Pr_h(s) pi(a|s).
Visitation visitation_distribution(const TabularMdp& mdp, const TabularPolicy& policy,
                                   const EvalContext& ctx);

double tv_distance(std::span<const double> p, std::span<const double> q);

// Occupancy-weighted TV distance between the true and model kernels; the
// occupancy is taken under the true dynamics.
double model_inconsistency(const TabularMdp& true_mdp, const TabularMdp& model_mdp,
                           const TabularPolicy& policy, const EvalContext& ctx);

// Max over (s,a) of TV(P_a(.|s,a), P_b(.|s,a)).
double max_pair_tv(const TabularMdp& a, const TabularMdp& b);

std::string to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const std::string& text);

}  // namespace cmlo::mdp
