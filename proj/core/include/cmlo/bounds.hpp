#pragma once

// Performance-difference bounds under model shift, their requirements, the
// model-update interval from the generative-model analysis, and the L1
// concentration inequality behind it.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "cmlo/mdp.hpp"

namespace cmlo::bounds {

struct BoundInputs {
  double kappa = 0.0;
  double lipschitz = 0.0;
  double eps_opt = 0.0;
  double eps_m1_pi1 = 0.0;  // inconsistency of M1 under pi1
  double eps_m2_pi2 = 0.0;  // inconsistency of M2 under pi2
  double ceiling_v1 = 0.0;  // V*_{M1}(mu)
  double ceiling_v2 = 0.0;  // V*_{M2}(mu)
  double sigma = 0.0;       // model-shift threshold
  double gamma = 0.9;
  double reward_bound = 1.0;
};

struct BoundReport {
  double bound_c = 0.0;
  double conservative_c = 0.0;
  double actual_gap = 0.0;
  bool constraint_satisfied = false;
  double constraint_lhs = 0.0;
};

struct GapBoundResult {
  double bound_c = 0.0;
  double conservative_c = 0.0;
};

struct IntervalQuery {
  double delta_m1 = 0.0;
  double sigma = 0.0;
  double eps_opt = 0.0;
  double lipschitz = 0.0;
  double reward_bound = 1.0;
  double gamma = 0.9;
  int vol_s = 2;
  double xi = 0.05;
  std::int64_t n_existing = 0;
};

// 2 R gamma / (1 - gamma)^2.
double kappa(double gamma, double reward_bound);

// C = kappa (eps1 - eps2) + V*_2 - V*_1 - eps_opt, with the unconditionally
// sound variant that charges both inconsistency terms negatively.
GapBoundResult gap_bound(const BoundInputs& in);

// (gamma/(1-gamma)) L max_{s,a} ||P_2(.|s,a) - P_1(.|s,a)||_1.
// Throws InvalidLipschitz when L < R/(1-gamma).
double ceiling_gap_bound(const mdp::TabularMdp& m1, const mdp::TabularMdp& m2, double lipschitz,
                         double gamma);

// Refined bound under the per-pair TV shift constraint. actual_gap is left
// at zero; it needs the true environment (see run_gap_trial).
BoundReport refined_gap_bound(const BoundInputs& in, const mdp::TabularMdp& m1,
                                    const mdp::TabularMdp& m2);

// Requirement on the new model's bias, in L1 form.
bool check_r1(const BoundInputs& in, double eps_m2_pi2);

// epsilon = delta_M1 - ((1-g)L/R) 2 sigma - ((1-g)^2/(R g)) eps_opt.
double interval_epsilon(const IntervalQuery& q);

// k = max(0, ceil((2/eps^2) ln((2^vol - 2)/xi) - N)). Throws InfeasibleInterval
// when epsilon <= 0.
std::int64_t corollary_interval_k(const IntervalQuery& q);

// (2^alphabet - 2) exp(-m eps^2 / 2), clipped to [0, 1].
double l1_concentration_bound(std::int64_t m, double eps, int alphabet);

// |V^pi(mu) - V_M^pi(mu)| against kappa * eps_M^pi for one (truth, model,
// policy) triple.
struct SimulationGapCheck {
  double gap = 0.0;
  double eps = 0.0;
  double bound = 0.0;
  bool ok = false;
};

SimulationGapCheck simulation_gap_check(const mdp::TabularMdp& truth, const mdp::TabularMdp& model,
                                        const mdp::TabularPolicy& policy,
                                        const mdp::EvalContext& ctx, double kappa_value);

// Two absorbing sinks with rewards +R and -R in the model; the true kernel
// leaks from the good sink to the bad one with probability leak. The
// simulation-gap bound is attained with equality from the good sink.
struct TightInstance {
  mdp::TabularMdp truth;
  mdp::TabularMdp model;
  mdp::TabularPolicy policy;
  mdp::EvalContext ctx;
};

TightInstance tight_simulation_instance(double gamma, double reward_bound, double leak);

struct SimulationTrial {
  int trial = 0;
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.0;
  SimulationGapCheck check;
};

// Random (truth, model, policy, mu) with 2..10 states and 1..3 actions. The
// model shares the true rewards; its kernel mixes the true one with an
// unrelated random kernel. Policies are random and stochastic.
std::vector<SimulationTrial> simulation_gap_campaign(int n_trials, std::uint64_t seed,
                                                     double kappa_scale = 1.0);

// ---------------------------------------------------------------------------
// End-to-end verification on exactly solvable instances.

struct CampaignConfig {
  int n_trials = 0;
  int n_states = 8;
  int n_actions = 3;
  double sparsity = 1.0;
  double gamma = 0.9;
  std::int64_t n_samples = 10;      // N per pair for M1
  std::int64_t extra_samples = 10;  // k additional per pair for M2
  double oracle_tol = 1e-3;         // value-iteration tolerance of the policy oracle
  double ceiling_tol = 1e-12;       // tolerance used for V*
  std::optional<double> sigma;      // defaults to the realized max-pair TV
  double lipschitz_scale = 1.0;     // L = scale * R / (1 - gamma)
  double kappa_scale = 1.0;         // 1 in real runs; sabotage hook for tests
  std::uint64_t seed = 0;
};

struct TrialReport {
  int trial = 0;
  std::uint64_t seed = 0;
  std::int64_t n = 0;
  std::int64_t k = 0;
  BoundInputs inputs;
  BoundReport report;            // gap-bound quantities
  BoundReport refined;           // refined-bound quantities
  double refined_conservative_c = 0.0;
  double ceiling_gap = 0.0;      // |V*_2 - V*_1|
  double ceiling_bound = 0.0;
  double equality_residual = 0.0;  // |V_{M1}^{pi1} - V^{pi1} - kappa eps1|
  bool equality_holds = false;     // residual <= 1e-6 kappa eps1
  bool conservative_ok = false;
  bool refined_ok = false;         // vacuous when the constraint is violated
  bool ceiling_ok = false;
  bool exact_c_ok = false;         // diagnostic only
  bool r1 = false;
  SimulationGapCheck sim_m1;  // pi1 under M1
  SimulationGapCheck sim_m2;  // pi2 under M2

  bool hard_pass() const { return conservative_ok && refined_ok && ceiling_ok && sim_m1.ok && sim_m2.ok; }
};

inline constexpr double kExactTol = 1e-9;

TrialReport run_gap_trial(const CampaignConfig& config, int trial);

// Trials are independent; results come back ordered by trial index.
std::vector<TrialReport> verify_gap_campaign(const CampaignConfig& config, int workers = 1);

void write_campaign_csv(std::ostream& out, const std::vector<TrialReport>& trials);

// ---------------------------------------------------------------------------
// Monte-Carlo checks of the concentration bound and the corollary interval.

struct ConcentrationCell {
  int alphabet = 0;
  std::int64_t m = 0;
  double eps = 0.0;
  std::int64_t draws = 0;
  std::int64_t violations = 0;
  double frequency = 0.0;
  double bound = 0.0;
  double std_error = 0.0;
  bool ok = false;  // frequency <= bound + 3 std_error
};

// Draws m samples from the uniform distribution over the alphabet, draws
// times, and counts L1 deviations above eps.
ConcentrationCell concentration_check(int alphabet, std::int64_t m, double eps, std::int64_t draws,
                                      std::uint64_t seed);

struct CorollaryConfig {
  int instances = 100;
  int repeats = 10;  // independent N+k sample sets per instance
  int n_states = 6;
  int n_actions = 2;
  double sparsity = 1.0;
  double gamma = 0.9;
  double xi = 0.05;
  std::int64_t n_existing = 10;
  double eps_opt = 1e-3;
  std::uint64_t seed = 0;
};

struct CorollaryInstance {
  int index = 0;
  IntervalQuery query;
  double eps = 0.0;
  std::int64_t k = 0;
  int trials = 0;
  int all_pairs_ok = 0;   // trials with ||P - P_hat||_1 <= eps at every pair
  double worst_l1 = 0.0;  // largest pair deviation seen
};

struct CorollaryReport {
  std::vector<CorollaryInstance> instances;
  std::int64_t trials = 0;
  std::int64_t successes = 0;
  double fraction = 0.0;
  double required = 0.0;  // (1 - xi) - 3 Monte-Carlo standard errors
  bool ok = false;
};

// Per instance: delta_M1 is the realized max-pair L1 error of an N-sample
// empirical model, sigma a random fraction of it, L = R / (1 - gamma),
// vol(S) = n_states. Then N + k fresh samples per pair are drawn.
CorollaryReport corollary_check(const CorollaryConfig& config);

}  // namespace cmlo::bounds
