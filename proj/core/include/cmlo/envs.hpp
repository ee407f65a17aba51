#pragma once

// Ground-truth environments: random/structured tabular MDPs with a
// generative sampler, and deterministic continuous control tasks.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmlo/mdp.hpp"
#include "cmlo/random.hpp"

namespace cmlo::env {

using Vec = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Tabular instances

// Dirichlet(1) rows restricted to a random support of ceil(sparsity * S)
// states; rewards uniform in [-1, 1] with reward_bound 1.
mdp::TabularMdp random_mdp(int n_states, int n_actions, std::uint64_t seed, double sparsity,
                           double gamma = 0.9);

// Left/right chain; the intended move succeeds with probability 1 - slip,
// otherwise the agent stays. Reward 1 for any action taken at the last state.
mdp::TabularMdp chain_mdp(int n_states, double slip, double gamma);

// width x height grid with actions (up, right, down, left); a slipped move
// is replaced by a uniformly random direction. Reward 1 at the far corner.
mdp::TabularMdp gridworld_mdp(int width, int height, double slip, double gamma);

// i.i.d. next-state draws for any (s, a) of a fixed true MDP.
class GenerativeSampler {
 public:
  GenerativeSampler(const mdp::TabularMdp& truth, std::uint64_t seed);

  std::vector<std::int64_t> draw(int s, int a, std::int64_t n);
  int draw_one(int s, int a);

  // Counts tensor (s, a, s') with n draws for every pair.
  std::vector<std::int64_t> draw_all(std::int64_t n);

  const mdp::TabularMdp& truth() const { return *truth_; }

 private:
  const mdp::TabularMdp* truth_;
  Rng rng_;
};

// Inverse-CDF categorical draw from a probability row.
int sample_categorical(std::span<const double> probs, Rng& rng);

// ---------------------------------------------------------------------------
// Environment interface used by the MBRL loop. Tabular environments encode
// the state as a one-hot vector and the action as a single index value.

struct EnvSpec {
  std::string name;
  std::string version;
  int state_dim = 0;
  int action_dim = 0;
  int n_states = 0;   // tabular only
  int n_actions = 0;  // tabular only
  std::vector<double> action_low;
  std::vector<double> action_high;
  int horizon = 1;
  std::string terminal;
  double reward_bound = 0.0;
  double gamma = 0.99;
  std::map<std::string, double> constants;

  void validate() const;
};

struct StepResult {
  Vec next_state;
  double reward = 0.0;
  bool done = false;
  bool clipped = false;  // action was outside bounds and got clipped
};

// Quadratic tracking cost (x - goal)' Q (x - goal) + u' R u used by iLQR.
struct QuadraticCost {
  Eigen::MatrixXd state_weight;
  Eigen::MatrixXd control_weight;
  Eigen::MatrixXd terminal_weight;
  Vec goal;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual Vec initial_state(Rng& rng) const = 0;
  virtual StepResult step(const Vec& state, const Vec& action, Rng& rng) const = 0;
  // Known reward model, available to planners.
  virtual double reward(const Vec& state, const Vec& action, const Vec& next_state) const = 0;
  virtual bool terminal(const Vec& state) const = 0;

  // Maps a raw successor (e.g. unwrapped angle) back to the canonical chart.
  virtual Vec canonicalize(const Vec& state) const { return state; }
  // Inverse of canonicalize relative to the predecessor: the successor
  // expressed without chart jumps, so that next - state is smooth.
  virtual Vec unwrap_successor(const Vec& /*state*/, const Vec& next) const { return next; }

  virtual std::optional<QuadraticCost> quadratic_cost() const { return std::nullopt; }
  virtual bool is_tabular() const { return false; }

  Vec clip_action(const Vec& action, bool* clipped = nullptr) const;
};

// ---------------------------------------------------------------------------
// Pendulum: theta = 0 is upright, theta = pi hangs down.

struct PendulumConstants {
  double g = 10.0;
  double l = 1.0;
  double m = 1.0;
  double dt = 0.05;
  double max_torque = 2.0;
  double max_speed = 8.0;
  int horizon = 200;
};

double wrap_angle(double theta);

// Semi-implicit Euler step. Torque beyond max_torque is clipped and flagged.
StepResult pendulum_step(const Vec& state, double torque, const PendulumConstants& c);
double pendulum_reward(const Vec& state, double torque);

class Pendulum final : public Environment {
 public:
  explicit Pendulum(PendulumConstants constants = {});

  const EnvSpec& spec() const override { return spec_; }
  Vec initial_state(Rng& rng) const override;
  StepResult step(const Vec& state, const Vec& action, Rng& rng) const override;
  double reward(const Vec& state, const Vec& action, const Vec& next_state) const override;
  bool terminal(const Vec&) const override { return false; }
  Vec canonicalize(const Vec& state) const override;
  Vec unwrap_successor(const Vec& state, const Vec& next) const override;
  std::optional<QuadraticCost> quadratic_cost() const override;

  const PendulumConstants& constants() const { return constants_; }

 private:
  PendulumConstants constants_;
  EnvSpec spec_;
};

// ---------------------------------------------------------------------------
// Cart-pole with a continuous force; state {x, x_dot, theta, theta_dot}.

struct CartPoleConstants {
  double gravity = 9.8;
  double mass_cart = 1.0;
  double mass_pole = 0.1;
  double half_length = 0.5;
  double force_max = 10.0;
  double dt = 0.02;
  double theta_limit = 0.21;
  double x_limit = 2.4;
  int horizon = 200;
};

StepResult cartpole_step(const Vec& state, double force, const CartPoleConstants& c);
bool cartpole_done(const Vec& state, const CartPoleConstants& c);

class CartPole final : public Environment {
 public:
  explicit CartPole(CartPoleConstants constants = {});

  const EnvSpec& spec() const override { return spec_; }
  Vec initial_state(Rng& rng) const override;
  StepResult step(const Vec& state, const Vec& action, Rng& rng) const override;
  double reward(const Vec& state, const Vec& action, const Vec& next_state) const override;
  bool terminal(const Vec& state) const override;
  std::optional<QuadraticCost> quadratic_cost() const override;

  const CartPoleConstants& constants() const { return constants_; }

 private:
  CartPoleConstants constants_;
  EnvSpec spec_;
};

// ---------------------------------------------------------------------------
// A TabularMdp driven as an episodic environment.

class TabularEnv final : public Environment {
 public:
  TabularEnv(mdp::TabularMdp mdp, std::vector<double> initial_dist, int horizon,
             std::string name = "tabular");

  const EnvSpec& spec() const override { return spec_; }
  Vec initial_state(Rng& rng) const override;
  StepResult step(const Vec& state, const Vec& action, Rng& rng) const override;
  double reward(const Vec& state, const Vec& action, const Vec& next_state) const override;
  bool terminal(const Vec&) const override { return false; }
  bool is_tabular() const override { return true; }

  const mdp::TabularMdp& mdp() const { return mdp_; }
  const std::vector<double>& initial_dist() const { return initial_dist_; }

  Vec one_hot(int s) const;
  static int state_index(const Vec& state);
  int action_index(const Vec& action) const;

 private:
  mdp::TabularMdp mdp_;
  std::vector<double> initial_dist_;
  EnvSpec spec_;
};

// ---------------------------------------------------------------------------
// Environment spec documents (JSON): {"name", "version", "constants": {...}}
// for pendulum/cartpole, or {"name": "tabular", "mdp": <mdp doc>, ...}.

std::unique_ptr<Environment> make_environment(const std::string& spec_text);
std::unique_ptr<Environment> load_environment(const std::string& path);

struct TrajectoryRow {
  int t = 0;
  Vec state;
  Vec action;
  double reward = 0.0;
  bool done = false;
};

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows);

}  // namespace cmlo::env
