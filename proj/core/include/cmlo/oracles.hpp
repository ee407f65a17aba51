#pragma once

// Policy-optimization oracles: exact value iteration on tabular models
// (certified eps_opt) and two model-predictive planners on learned models
// (uncertified).

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmlo/envs.hpp"
#include "cmlo/mdp.hpp"
#include "cmlo/models.hpp"
#include "cmlo/random.hpp"

namespace cmlo::oracle {

using Matrix = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class OracleKind { ValueIteration, CemMpc, Ilqr };

const char* to_string(OracleKind kind);
OracleKind oracle_kind_from_string(const std::string& name);

struct OracleSpec {
  OracleKind kind = OracleKind::CemMpc;
  double tolerance = 1e-6;  // value-iteration tolerance
  int horizon = 15;
  int population = 200;
  int elites = 20;
  int iterations = 5;
  double init_std_fraction = 0.5;  // initial std as a fraction of the action range
  double min_std = 1e-3;
  int ilqr_iterations = 10;
  double ilqr_regularization = 1e-6;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Policies consumed by the training loop.

class Policy {
 public:
  virtual ~Policy() = default;
  virtual Vec act(const Vec& state, Rng& rng) = 0;
  virtual bool certified() const { return false; }
  virtual double eps_opt() const { return 0.0; }
};

class UniformRandomPolicy final : public Policy {
 public:
  explicit UniformRandomPolicy(const env::EnvSpec& spec) : spec_(spec) {}
  Vec act(const Vec& state, Rng& rng) override;

 private:
  env::EnvSpec spec_;
};

class TabularGreedyPolicy final : public Policy {
 public:
  TabularGreedyPolicy(std::vector<int> actions, double certificate)
      : actions_(std::move(actions)), certificate_(certificate) {}
  Vec act(const Vec& state, Rng& rng) override;
  bool certified() const override { return true; }
  double eps_opt() const override { return certificate_; }
  const std::vector<int>& actions() const { return actions_; }

 private:
  std::vector<int> actions_;
  double certificate_;
};

// ---------------------------------------------------------------------------
// Tabular oracle

struct TabularOracleResult {
  mdp::TabularPolicy policy;
  std::vector<int> actions;
  double eps_opt_certificate = 0.0;
  double model_value = 0.0;  // greedy return under the model
};

TabularOracleResult optimize_tabular(const mdp::TabularMdp& model, const OracleSpec& spec,
                                     const mdp::EvalContext& ctx);

// ---------------------------------------------------------------------------
// Cross-entropy MPC

// Batched successor function: (states d x n, actions m x n) -> d x n.
using BatchDynamics = std::function<Matrix(const Matrix&, const Matrix&)>;

struct PlanningProblem {
  BatchDynamics dynamics;
  const env::Environment* env = nullptr;  // reward, termination, bounds, chart
};

struct CemResult {
  Matrix plan;                        // action_dim x horizon
  std::vector<double> best_per_iter;  // best elite score per iteration
};

// Samples action sequences from a diagonal Gaussian, scores them by the
// model's cumulative reward, refits to the elites, and returns the final mean
// clipped to the action bounds. warm_start, when given, seeds the mean.
CemResult cem_plan(const PlanningProblem& problem, const Vec& state, const OracleSpec& spec,
                   Rng& rng, const Matrix* warm_start = nullptr);

// ---------------------------------------------------------------------------
// iLQR

struct LinearizedDynamics {
  std::function<Vec(const Vec&, const Vec&)> step;
  // Returns (A, B) at (x, u). Empty -> central finite differences of step.
  std::function<std::pair<Matrix, Matrix>(const Vec&, const Vec&)> jacobians;
};

struct IlqrResult {
  std::vector<Vec> actions;  // open-loop sequence, length horizon
  std::vector<Matrix> gains;  // feedback K_t, u = u_t + K_t (x - x_t)
  std::vector<Vec> states;   // nominal trajectory, length horizon + 1
  double cost = 0.0;
  int iterations = 0;
};

std::pair<Matrix, Matrix> finite_difference_jacobians(
    const std::function<Vec(const Vec&, const Vec&)>& step, const Vec& x, const Vec& u,
    double h = 1e-5);

// Backward Riccati recursion on the local quadratic model, forward rollout
// with a backtracking line search. Action bounds, when given, clip the
// rollout controls.
IlqrResult ilqr_plan(const LinearizedDynamics& model, const env::QuadraticCost& cost,
                     const Vec& x0, const OracleSpec& spec,
                     const std::vector<Vec>* initial_actions = nullptr,
                     const std::optional<std::pair<Vec, Vec>>& action_bounds = std::nullopt);

// ---------------------------------------------------------------------------
// Planner policies bound to a frozen model.

class CemPolicy final : public Policy {
 public:
  CemPolicy(std::shared_ptr<const model::DynamicsModel> model, const env::Environment& env,
            OracleSpec spec);
  Vec act(const Vec& state, Rng& rng) override;

 private:
  std::shared_ptr<const model::DynamicsModel> model_;
  const env::Environment* env_;
  OracleSpec spec_;
  std::optional<Matrix> previous_;  // shifted into the next warm start
};

class IlqrPolicy final : public Policy {
 public:
  IlqrPolicy(std::shared_ptr<const model::DynamicsModel> model, const env::Environment& env,
             OracleSpec spec);
  Vec act(const Vec& state, Rng& rng) override;

 private:
  std::shared_ptr<const model::DynamicsModel> model_;
  const env::Environment* env_;
  OracleSpec spec_;
  env::QuadraticCost cost_;
  std::optional<std::vector<Vec>> previous_;
};

// Oracle dispatch: value iteration needs a TabularCountModel, planners need
// an ensemble. Throws OracleMismatch otherwise.
struct OptimizeResult {
  std::unique_ptr<Policy> policy;
  bool certified = false;
  double eps_opt = 0.0;
};

OptimizeResult optimize(std::shared_ptr<const model::DynamicsModel> model,
                        const env::Environment& env, const OracleSpec& spec,
                        const mdp::EvalContext* ctx = nullptr);

}  // namespace cmlo::oracle
