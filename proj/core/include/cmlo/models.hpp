#pragma once

// Learned dynamics as seen by the training loop: either the neural
// ensemble or an empirical tabular model built from buffer counts.

#include <memory>
#include <span>
#include <vector>

#include "cmlo/dynamics.hpp"
#include "cmlo/mdp.hpp"
#include "cmlo/random.hpp"

namespace cmlo::model {

using nn::Matrix;
using nn::TransitionTuple;
using nn::Vector;

class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;

  virtual int members() const = 0;
  // Ensemble-mean successor for each column.
  virtual Matrix predict_mean(const Matrix& states, const Matrix& actions) const = 0;
  // Successor used for synthetic rollouts. stochastic picks a random member
  // (ensemble) or samples the categorical row (tabular).
  virtual Matrix rollout_step(const Matrix& states, const Matrix& actions, Rng& rng,
                              bool stochastic) const = 0;
  // Mean over tuples of the member-averaged prediction error.
  virtual double one_step_error(std::span<const TransitionTuple> tuples) const = 0;
};

class EnsembleModel final : public DynamicsModel {
 public:
  explicit EnsembleModel(nn::GaussianEnsemble ensemble) : ensemble_(std::move(ensemble)) {}

  int members() const override { return ensemble_.size(); }
  Matrix predict_mean(const Matrix& states, const Matrix& actions) const override;
  Matrix rollout_step(const Matrix& states, const Matrix& actions, Rng& rng,
                      bool stochastic) const override;
  double one_step_error(std::span<const TransitionTuple> tuples) const override;

  const nn::GaussianEnsemble& ensemble() const { return ensemble_; }

 private:
  nn::GaussianEnsemble ensemble_;
};

// Empirical MDP from one-hot buffer transitions. Pairs never visited keep a
// self-loop until data arrives.
class TabularCountModel final : public DynamicsModel {
 public:
  TabularCountModel(std::span<const TransitionTuple> buffer, const mdp::TabularMdp& reward_source);

  int members() const override { return 1; }
  Matrix predict_mean(const Matrix& states, const Matrix& actions) const override;
  Matrix rollout_step(const Matrix& states, const Matrix& actions, Rng& rng,
                      bool stochastic) const override;
  double one_step_error(std::span<const TransitionTuple> tuples) const override;

  const mdp::TabularMdp& empirical() const { return empirical_; }
  const std::vector<std::int64_t>& counts() const { return counts_; }

 private:
  mdp::TabularMdp empirical_;
  std::vector<std::int64_t> counts_;
};

}  // namespace cmlo::model
