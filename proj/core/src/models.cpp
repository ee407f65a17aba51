#include "cmlo/models.hpp"

#include <cmath>

#include "cmlo/envs.hpp"
#include "cmlo/error.hpp"

namespace cmlo::model {

Matrix EnsembleModel::predict_mean(const Matrix& states, const Matrix& actions) const {
  return nn::predict_mean(ensemble_, states, actions);
}

Matrix EnsembleModel::rollout_step(const Matrix& states, const Matrix& actions, Rng& rng,
                                   bool stochastic) const {
  if (!stochastic) return predict_mean(states, actions);
  Matrix out(states.rows(), states.cols());
  Matrix m, v;
  for (Eigen::Index i = 0; i < states.cols(); ++i) {
    const auto k = static_cast<std::size_t>(uniform01(rng) * ensemble_.size());
    ensemble_.members[std::min(k, ensemble_.members.size() - 1)].predict(states.col(i),
                                                                          actions.col(i), m, v);
    out.col(i) = m.col(0);
  }
  return out;
}

double EnsembleModel::one_step_error(std::span<const TransitionTuple> tuples) const {
  return nn::one_step_error(ensemble_, tuples);
}

TabularCountModel::TabularCountModel(std::span<const TransitionTuple> buffer,
                                     const mdp::TabularMdp& reward_source) {
  const int ns = reward_source.n_states;
  const int na = reward_source.n_actions;
  counts_.assign(static_cast<std::size_t>(ns) * na * ns, 0);
  for (const auto& t : buffer) {
    const int s = env::TabularEnv::state_index(t.state);
    const int next = env::TabularEnv::state_index(t.next_state);
    const auto a = static_cast<int>(std::clamp<long>(std::lround(t.action(0)), 0, na - 1));
    ++counts_[reward_source.pair_index(s, a) * ns + next];
  }
  auto filled = counts_;
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      auto* row = filled.data() + reward_source.pair_index(s, a) * ns;
      bool any = false;
      for (int next = 0; next < ns; ++next) any = any || row[next] > 0;
      if (!any) row[s] = 1;
    }
  }
  empirical_ = mdp::build_empirical_model(filled, ns, na, reward_source.reward, reward_source.gamma,
                                          reward_source.reward_bound);
}

Matrix TabularCountModel::predict_mean(const Matrix& states, const Matrix& actions) const {
  const int ns = empirical_.n_states;
  Matrix out(ns, states.cols());
  for (Eigen::Index i = 0; i < states.cols(); ++i) {
    const int s = env::TabularEnv::state_index(states.col(i));
    const auto a = static_cast<int>(
        std::clamp<long>(std::lround(actions(0, i)), 0, empirical_.n_actions - 1));
    auto row = empirical_.row(s, a);
    for (int next = 0; next < ns; ++next) out(next, i) = row[next];
  }
  return out;
}

Matrix TabularCountModel::rollout_step(const Matrix& states, const Matrix& actions, Rng& rng,
                                       bool /*stochastic*/) const {
  // A distribution is not a state; tabular rollouts always sample.
  const int ns = empirical_.n_states;
  Matrix out = Matrix::Zero(ns, states.cols());
  for (Eigen::Index i = 0; i < states.cols(); ++i) {
    const int s = env::TabularEnv::state_index(states.col(i));
    const auto a = static_cast<int>(
        std::clamp<long>(std::lround(actions(0, i)), 0, empirical_.n_actions - 1));
    out(env::sample_categorical(empirical_.row(s, a), rng), i) = 1.0;
  }
  return out;
}

double TabularCountModel::one_step_error(std::span<const TransitionTuple> tuples) const {
  if (tuples.empty()) throw Error(ErrorKind::EmptySlice, "no fresh transitions");
  Matrix s, a, sn;
  nn::stack_tuples(tuples, s, a, sn);
  const Matrix pred = predict_mean(s, a);
  return (sn - pred).colwise().norm().mean();
}

}  // namespace cmlo::model
