#include "cmlo/trigger.hpp"

#include <cmath>
#include <ostream>

#include "cmlo/error.hpp"

namespace cmlo::shift {

void TriggerConfig::validate() const {
  if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidConfig, "alpha must be > 0");
  if (beta < 0.0) throw Error(ErrorKind::InvalidConfig, "beta must be >= 0");
  if (check_frequency < 1) throw Error(ErrorKind::InvalidConfig, "check frequency F must be >= 1");
  if (t_min < 1 || t_min > t_max) throw Error(ErrorKind::InvalidConfig, "need 1 <= t_min <= t_max");
  if (hull_sample_size < 3) throw Error(ErrorKind::InvalidConfig, "hull sample size must be >= 3");
  if (pca_dims != 2) throw Error(ErrorKind::InvalidConfig, "coverage is measured in 2 dimensions");
}

const char* to_string(Decision d) { return d == Decision::Train ? "train" : "hold"; }

double raw_condition(double vol_new, double vol_base, double pred_error) {
  if (!(vol_base > 0.0)) throw Error(ErrorKind::DegenerateBase, "base coverage volume is zero");
  return vol_new / vol_base * pred_error;
}

bool forced_by_max_interval(const TriggerState& state, const TriggerConfig& config) {
  return state.steps_since_training >= config.t_max;
}

void reset_after_training(TriggerState& state, double base_volume) {
  state.accumulator = 0.0;
  state.steps_since_training = 0;
  state.base_hull_volume = base_volume;
}

Decision accumulate(TriggerState& state, const TriggerConfig& config, double ratio,
                    double pred_error, long step, bool estimator_failed) {
  EstimateRecord rec;
  rec.step = step;
  rec.ratio = ratio;
  rec.pred_error = pred_error;
  const double x = ratio * pred_error + config.beta;
  if (estimator_failed || !std::isfinite(x) || x <= 0.0) {
    rec.estimator_failed = true;
    rec.term = 0.0;
  } else {
    rec.term = std::log(x);
  }
  state.accumulator += rec.term;
  rec.accumulator = state.accumulator;

  const bool fired = state.accumulator >= config.alpha && state.steps_since_training >= config.t_min;
  rec.decision = fired || forced_by_max_interval(state, config) ? Decision::Train : Decision::Hold;
  state.estimates_log.push_back(rec);
  return rec.decision;
}

TriggerOutcome trigger_step(TriggerState& state, const TriggerConfig& config,
                            std::span<const nn::TransitionTuple> fresh_slice,
                            const model::DynamicsModel& model,
                            std::span<const Eigen::VectorXd> env_states, Rng& hull_rng, long step) {
  TriggerOutcome out;
  double ratio = 1.0;
  double pred_error = 0.0;
  bool failed = false;
  try {
    const auto hull = coverage_volume(env_states, config.hull_sample_size, hull_rng);
    out.current_volume = hull.volume;
    ratio = state.base_hull_volume > 0.0 ? hull.volume / state.base_hull_volume : 1.0;
    pred_error = model.one_step_error(fresh_slice);
  } catch (const Error&) {
    failed = true;
  }
  out.decision = accumulate(state, config, ratio, pred_error, step, failed);
  if (out.decision == Decision::Train) reset_after_training(state, out.current_volume);
  return out;
}

void write_trigger_csv(std::ostream& out, const std::vector<EstimateRecord>& log) {
  out << "step,ratio,pred_error,term,accumulator,decision,estimator_failed\n";
  const auto old = out.precision(17);
  for (const auto& r : log) {
    out << r.step << ',' << r.ratio << ',' << r.pred_error << ',' << r.term << ','
        << r.accumulator << ',' << to_string(r.decision) << ','
        << (r.estimator_failed ? 1 : 0) << '\n';
  }
  out.precision(old);
}

}  // namespace cmlo::shift
