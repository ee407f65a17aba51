#pragma once

// Event-triggered model retraining. Every F environment steps the monitor
// estimates the model shift as (coverage ratio) x (prediction error on fresh
// data) and adds log(estimate + beta) to an accumulator; training fires once
// the accumulator reaches alpha, subject to minimal/maximal interevent times.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cmlo/coverage.hpp"
#include "cmlo/models.hpp"
#include "cmlo/random.hpp"

namespace cmlo::shift {

struct TriggerConfig {
  double alpha = 2.0;
  double beta = 1.0;
  int check_frequency = 50;  // F
  int t_min = 150;
  int t_max = 500;
  int hull_sample_size = 1000;
  int pca_dims = 2;

  void validate() const;
};

enum class Decision { Hold, Train };

const char* to_string(Decision d);

struct EstimateRecord {
  long step = 0;
  double ratio = 1.0;
  double pred_error = 0.0;
  double term = 0.0;
  double accumulator = 0.0;
  Decision decision = Decision::Hold;
  bool estimator_failed = false;
};

struct TriggerState {
  double accumulator = 0.0;
  int steps_since_training = 0;
  double base_hull_volume = 0.0;
  std::vector<EstimateRecord> estimates_log;
};

// ratio * pred_error; throws DegenerateBase when vol_base is 0.
double raw_condition(double vol_new, double vol_base, double pred_error);

// Advances the accumulator with one estimate and decides. Does not touch
// steps_since_training (the caller counts environment steps).
Decision accumulate(TriggerState& state, const TriggerConfig& config, double ratio,
                    double pred_error, long step, bool estimator_failed = false);

// True when the maximal interevent time forces training regardless of the
// accumulator.
bool forced_by_max_interval(const TriggerState& state, const TriggerConfig& config);

// Clears the accumulator and counters and re-anchors the coverage base.
void reset_after_training(TriggerState& state, double base_volume);

struct TriggerOutcome {
  Decision decision = Decision::Hold;
  double current_volume = 0.0;  // coverage of the whole environment buffer
};

// One estimation round: coverage of the environment buffer relative to the
// anchored base, prediction error of the current model on the fresh slice,
// then accumulate(). Estimator failures contribute a zero term.
TriggerOutcome trigger_step(TriggerState& state, const TriggerConfig& config,
                            std::span<const nn::TransitionTuple> fresh_slice,
                            const model::DynamicsModel& model,
                            std::span<const Eigen::VectorXd> env_states, Rng& hull_rng, long step);

void write_trigger_csv(std::ostream& out, const std::vector<EstimateRecord>& log);

}  // namespace cmlo::shift
