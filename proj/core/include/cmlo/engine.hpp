#pragma once

// The training loop: collect environment data with the current policy,
// estimate model shift every F steps, retrain the ensemble when the trigger
// fires, roll the fresh model out into D_m and refresh the policy.

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmlo/dynamics.hpp"
#include "cmlo/envs.hpp"
#include "cmlo/models.hpp"
#include "cmlo/oracles.hpp"
#include "cmlo/trigger.hpp"

namespace cmlo::engine {

using nn::TransitionTuple;
using Vec = Eigen::VectorXd;

struct ModelTuple {
  TransitionTuple tuple;
  int model_version = 0;   // ensemble version that produced the tuple
  long created_step = 0;
};

// D_e is a FIFO vector; the fresh slice is its most recent tuples, so it is
// always a subset of D_e.
class ReplayBuffers {
 public:
  ReplayBuffers(std::size_t env_capacity = 1000000, std::size_t model_capacity = 100000);

  void add_env(TransitionTuple t);
  void add_model(TransitionTuple t, int version, long step);
  void clear_fresh() { fresh_count_ = 0; }

  std::span<const TransitionTuple> env() const { return env_; }
  std::span<const TransitionTuple> fresh() const;
  std::span<const Vec> env_states() const { return env_states_; }
  const std::vector<ModelTuple>& model() const { return model_; }
  std::size_t fresh_count() const { return fresh_count_; }
  std::size_t env_capacity() const { return env_capacity_; }
  std::size_t model_capacity() const { return model_capacity_; }

 private:
  std::size_t env_capacity_;
  std::size_t model_capacity_;
  std::vector<TransitionTuple> env_;
  std::vector<Vec> env_states_;
  std::vector<ModelTuple> model_;
  std::size_t fresh_count_ = 0;
};

struct RolloutConfig {
  int length = 1;           // h
  int length_end = 0;       // > length enables a linear ramp
  int ramp_updates = 0;     // trainings over which the ramp runs
  int rollouts_per_update = 64;
  std::size_t model_capacity = 100000;
  bool stochastic = false;  // sample a member per step instead of the mean

  void validate() const;
  int length_at(int update_index) const;
};

// h-step rollouts from each start through the model, acting with policy.
// Stops a branch at a terminal model state.
std::vector<TransitionTuple> rollout_model(const model::DynamicsModel& model,
                                           oracle::Policy& policy, const env::Environment& env,
                                           std::span<const Vec> start_states, int h, Rng& rng,
                                           bool stochastic = false);

enum class Mode { Cmlo, Fixed };

const char* to_string(Mode mode);

struct EngineConfig {
  oracle::OracleSpec oracle;
  shift::TriggerConfig trigger;
  RolloutConfig rollout;
  nn::TrainConfig train;
  long budget = 0;
  int warmup = -1;  // random-policy steps before the first fit; < 0 means t_min
  std::size_t env_capacity = 1000000;
  int n_stages = 5;
  // Step size of a training at env step t is step_size * tau / (tau + t);
  // 0 keeps it constant.
  double step_size_decay_steps = 0.0;
  std::string config_hash;

  void validate(const env::Environment& env) const;
};

struct EpisodeRecord {
  long end_step = 0;
  double ret = 0.0;
  int length = 0;
};

struct TrainingEvent {
  long step = 0;
  int version = 0;
  std::size_t env_size = 0;
  double mean_loss = 0.0;  // NaN for tabular models
  bool forced = false;     // maximal interevent time reached
};

struct DiagnosticRow {
  long step = 0;
  int model_version = 0;
  double coverage = 0.0;          // exact hull of the whole D_e projection
  double trigger_coverage = 0.0;  // the trigger's subsampled estimate
  double model_error = 0.0;       // current model on the last F tuples
};

// Per-stage means: coverage over diagnostic rows, model error over the
// trigger's L(dD) estimates, return over episodes ending in the stage.
struct StageSummary {
  int index = 0;
  long begin = 0;  // exclusive
  long end = 0;    // inclusive
  std::optional<double> coverage;
  std::optional<double> model_error;
  std::optional<double> mean_return;
  int n_rows = 0;
};

struct RunFailure {
  long step = 0;
  std::string kind;
  std::string message;
};

struct RunRecord {
  Mode mode = Mode::Cmlo;
  int interval = 0;  // fixed mode only
  std::uint64_t seed = 0;
  std::string config_hash;
  long budget = 0;
  long env_steps = 0;
  int n_stages = 5;
  std::string env_name;
  std::string oracle;
  bool certified = false;
  double eps_opt = 0.0;
  std::vector<EpisodeRecord> episodes;
  std::vector<TrainingEvent> trainings;
  std::vector<shift::EstimateRecord> estimates;
  std::vector<DiagnosticRow> diagnostics;
  std::size_t model_buffer_size = 0;
  bool freshness_ok = true;
  std::optional<RunFailure> failure;

  int training_count() const { return static_cast<int>(trainings.size()); }
  // Mean return of episodes ending in the last stage; NaN when there are none.
  double final_return() const;
};

// Stage windows split (0, budget] into n_stages equal parts.
std::vector<StageSummary> stage_summaries(const RunRecord& record);

RunRecord run_cmlo(const env::Environment& env, const EngineConfig& config, std::uint64_t seed);
RunRecord run_fixed_interval(const env::Environment& env, const EngineConfig& config, int interval,
                             std::uint64_t seed);

// Largest and smallest gap between consecutive trainings (first training
// measured from step 0). Empty when fewer than one training.
std::optional<std::pair<long, long>> interevent_range(const RunRecord& record);

// Run directory layout: manifest.json plus returns.csv, triggers.csv,
// trainings.csv, coverage.csv, model_error.csv.
inline constexpr int kRunSchemaVersion = 1;

std::string run_directory_name(const RunRecord& record);
void write_run(const RunRecord& record, const std::string& dir);

// Inverse of write_run (episodes, trainings, estimates, diagnostics and the
// manifest fields). Throws Io on missing files, InvalidConfig on a foreign
// or mismatched schema, NumericalFailure on unparsable rows.
RunRecord read_run(const std::string& dir);

}  // namespace cmlo::engine
