#pragma once

// Probabilistic dynamics ensemble: small MLPs with diagonal-Gaussian heads,
// trained by negative log-likelihood on environment transitions.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmlo/random.hpp"

namespace cmlo::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct TransitionTuple {
  Vector state;
  Vector action;
  Vector next_state;
  double reward = 0.0;
};

// Desk-scale default: two hidden layers of 64 units. Larger shapes are a
// config change only.
struct NetConfig {
  int state_dim = 0;
  int action_dim = 0;
  std::vector<int> hidden{64, 64};
  double log_var_min = -10.0;
  double log_var_max = 2.0;
  bool predict_delta = true;  // target is s' - s instead of s'

  int input_dim() const { return state_dim + action_dim; }
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
};

// Affine maps into the network's input and target spaces.
struct Normalizer {
  Vector input_mean;
  Vector input_std;
  Vector target_mean;
  Vector target_std;

  static Normalizer identity(int input_dim, int target_dim);
};

class GaussianNet {
 public:
  GaussianNet() = default;
  GaussianNet(NetConfig config, Rng& init_rng);

  // Raw network pass on already-normalized inputs (columns are samples).
  // mean/log_var are in normalized target space; log_var is soft-clamped.
  void forward(const Matrix& inputs, Matrix& mean, Matrix& log_var) const;

  // Inputs for (state, action) columns in normalized space.
  Matrix normalize_inputs(const Matrix& states, const Matrix& actions) const;
  Matrix normalize_targets(const Matrix& states, const Matrix& next_states) const;

  // Next-state mean and variance in raw state units.
  void predict(const Matrix& states, const Matrix& actions, Matrix& next_mean,
               Matrix& next_var) const;
  // Mean only; skips the variance head.
  void predict_mean(const Matrix& states, const Matrix& actions, Matrix& next_mean) const;

  const NetConfig& config() const { return config_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  Normalizer& normalizer() { return norm_; }
  const Normalizer& normalizer() const { return norm_; }

  std::size_t parameter_count() const;
  bool all_finite() const;

  friend bool operator==(const GaussianNet& a, const GaussianNet& b);

 private:
  NetConfig config_;
  std::vector<DenseLayer> layers_;
  Normalizer norm_;
};

struct LossAndGradient {
  double loss = 0.0;
  std::vector<DenseLayer> gradient;  // same shapes as the net's layers
};

// Per-sample Gaussian NLL without the constant:
// (mean - target)' diag(exp(-log_var)) (mean - target) + sum(log_var).
double gaussian_nll(const Vector& mean, const Vector& log_var, const Vector& target);

// Batch-mean NLL in normalized target space plus its exact gradient.
// Throws EmptySlice on an empty batch, NumericalFailure on non-finite values.
LossAndGradient nll_loss(const GaussianNet& net, std::span<const TransitionTuple> batch);
LossAndGradient nll_loss(const GaussianNet& net, const Matrix& inputs, const Matrix& targets);

struct GaussianEnsemble {
  std::vector<GaussianNet> members;

  int size() const { return static_cast<int>(members.size()); }
  int state_dim() const { return members.empty() ? 0 : members.front().config().state_dim; }
  int action_dim() const { return members.empty() ? 0 : members.front().config().action_dim; }
};

struct TrainConfig {
  NetConfig net;
  int ensemble_size = 5;
  int epochs = 5;
  int batch_size = 64;
  double step_size = 1e-3;
  // 0: an epoch is one full pass over the buffer. Otherwise an epoch is
  // exactly this many minibatch updates, reshuffling whenever a pass ends.
  int updates_per_epoch = 0;
  // Per-epoch losses use a strided subset of at most this many tuples
  // (0: the whole buffer). Final losses always use the whole buffer.
  int loss_eval_size = 4096;
  std::uint64_t seed = 0;
  // Optional explicit per-member seeds; derived from seed when empty.
  std::vector<std::uint64_t> init_seeds;
  std::vector<std::uint64_t> shuffle_seeds;
  int workers = 1;
};

struct TrainResult {
  GaussianEnsemble ensemble;
  std::vector<double> final_loss;                 // per member, full buffer
  std::vector<std::vector<double>> epoch_losses;  // per member, per epoch
  bool loss_monotone = true;                      // flagged if any epoch rose > 1e-6
};

// Fits every member on the full buffer with its own shuffle order. When
// warm_start is given, members continue from its parameters.
TrainResult train_ensemble(std::span<const TransitionTuple> buffer, const TrainConfig& config,
                           const GaussianEnsemble* warm_start = nullptr);

// Fresh, untrained ensemble using the config's init seeds.
GaussianEnsemble init_ensemble(const TrainConfig& config);

Normalizer fit_normalizer(std::span<const TransitionTuple> buffer, const NetConfig& net);

struct EnsemblePrediction {
  Vector mean;
  std::vector<Vector> member_means;
  std::vector<Vector> member_vars;
};

EnsemblePrediction predict(const GaussianEnsemble& ensemble, const Vector& state,
                           const Vector& action);

// Ensemble-mean next states for a batch (columns).
Matrix predict_mean(const GaussianEnsemble& ensemble, const Matrix& states,
                    const Matrix& actions);

// Mean over tuples of the member-averaged Euclidean prediction error.
double one_step_error(const GaussianEnsemble& ensemble, std::span<const TransitionTuple> tuples);

std::string to_json(const GaussianEnsemble& ensemble);
GaussianEnsemble ensemble_from_json(const std::string& text);

// Stacks tuple fields into column matrices.
void stack_tuples(std::span<const TransitionTuple> tuples, Matrix& states, Matrix& actions,
                  Matrix& next_states);

}  // namespace cmlo::nn
