#include "cmlo/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

#include "cmlo/error.hpp"
#include "json.hpp"

namespace cmlo::nn {

namespace {

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix swish(const Matrix& z) {
  return (z.array() / (1.0 + (-z.array()).exp())).matrix();
}

Matrix swish_grad(const Matrix& z) {
  return z.unaryExpr([](double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
  });
}

// Everything the backward pass needs from one forward pass.
struct ForwardCache {
  std::vector<Matrix> pre;   // pre-activations of hidden layers
  std::vector<Matrix> post;  // inputs to each layer (post[0] = network input)
  Matrix mean;
  Matrix raw_log_var;
  Matrix clamped_upper;  // log_var before the lower soft clamp
  Matrix log_var;
};

void run_forward(const std::vector<DenseLayer>& layers, const NetConfig& cfg, const Matrix& x,
                 ForwardCache& cache) {
  const int d = cfg.state_dim;
  cache.pre.clear();
  cache.post.clear();
  cache.post.push_back(x);
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    Matrix z = layers[l].weight * cache.post.back();
    z.colwise() += layers[l].bias;
    cache.post.push_back(swish(z));
    cache.pre.push_back(std::move(z));
  }
  Matrix out = layers.back().weight * cache.post.back();
  out.colwise() += layers.back().bias;
  cache.mean = out.topRows(d);
  cache.raw_log_var = out.bottomRows(d);
  const double hi = cfg.log_var_max;
  const double lo = cfg.log_var_min;
  cache.clamped_upper = cache.raw_log_var.unaryExpr([hi](double r) { return hi - softplus(hi - r); });
  cache.log_var = cache.clamped_upper.unaryExpr([lo](double u) { return lo + softplus(u - lo); });
}

Vector safe_std(const Vector& v) {
  return v.unaryExpr([](double s) { return s < 1e-6 ? 1.0 : s; });
}

// Adam moments for one member.
struct AdamState {
  std::vector<DenseLayer> m;
  std::vector<DenseLayer> v;
  long step = 0;

  explicit AdamState(const std::vector<DenseLayer>& layers) {
    for (const auto& l : layers) {
      m.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
    }
    v = m;
  }

  void apply(std::vector<DenseLayer>& layers, const std::vector<DenseLayer>& grad, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++step;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    auto update = [&](auto& param, auto& mom, auto& var, const auto& g) {
      mom = b1 * mom + (1.0 - b1) * g;
      var = b2 * var + (1.0 - b2) * g.cwiseProduct(g);
      param.array() -= lr * (mom.array() / c1) / ((var.array() / c2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
      update(layers[l].weight, m[l].weight, v[l].weight, grad[l].weight);
      update(layers[l].bias, m[l].bias, v[l].bias, grad[l].bias);
    }
  }
};

double full_loss(const GaussianNet& net, const Matrix& x, const Matrix& y) {
  Matrix mean, log_var;
  net.forward(x, mean, log_var);
  const Matrix diff = mean - y;
  return ((diff.array().square() * (-log_var.array()).exp()) + log_var.array()).sum() /
         static_cast<double>(x.cols());
}

std::uint64_t member_seed(const std::vector<std::uint64_t>& explicit_seeds, std::uint64_t base,
                          std::uint64_t stream, int member) {
  if (!explicit_seeds.empty()) return explicit_seeds.at(static_cast<std::size_t>(member));
  return derive_seed(base, stream * 1000003ULL + static_cast<std::uint64_t>(member));
}

}  // namespace

Normalizer Normalizer::identity(int input_dim, int target_dim) {
  return {Vector::Zero(input_dim), Vector::Ones(input_dim), Vector::Zero(target_dim),
          Vector::Ones(target_dim)};
}

GaussianNet::GaussianNet(NetConfig config, Rng& init_rng) : config_(std::move(config)) {
  if (config_.state_dim < 1 || config_.action_dim < 0) {
    throw Error(ErrorKind::InvalidArgument, "network needs a positive state dimension");
  }
  std::vector<int> dims;
  dims.push_back(config_.input_dim());
  dims.insert(dims.end(), config_.hidden.begin(), config_.hidden.end());
  dims.push_back(2 * config_.state_dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    DenseLayer layer{Matrix(dims[l + 1], dims[l]), Vector::Zero(dims[l + 1])};
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight(i) = scale * normal(init_rng);
    layers_.push_back(std::move(layer));
  }
  norm_ = Normalizer::identity(config_.input_dim(), config_.state_dim);
}

void GaussianNet::forward(const Matrix& inputs, Matrix& mean, Matrix& log_var) const {
  ForwardCache cache;
  run_forward(layers_, config_, inputs, cache);
  mean = std::move(cache.mean);
  log_var = std::move(cache.log_var);
}

Matrix GaussianNet::normalize_inputs(const Matrix& states, const Matrix& actions) const {
  if (states.rows() != config_.state_dim || actions.rows() != config_.action_dim ||
      states.cols() != actions.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "state/action dimensions do not match the network");
  }
  Matrix x(config_.input_dim(), states.cols());
  x.topRows(config_.state_dim) = states;
  x.bottomRows(config_.action_dim) = actions;
  x.colwise() -= norm_.input_mean;
  x.array().colwise() /= norm_.input_std.array();
  return x;
}

Matrix GaussianNet::normalize_targets(const Matrix& states, const Matrix& next_states) const {
  Matrix y = config_.predict_delta ? Matrix(next_states - states) : next_states;
  y.colwise() -= norm_.target_mean;
  y.array().colwise() /= norm_.target_std.array();
  return y;
}

void GaussianNet::predict_mean(const Matrix& states, const Matrix& actions,
                               Matrix& next_mean) const {
  Matrix h = normalize_inputs(states, actions);
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    Matrix z = layers_[l].weight * h;
    z.colwise() += layers_[l].bias;
    h = swish(z);
  }
  const auto& last = layers_.back();
  const int d = config_.state_dim;
  Matrix mean = last.weight.topRows(d) * h;
  mean.colwise() += last.bias.head(d);
  mean.array().colwise() *= norm_.target_std.array();
  mean.colwise() += norm_.target_mean;
  if (config_.predict_delta) mean += states;
  next_mean = std::move(mean);
}

void GaussianNet::predict(const Matrix& states, const Matrix& actions, Matrix& next_mean,
                          Matrix& next_var) const {
  Matrix mean, log_var;
  forward(normalize_inputs(states, actions), mean, log_var);
  mean.array().colwise() *= norm_.target_std.array();
  mean.colwise() += norm_.target_mean;
  if (config_.predict_delta) mean += states;
  next_mean = std::move(mean);
  next_var = log_var.array().exp();
  next_var.array().colwise() *= norm_.target_std.array().square();
}

std::size_t GaussianNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool GaussianNet::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(), [](const DenseLayer& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

bool operator==(const GaussianNet& a, const GaussianNet& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias) {
      return false;
    }
  }
  return a.norm_.input_mean == b.norm_.input_mean && a.norm_.input_std == b.norm_.input_std &&
         a.norm_.target_mean == b.norm_.target_mean && a.norm_.target_std == b.norm_.target_std;
}

double gaussian_nll(const Vector& mean, const Vector& log_var, const Vector& target) {
  const Vector diff = mean - target;
  return (diff.array().square() * (-log_var.array()).exp()).sum() + log_var.sum();
}

void stack_tuples(std::span<const TransitionTuple> tuples, Matrix& states, Matrix& actions,
                  Matrix& next_states) {
  if (tuples.empty()) throw Error(ErrorKind::EmptySlice, "no transitions");
  const auto n = static_cast<Eigen::Index>(tuples.size());
  states.resize(tuples.front().state.size(), n);
  actions.resize(tuples.front().action.size(), n);
  next_states.resize(tuples.front().next_state.size(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = tuples[static_cast<std::size_t>(i)];
    if (t.state.size() != states.rows() || t.action.size() != actions.rows() ||
        t.next_state.size() != next_states.rows()) {
      throw Error(ErrorKind::ShapeMismatch, "transition tuples have inconsistent dimensions");
    }
    states.col(i) = t.state;
    actions.col(i) = t.action;
    next_states.col(i) = t.next_state;
  }
}

LossAndGradient nll_loss(const GaussianNet& net, const Matrix& inputs, const Matrix& targets) {
  if (inputs.cols() == 0) throw Error(ErrorKind::EmptySlice, "empty batch");
  const auto& cfg = net.config();
  const auto& layers = net.layers();
  ForwardCache c;
  run_forward(layers, cfg, inputs, c);

  const double n = static_cast<double>(inputs.cols());
  const Matrix inv_var = (-c.log_var.array()).exp();
  const Matrix diff = c.mean - targets;
  LossAndGradient out;
  out.loss = ((diff.array().square() * inv_var.array()) + c.log_var.array()).sum() / n;
  if (!std::isfinite(out.loss)) throw Error(ErrorKind::NumericalFailure, "non-finite NLL");

  const int d = cfg.state_dim;
  const double lo = cfg.log_var_min;
  const double hi = cfg.log_var_max;
  Matrix d_out(2 * d, inputs.cols());
  d_out.topRows(d) = (2.0 / n) * diff.cwiseProduct(inv_var);
  Matrix d_log_var = (1.0 - diff.array().square() * inv_var.array()) / n;
  d_log_var.array() *= c.clamped_upper.unaryExpr([lo](double u) { return sigmoid(u - lo); }).array();
  d_log_var.array() *= c.raw_log_var.unaryExpr([hi](double r) { return sigmoid(hi - r); }).array();
  d_out.bottomRows(d) = d_log_var;

  out.gradient.resize(layers.size());
  Matrix delta = std::move(d_out);
  for (std::size_t l = layers.size(); l-- > 0;) {
    out.gradient[l].weight = delta * c.post[l].transpose();
    out.gradient[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Matrix back = layers[l].weight.transpose() * delta;
    delta = back.cwiseProduct(swish_grad(c.pre[l - 1]));
  }
  return out;
}

LossAndGradient nll_loss(const GaussianNet& net, std::span<const TransitionTuple> batch) {
  if (batch.empty()) throw Error(ErrorKind::EmptySlice, "empty batch");
  Matrix s, a, sn;
  stack_tuples(batch, s, a, sn);
  return nll_loss(net, net.normalize_inputs(s, a), net.normalize_targets(s, sn));
}

Normalizer fit_normalizer(std::span<const TransitionTuple> buffer, const NetConfig& net) {
  Matrix s, a, sn;
  stack_tuples(buffer, s, a, sn);
  Matrix x(net.input_dim(), s.cols());
  x.topRows(net.state_dim) = s;
  x.bottomRows(net.action_dim) = a;
  const Matrix y = net.predict_delta ? Matrix(sn - s) : sn;
  auto moments = [](const Matrix& m, Vector& mean, Vector& std) {
    mean = m.rowwise().mean();
    const Matrix centered = m.colwise() - mean;
    std = (centered.array().square().rowwise().sum() / static_cast<double>(m.cols())).sqrt();
    std = safe_std(std);
  };
  Normalizer norm;
  moments(x, norm.input_mean, norm.input_std);
  moments(y, norm.target_mean, norm.target_std);
  return norm;
}

GaussianEnsemble init_ensemble(const TrainConfig& config) {
  if (config.ensemble_size < 1) throw Error(ErrorKind::InvalidArgument, "ensemble size must be >= 1");
  GaussianEnsemble ens;
  for (int k = 0; k < config.ensemble_size; ++k) {
    Rng rng(member_seed(config.init_seeds, config.seed, 1, k));
    ens.members.emplace_back(config.net, rng);
  }
  return ens;
}

TrainResult train_ensemble(std::span<const TransitionTuple> buffer, const TrainConfig& config,
                           const GaussianEnsemble* warm_start) {
  if (buffer.empty()) throw Error(ErrorKind::EmptyBuffer, "cannot train on an empty buffer");
  if (config.batch_size < 1 || config.epochs < 0 || config.updates_per_epoch < 0 ||
      config.loss_eval_size < 0) {
    throw Error(ErrorKind::InvalidArgument, "batch size must be >= 1 and epochs >= 0");
  }
  TrainResult result;
  result.ensemble = warm_start ? *warm_start : init_ensemble(config);
  if (result.ensemble.size() != config.ensemble_size) {
    throw Error(ErrorKind::ShapeMismatch, "warm-start ensemble size differs from config");
  }
  const int k_members = config.ensemble_size;
  result.final_loss.assign(k_members, 0.0);
  result.epoch_losses.assign(k_members, {});

  const Normalizer norm = fit_normalizer(buffer, config.net);
  Matrix s, a, sn;
  stack_tuples(buffer, s, a, sn);

  std::vector<char> monotone(k_members, 1);
  auto train_member = [&](int k) {
    GaussianNet& net = result.ensemble.members[k];
    net.normalizer() = norm;
    const Matrix x = net.normalize_inputs(s, a);
    const Matrix y = net.normalize_targets(s, sn);
    const auto n = static_cast<int>(x.cols());
    Matrix x_eval, y_eval;
    const bool subsample = config.loss_eval_size > 0 && n > config.loss_eval_size;
    if (subsample) {
      const int stride = (n + config.loss_eval_size - 1) / config.loss_eval_size;
      std::vector<int> idx;
      for (int i = 0; i < n; i += stride) idx.push_back(i);
      x_eval = x(Eigen::all, idx);
      y_eval = y(Eigen::all, idx);
    }

    Rng shuffle_rng(member_seed(config.shuffle_seeds, config.seed, 2, k));
    AdamState adam(net.layers());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<int> batch_idx;
    int cursor = n;  // forces a shuffle before the first batch
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      const int per_epoch = config.updates_per_epoch > 0
                                ? config.updates_per_epoch
                                : (n + config.batch_size - 1) / config.batch_size;
      if (config.updates_per_epoch == 0) cursor = n;
      for (int u = 0; u < per_epoch; ++u) {
        if (cursor >= n) {
          std::shuffle(order.begin(), order.end(), shuffle_rng);
          cursor = 0;
        }
        const int end = std::min(n, cursor + config.batch_size);
        batch_idx.assign(order.begin() + cursor, order.begin() + end);
        cursor = end;
        const Matrix xb = x(Eigen::all, batch_idx);
        const Matrix yb = y(Eigen::all, batch_idx);
        const auto lg = nll_loss(net, xb, yb);
        adam.apply(net.layers(), lg.gradient, config.step_size);
      }
      const double loss = subsample ? full_loss(net, x_eval, y_eval) : full_loss(net, x, y);
      if (!std::isfinite(loss)) throw Error(ErrorKind::NumericalFailure, "training diverged");
      auto& hist = result.epoch_losses[k];
      if (hist.size() >= 1 && loss > hist.back() + 1e-6) monotone[k] = 0;
      hist.push_back(loss);
    }
    result.final_loss[k] = full_loss(net, x, y);
  };

  const int workers = std::clamp(config.workers, 1, k_members);
  if (workers == 1) {
    for (int k = 0; k < k_members; ++k) train_member(k);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    {
      std::vector<std::jthread> pool;
      for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (int k = next++; k < k_members; k = next++) {
            try {
              train_member(k);
            } catch (...) {
              std::lock_guard lock(mu);
              if (!failure) failure = std::current_exception();
            }
          }
        });
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  result.loss_monotone = std::all_of(monotone.begin(), monotone.end(), [](char c) { return c != 0; });
  return result;
}

EnsemblePrediction predict(const GaussianEnsemble& ensemble, const Vector& state,
                           const Vector& action) {
  if (ensemble.members.empty()) throw Error(ErrorKind::InvalidArgument, "empty ensemble");
  EnsemblePrediction out;
  out.mean = Vector::Zero(ensemble.state_dim());
  for (const auto& net : ensemble.members) {
    Matrix m, v;
    net.predict(state, action, m, v);
    out.member_means.push_back(m.col(0));
    out.member_vars.push_back(v.col(0));
    out.mean += m.col(0);
  }
  out.mean /= static_cast<double>(ensemble.size());
  return out;
}

Matrix predict_mean(const GaussianEnsemble& ensemble, const Matrix& states, const Matrix& actions) {
  if (ensemble.members.empty()) throw Error(ErrorKind::InvalidArgument, "empty ensemble");
  Matrix total = Matrix::Zero(states.rows(), states.cols());
  Matrix m;
  for (const auto& net : ensemble.members) {
    net.predict_mean(states, actions, m);
    total += m;
  }
  return total / static_cast<double>(ensemble.size());
}

double one_step_error(const GaussianEnsemble& ensemble, std::span<const TransitionTuple> tuples) {
  if (tuples.empty()) throw Error(ErrorKind::EmptySlice, "no fresh transitions");
  if (ensemble.members.empty()) throw Error(ErrorKind::InvalidArgument, "empty ensemble");
  Matrix s, a, sn;
  stack_tuples(tuples, s, a, sn);
  Vector per_tuple = Vector::Zero(s.cols());
  Matrix m, v;
  for (const auto& net : ensemble.members) {
    net.predict(s, a, m, v);
    per_tuple += (sn - m).colwise().norm().transpose();
  }
  return per_tuple.sum() / (static_cast<double>(ensemble.size()) * static_cast<double>(s.cols()));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

nlohmann::json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vec(const nlohmann::json& j) {
  const auto raw = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(raw.data(), static_cast<Eigen::Index>(raw.size()));
}

}  // namespace

std::string to_json(const GaussianEnsemble& ensemble) {
  nlohmann::json doc;
  doc["format"] = "cmlo-ensemble";
  doc["version"] = 1;
  doc["K"] = ensemble.size();
  nlohmann::json members = nlohmann::json::array();
  for (const auto& net : ensemble.members) {
    const auto& cfg = net.config();
    nlohmann::json m;
    m["state_dim"] = cfg.state_dim;
    m["action_dim"] = cfg.action_dim;
    m["hidden"] = cfg.hidden;
    m["log_var_min"] = cfg.log_var_min;
    m["log_var_max"] = cfg.log_var_max;
    m["predict_delta"] = cfg.predict_delta;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers()) {
      // Column-major, matching Eigen's storage.
      layers.push_back({{"rows", l.weight.rows()},
                        {"cols", l.weight.cols()},
                        {"weight", std::vector<double>(l.weight.data(), l.weight.data() + l.weight.size())},
                        {"bias", vec_json(l.bias)}});
    }
    m["layers"] = std::move(layers);
    const auto& norm = net.normalizer();
    m["normalizer"] = {{"input_mean", vec_json(norm.input_mean)},
                       {"input_std", vec_json(norm.input_std)},
                       {"target_mean", vec_json(norm.target_mean)},
                       {"target_std", vec_json(norm.target_std)}};
    members.push_back(std::move(m));
  }
  doc["members"] = std::move(members);
  return doc.dump();
}

GaussianEnsemble ensemble_from_json(const std::string& text) {
  GaussianEnsemble ens;
  try {
    const auto doc = nlohmann::json::parse(text);
    if (doc.at("format").get<std::string>() != "cmlo-ensemble" || doc.at("version").get<int>() != 1) {
      throw Error(ErrorKind::InvalidConfig, "unsupported ensemble checkpoint format");
    }
    for (const auto& m : doc.at("members")) {
      NetConfig cfg;
      cfg.state_dim = m.at("state_dim").get<int>();
      cfg.action_dim = m.at("action_dim").get<int>();
      cfg.hidden = m.at("hidden").get<std::vector<int>>();
      cfg.log_var_min = m.at("log_var_min").get<double>();
      cfg.log_var_max = m.at("log_var_max").get<double>();
      cfg.predict_delta = m.at("predict_delta").get<bool>();
      Rng unused(0);
      GaussianNet net(cfg, unused);
      auto& layers = net.layers();
      const auto& jl = m.at("layers");
      if (jl.size() != layers.size()) throw Error(ErrorKind::InvalidConfig, "layer count mismatch");
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto w = jl[l].at("weight").get<std::vector<double>>();
        const auto rows = jl[l].at("rows").get<Eigen::Index>();
        const auto cols = jl[l].at("cols").get<Eigen::Index>();
        if (rows != layers[l].weight.rows() || cols != layers[l].weight.cols() ||
            static_cast<Eigen::Index>(w.size()) != rows * cols) {
          throw Error(ErrorKind::InvalidConfig, "layer shape mismatch");
        }
        layers[l].weight = Eigen::Map<const Matrix>(w.data(), rows, cols);
        layers[l].bias = json_vec(jl[l].at("bias"));
      }
      const auto& jn = m.at("normalizer");
      net.normalizer() = {json_vec(jn.at("input_mean")), json_vec(jn.at("input_std")),
                          json_vec(jn.at("target_mean")), json_vec(jn.at("target_std"))};
      ens.members.push_back(std::move(net));
    }
    if (static_cast<int>(ens.members.size()) != doc.at("K").get<int>()) {
      throw Error(ErrorKind::InvalidConfig, "member count does not match K");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("malformed ensemble checkpoint: ") + e.what());
  }
  return ens;
}

}  // namespace cmlo::nn
