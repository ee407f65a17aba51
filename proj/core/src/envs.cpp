#include "cmlo/envs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "cmlo/error.hpp"
#include "json.hpp"

namespace cmlo::env {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Tabular instances

mdp::TabularMdp random_mdp(int n_states, int n_actions, std::uint64_t seed, double sparsity,
                           double gamma) {
  if (n_states < 1 || n_actions < 1) {
    throw Error(ErrorKind::InvalidArgument, "random_mdp needs positive counts");
  }
  if (!(sparsity > 0.0 && sparsity <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "sparsity must lie in (0,1]");
  }
  Rng rng = make_rng(seed, 0x7ab1e);
  std::gamma_distribution<double> unit_gamma(1.0, 1.0);

  mdp::TabularMdp m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  m.reward_bound = 1.0;
  const auto pairs = static_cast<std::size_t>(n_states) * n_actions;
  m.transition.assign(pairs * n_states, 0.0);
  m.reward.resize(pairs);

  const int support = std::max(1, static_cast<int>(std::ceil(sparsity * n_states - 1e-12)));
  std::vector<int> order(n_states);
  for (std::size_t pair = 0; pair < pairs; ++pair) {
    std::iota(order.begin(), order.end(), 0);
    // Partial Fisher-Yates for the support set.
    for (int i = 0; i < support; ++i) {
      const int j = i + static_cast<int>(uniform01(rng) * (n_states - i));
      std::swap(order[i], order[std::min(j, n_states - 1)]);
    }
    double total = 0.0;
    std::vector<double> w(support);
    for (int i = 0; i < support; ++i) {
      w[i] = unit_gamma(rng);
      total += w[i];
    }
    if (total <= 0.0) {
      w.assign(support, 1.0);
      total = support;
    }
    double* row = m.transition.data() + pair * n_states;
    for (int i = 0; i < support; ++i) row[order[i]] = w[i] / total;
    m.reward[pair] = 2.0 * uniform01(rng) - 1.0;
  }
  return m;
}

mdp::TabularMdp chain_mdp(int n_states, double slip, double gamma) {
  if (n_states < 1) throw Error(ErrorKind::InvalidArgument, "chain needs at least one state");
  mdp::TabularMdp m;
  m.n_states = n_states;
  m.n_actions = 2;
  m.gamma = gamma;
  m.reward_bound = 1.0;
  m.transition.assign(static_cast<std::size_t>(n_states) * 2 * n_states, 0.0);
  m.reward.assign(static_cast<std::size_t>(n_states) * 2, 0.0);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < 2; ++a) {
      const int target = a == 0 ? std::max(0, s - 1) : std::min(n_states - 1, s + 1);
      double* row = m.transition.data() + m.pair_index(s, a) * n_states;
      row[target] += 1.0 - slip;
      row[s] += slip;
      if (s == n_states - 1) m.reward[m.pair_index(s, a)] = 1.0;
    }
  }
  return m;
}

mdp::TabularMdp gridworld_mdp(int width, int height, double slip, double gamma) {
  if (width < 1 || height < 1) throw Error(ErrorKind::InvalidArgument, "empty grid");
  const int n = width * height;
  mdp::TabularMdp m;
  m.n_states = n;
  m.n_actions = 4;
  m.gamma = gamma;
  m.reward_bound = 1.0;
  m.transition.assign(static_cast<std::size_t>(n) * 4 * n, 0.0);
  m.reward.assign(static_cast<std::size_t>(n) * 4, 0.0);
  constexpr int dx[4] = {0, 1, 0, -1};
  constexpr int dy[4] = {-1, 0, 1, 0};
  auto move = [&](int s, int dir) {
    const int x = std::clamp(s % width + dx[dir], 0, width - 1);
    const int y = std::clamp(s / width + dy[dir], 0, height - 1);
    return y * width + x;
  };
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < 4; ++a) {
      double* row = m.transition.data() + m.pair_index(s, a) * n;
      row[move(s, a)] += 1.0 - slip;
      for (int d = 0; d < 4; ++d) row[move(s, d)] += slip / 4.0;
      if (s == n - 1) m.reward[m.pair_index(s, a)] = 1.0;
    }
  }
  return m;
}

int sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double cum = 0.0;
  int last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cum += probs[i];
    last_positive = static_cast<int>(i);
    if (u < cum) return static_cast<int>(i);
  }
  return last_positive;  // rounding slack at the top of the CDF
}

GenerativeSampler::GenerativeSampler(const mdp::TabularMdp& truth, std::uint64_t seed)
    : truth_(&truth), rng_(make_rng(seed, 0x5a3b1e)) {}

int GenerativeSampler::draw_one(int s, int a) {
  if (s < 0 || s >= truth_->n_states || a < 0 || a >= truth_->n_actions) {
    throw Error(ErrorKind::InvalidArgument, "state-action pair out of range");
  }
  return sample_categorical(truth_->row(s, a), rng_);
}

std::vector<std::int64_t> GenerativeSampler::draw(int s, int a, std::int64_t n) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "need at least one draw");
  std::vector<std::int64_t> counts(truth_->n_states, 0);
  for (std::int64_t i = 0; i < n; ++i) ++counts[draw_one(s, a)];
  return counts;
}

std::vector<std::int64_t> GenerativeSampler::draw_all(std::int64_t n) {
  const int ns = truth_->n_states;
  std::vector<std::int64_t> counts(static_cast<std::size_t>(ns) * truth_->n_actions * ns, 0);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < truth_->n_actions; ++a) {
      auto c = draw(s, a, n);
      std::copy(c.begin(), c.end(), counts.begin() + truth_->pair_index(s, a) * ns);
    }
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Environment basics

void EnvSpec::validate() const {
  if (horizon < 1) throw Error(ErrorKind::InvalidConfig, "horizon must be >= 1");
  if (reward_bound < 0.0) throw Error(ErrorKind::InvalidConfig, "reward bound must be >= 0");
  if (static_cast<int>(action_low.size()) != action_dim ||
      static_cast<int>(action_high.size()) != action_dim) {
    throw Error(ErrorKind::InvalidConfig, "action bounds must match action_dim");
  }
}

Vec Environment::clip_action(const Vec& action, bool* clipped) const {
  const auto& sp = spec();
  if (action.size() != sp.action_dim) {
    throw Error(ErrorKind::ShapeMismatch, "action dimension mismatch");
  }
  Vec out = action;
  bool any = false;
  for (int i = 0; i < sp.action_dim; ++i) {
    const double v = std::clamp(action(i), sp.action_low[i], sp.action_high[i]);
    any = any || v != action(i);
    out(i) = v;
  }
  if (clipped) *clipped = any;
  return out;
}

// ---------------------------------------------------------------------------
// Pendulum

double wrap_angle(double theta) {
  constexpr double pi = std::numbers::pi;
  double w = std::fmod(theta + pi, 2.0 * pi);
  if (w <= 0.0) w += 2.0 * pi;
  return w - pi;  // (-pi, pi]
}

double pendulum_reward(const Vec& state, double torque) {
  const double th = wrap_angle(state(0));
  return -(th * th + 0.1 * state(1) * state(1) + 0.001 * torque * torque);
}

StepResult pendulum_step(const Vec& state, double torque, const PendulumConstants& c) {
  StepResult out;
  const double u = std::clamp(torque, -c.max_torque, c.max_torque);
  out.clipped = u != torque;
  out.reward = pendulum_reward(state, u);
  const double accel = (c.g / c.l) * std::sin(state(0)) + u / (c.m * c.l * c.l);
  const double omega = std::clamp(state(1) + c.dt * accel, -c.max_speed, c.max_speed);
  out.next_state = Vec(2);
  out.next_state << wrap_angle(state(0) + c.dt * omega), omega;
  out.done = false;
  return out;
}

Pendulum::Pendulum(PendulumConstants constants) : constants_(constants) {
  spec_.name = "pendulum";
  spec_.version = "1";
  spec_.state_dim = 2;
  spec_.action_dim = 1;
  spec_.action_low = {-constants_.max_torque};
  spec_.action_high = {constants_.max_torque};
  spec_.horizon = constants_.horizon;
  spec_.terminal = "never";
  spec_.reward_bound = std::numbers::pi * std::numbers::pi +
                       0.1 * constants_.max_speed * constants_.max_speed +
                       0.001 * constants_.max_torque * constants_.max_torque;
  spec_.gamma = 0.99;
  spec_.constants = {{"g", constants_.g},
                     {"l", constants_.l},
                     {"m", constants_.m},
                     {"dt", constants_.dt},
                     {"max_torque", constants_.max_torque},
                     {"max_speed", constants_.max_speed}};
  spec_.validate();
}

Vec Pendulum::initial_state(Rng& rng) const {
  Vec s(2);
  s << wrap_angle(std::numbers::pi * (2.0 * uniform01(rng) - 1.0)), 2.0 * uniform01(rng) - 1.0;
  return s;
}

StepResult Pendulum::step(const Vec& state, const Vec& action, Rng&) const {
  if (state.size() != 2 || action.size() != 1) {
    throw Error(ErrorKind::ShapeMismatch, "pendulum expects 2-d state and 1-d action");
  }
  return pendulum_step(state, action(0), constants_);
}

double Pendulum::reward(const Vec& state, const Vec& action, const Vec&) const {
  return pendulum_reward(state, std::clamp(action(0), -constants_.max_torque, constants_.max_torque));
}

Vec Pendulum::canonicalize(const Vec& state) const {
  Vec s = state;
  s(0) = wrap_angle(s(0));
  s(1) = std::clamp(s(1), -constants_.max_speed, constants_.max_speed);
  return s;
}

Vec Pendulum::unwrap_successor(const Vec& state, const Vec& next) const {
  Vec out = next;
  out(0) = state(0) + wrap_angle(next(0) - state(0));
  return out;
}

std::optional<QuadraticCost> Pendulum::quadratic_cost() const {
  QuadraticCost cost;
  cost.state_weight = Eigen::Vector2d(1.0, 0.1).asDiagonal();
  cost.terminal_weight = cost.state_weight;
  cost.control_weight = Eigen::MatrixXd::Constant(1, 1, 0.001);
  cost.goal = Vec::Zero(2);
  return cost;
}

// ---------------------------------------------------------------------------
// Cart-pole

bool cartpole_done(const Vec& s, const CartPoleConstants& c) {
  return std::abs(s(2)) > c.theta_limit || std::abs(s(0)) > c.x_limit;
}

StepResult cartpole_step(const Vec& s, double force, const CartPoleConstants& c) {
  StepResult out;
  const double f = std::clamp(force, -c.force_max, c.force_max);
  out.clipped = f != force;
  const double total_mass = c.mass_cart + c.mass_pole;
  const double pole_ml = c.mass_pole * c.half_length;
  const double cos_t = std::cos(s(2));
  const double sin_t = std::sin(s(2));
  const double temp = (f + pole_ml * s(3) * s(3) * sin_t) / total_mass;
  const double theta_acc =
      (c.gravity * sin_t - cos_t * temp) /
      (c.half_length * (4.0 / 3.0 - c.mass_pole * cos_t * cos_t / total_mass));
  const double x_acc = temp - pole_ml * theta_acc * cos_t / total_mass;

  out.next_state = Vec(4);
  const double x_dot = s(1) + c.dt * x_acc;
  const double theta_dot = s(3) + c.dt * theta_acc;
  out.next_state << s(0) + c.dt * x_dot, x_dot, s(2) + c.dt * theta_dot, theta_dot;
  out.done = cartpole_done(out.next_state, c);
  out.reward = out.done ? 0.0 : 1.0;
  return out;
}

CartPole::CartPole(CartPoleConstants constants) : constants_(constants) {
  spec_.name = "cartpole";
  spec_.version = "1";
  spec_.state_dim = 4;
  spec_.action_dim = 1;
  spec_.action_low = {-constants_.force_max};
  spec_.action_high = {constants_.force_max};
  spec_.horizon = constants_.horizon;
  spec_.terminal = "|theta| > theta_limit or |x| > x_limit";
  spec_.reward_bound = 1.0;
  spec_.gamma = 0.99;
  spec_.constants = {{"gravity", constants_.gravity},         {"mass_cart", constants_.mass_cart},
                     {"mass_pole", constants_.mass_pole},     {"half_length", constants_.half_length},
                     {"force_max", constants_.force_max},     {"dt", constants_.dt},
                     {"theta_limit", constants_.theta_limit}, {"x_limit", constants_.x_limit}};
  spec_.validate();
}

Vec CartPole::initial_state(Rng& rng) const {
  Vec s(4);
  for (int i = 0; i < 4; ++i) s(i) = 0.1 * uniform01(rng) - 0.05;
  return s;
}

StepResult CartPole::step(const Vec& state, const Vec& action, Rng&) const {
  if (state.size() != 4 || action.size() != 1) {
    throw Error(ErrorKind::ShapeMismatch, "cartpole expects 4-d state and 1-d action");
  }
  return cartpole_step(state, action(0), constants_);
}

double CartPole::reward(const Vec&, const Vec&, const Vec& next_state) const {
  return cartpole_done(next_state, constants_) ? 0.0 : 1.0;
}

bool CartPole::terminal(const Vec& state) const { return cartpole_done(state, constants_); }

std::optional<QuadraticCost> CartPole::quadratic_cost() const {
  QuadraticCost cost;
  Vec w(4);
  w << 1.0, 0.1, 10.0, 0.1;
  cost.state_weight = w.asDiagonal();
  cost.terminal_weight = cost.state_weight;
  cost.control_weight = Eigen::MatrixXd::Constant(1, 1, 0.001);
  cost.goal = Vec::Zero(4);
  return cost;
}

// ---------------------------------------------------------------------------
// Tabular environment

TabularEnv::TabularEnv(mdp::TabularMdp mdp, std::vector<double> initial_dist, int horizon,
                       std::string name)
    : mdp_(std::move(mdp)), initial_dist_(std::move(initial_dist)) {
  mdp_.validate();
  mdp::EvalContext{initial_dist_}.validate(mdp_.n_states);
  spec_.name = std::move(name);
  spec_.version = "1";
  spec_.state_dim = mdp_.n_states;
  spec_.action_dim = 1;
  spec_.n_states = mdp_.n_states;
  spec_.n_actions = mdp_.n_actions;
  spec_.action_low = {0.0};
  spec_.action_high = {static_cast<double>(mdp_.n_actions - 1)};
  spec_.horizon = horizon;
  spec_.terminal = "never";
  spec_.reward_bound = mdp_.reward_bound;
  spec_.gamma = mdp_.gamma;
  spec_.validate();
}

Vec TabularEnv::one_hot(int s) const {
  Vec v = Vec::Zero(mdp_.n_states);
  v(s) = 1.0;
  return v;
}

int TabularEnv::state_index(const Vec& state) {
  Eigen::Index idx = 0;
  state.maxCoeff(&idx);
  return static_cast<int>(idx);
}

int TabularEnv::action_index(const Vec& action) const {
  const long a = std::lround(action(0));
  return static_cast<int>(std::clamp<long>(a, 0, mdp_.n_actions - 1));
}

Vec TabularEnv::initial_state(Rng& rng) const {
  return one_hot(sample_categorical(initial_dist_, rng));
}

StepResult TabularEnv::step(const Vec& state, const Vec& action, Rng& rng) const {
  const int s = state_index(state);
  const int a = action_index(action);
  StepResult out;
  out.clipped = action(0) != static_cast<double>(a);
  out.reward = mdp_.r(s, a);
  out.next_state = one_hot(sample_categorical(mdp_.row(s, a), rng));
  return out;
}

double TabularEnv::reward(const Vec& state, const Vec& action, const Vec&) const {
  return mdp_.r(state_index(state), action_index(action));
}

// ---------------------------------------------------------------------------
// Spec documents

namespace {

template <typename T>
void read_constant(const json& constants, const char* key, T& field) {
  if (constants.contains(key)) field = constants.at(key).get<T>();
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const char* where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* k) { return key == k; }) == allowed.end()) {
      throw Error(ErrorKind::InvalidConfig, std::string("unknown key '") + key + "' in " + where);
    }
  }
}

}  // namespace

std::unique_ptr<Environment> make_environment(const std::string& spec_text) {
  try {
    const json doc = json::parse(spec_text);
    const auto name = doc.at("name").get<std::string>();
    const json constants = doc.value("constants", json::object());
    if (name == "pendulum") {
      reject_unknown(doc, {"name", "version", "constants"}, "pendulum spec");
      reject_unknown(constants, {"g", "l", "m", "dt", "max_torque", "max_speed", "horizon"},
                     "pendulum constants");
      PendulumConstants c;
      read_constant(constants, "g", c.g);
      read_constant(constants, "l", c.l);
      read_constant(constants, "m", c.m);
      read_constant(constants, "dt", c.dt);
      read_constant(constants, "max_torque", c.max_torque);
      read_constant(constants, "max_speed", c.max_speed);
      read_constant(constants, "horizon", c.horizon);
      return std::make_unique<Pendulum>(c);
    }
    if (name == "cartpole") {
      reject_unknown(doc, {"name", "version", "constants"}, "cartpole spec");
      reject_unknown(constants,
                     {"gravity", "mass_cart", "mass_pole", "half_length", "force_max", "dt",
                      "theta_limit", "x_limit", "horizon"},
                     "cartpole constants");
      CartPoleConstants c;
      read_constant(constants, "gravity", c.gravity);
      read_constant(constants, "mass_cart", c.mass_cart);
      read_constant(constants, "mass_pole", c.mass_pole);
      read_constant(constants, "half_length", c.half_length);
      read_constant(constants, "force_max", c.force_max);
      read_constant(constants, "dt", c.dt);
      read_constant(constants, "theta_limit", c.theta_limit);
      read_constant(constants, "x_limit", c.x_limit);
      read_constant(constants, "horizon", c.horizon);
      return std::make_unique<CartPole>(c);
    }
    if (name == "tabular" || name == "chain" || name == "gridworld" || name == "random_mdp") {
      reject_unknown(doc, {"name", "version", "mdp", "initial_dist", "horizon", "n_states",
                           "n_actions", "seed", "sparsity", "gamma", "slip", "width", "height"},
                     "tabular spec");
      mdp::TabularMdp m;
      if (name == "tabular") {
        m = mdp::mdp_from_json(doc.at("mdp").dump());
      } else if (name == "chain") {
        m = chain_mdp(doc.at("n_states").get<int>(), doc.value("slip", 0.0),
                      doc.value("gamma", 0.9));
      } else if (name == "gridworld") {
        m = gridworld_mdp(doc.at("width").get<int>(), doc.at("height").get<int>(),
                          doc.value("slip", 0.0), doc.value("gamma", 0.9));
      } else {
        m = random_mdp(doc.at("n_states").get<int>(), doc.at("n_actions").get<int>(),
                       doc.value("seed", std::uint64_t{0}), doc.value("sparsity", 1.0),
                       doc.value("gamma", 0.9));
      }
      std::vector<double> mu = doc.contains("initial_dist")
                                   ? doc.at("initial_dist").get<std::vector<double>>()
                                   : mdp::EvalContext::uniform(m.n_states).initial_dist;
      return std::make_unique<TabularEnv>(std::move(m), std::move(mu), doc.value("horizon", 50),
                                          name);
    }
    throw Error(ErrorKind::InvalidConfig, "unknown environment '" + name + "'");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("malformed environment spec: ") + e.what());
  }
}

std::unique_ptr<Environment> load_environment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open environment spec " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return make_environment(buf.str());
}

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows) {
  if (rows.empty()) {
    out << "t,reward,done\n";
    return;
  }
  out << "t";
  for (Eigen::Index i = 0; i < rows.front().state.size(); ++i) out << ",s" << i;
  for (Eigen::Index i = 0; i < rows.front().action.size(); ++i) out << ",a" << i;
  out << ",reward,done\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.t;
    for (Eigen::Index i = 0; i < r.state.size(); ++i) out << ',' << r.state(i);
    for (Eigen::Index i = 0; i < r.action.size(); ++i) out << ',' << r.action(i);
    out << ',' << r.reward << ',' << (r.done ? 1 : 0) << '\n';
  }
}

}  // namespace cmlo::env
