#include "cmlo/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "cmlo/error.hpp"
#include "json.hpp"

namespace cmlo::mdp {

namespace {

constexpr double kRowTol = 1e-12;

void check_same_spaces(const TabularMdp& a, const TabularMdp& b) {
  if (a.n_states != b.n_states || a.n_actions != b.n_actions) {
    throw Error(ErrorKind::ShapeMismatch, "MDPs have different state/action spaces");
  }
}

void check_policy_shape(const TabularMdp& mdp, const TabularPolicy& policy) {
  if (policy.n_states != mdp.n_states || policy.n_actions != mdp.n_actions ||
      policy.probs.size() != static_cast<std::size_t>(mdp.n_states) * mdp.n_actions) {
    throw Error(ErrorKind::ShapeMismatch, "policy shape does not match MDP");
  }
}

// P_pi(s, s') and r_pi(s) under a stochastic policy.
void policy_kernel(const TabularMdp& mdp, const TabularPolicy& policy, Eigen::MatrixXd& p_pi,
                   Eigen::VectorXd& r_pi) {
  const int n = mdp.n_states;
  p_pi.setZero(n, n);
  r_pi.setZero(n);
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double w = policy.prob(s, a);
      if (w == 0.0) continue;
      r_pi(s) += w * mdp.r(s, a);
      auto row = mdp.row(s, a);
      for (int next = 0; next < n; ++next) p_pi(s, next) += w * row[next];
    }
  }
}

double weighted(std::span<const double> mu, std::span<const double> values) {
  double total = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) total += mu[i] * values[i];
  return total;
}

}  // namespace

void TabularMdp::validate() const {
  if (n_states <= 0 || n_actions <= 0) {
    throw Error(ErrorKind::InvalidArgument, "state and action counts must be positive");
  }
  const auto pairs = static_cast<std::size_t>(n_states) * n_actions;
  if (transition.size() != pairs * n_states || reward.size() != pairs) {
    throw Error(ErrorKind::ShapeMismatch, "transition/reward tensor sizes inconsistent");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "gamma must lie in (0,1)");
  }
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double sum = 0.0;
      for (double v : row(s, a)) {
        if (v < 0.0 || !std::isfinite(v)) {
          throw Error(ErrorKind::InvalidArgument, "negative or non-finite transition entry");
        }
        sum += v;
      }
      if (std::abs(sum - 1.0) > kRowTol) {
        std::ostringstream msg;
        msg << "transition row (" << s << "," << a << ") sums to " << sum;
        throw Error(ErrorKind::InvalidArgument, msg.str());
      }
      if (std::abs(r(s, a)) > reward_bound) {
        throw Error(ErrorKind::InvalidArgument, "reward exceeds declared bound");
      }
    }
  }
}

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
  TabularPolicy pi{n_states, n_actions, {}};
  pi.probs.assign(static_cast<std::size_t>(n_states) * n_actions, 1.0 / n_actions);
  return pi;
}

TabularPolicy TabularPolicy::deterministic(int n_states, int n_actions,
                                           std::span<const int> actions) {
  if (actions.size() != static_cast<std::size_t>(n_states)) {
    throw Error(ErrorKind::ShapeMismatch, "one action per state required");
  }
  TabularPolicy pi{n_states, n_actions, {}};
  pi.probs.assign(static_cast<std::size_t>(n_states) * n_actions, 0.0);
  for (int s = 0; s < n_states; ++s) {
    if (actions[s] < 0 || actions[s] >= n_actions) {
      throw Error(ErrorKind::InvalidArgument, "action index out of range");
    }
    pi.probs[static_cast<std::size_t>(s) * n_actions + actions[s]] = 1.0;
  }
  return pi;
}

void TabularPolicy::validate() const {
  if (probs.size() != static_cast<std::size_t>(n_states) * n_actions) {
    throw Error(ErrorKind::ShapeMismatch, "policy tensor size inconsistent");
  }
  for (int s = 0; s < n_states; ++s) {
    double sum = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      if (prob(s, a) < 0.0) throw Error(ErrorKind::InvalidArgument, "negative action probability");
      sum += prob(s, a);
    }
    if (std::abs(sum - 1.0) > kRowTol) {
      throw Error(ErrorKind::InvalidArgument, "policy row does not sum to 1");
    }
  }
}

EvalContext EvalContext::uniform(int n_states) {
  return EvalContext{std::vector<double>(n_states, 1.0 / n_states)};
}

void EvalContext::validate(int n_states) const {
  if (initial_dist.size() != static_cast<std::size_t>(n_states)) {
    throw Error(ErrorKind::ShapeMismatch, "initial distribution length mismatch");
  }
  double sum = 0.0;
  for (double v : initial_dist) {
    if (v < 0.0) throw Error(ErrorKind::InvalidArgument, "negative initial probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kRowTol) {
    throw Error(ErrorKind::InvalidArgument, "initial distribution does not sum to 1");
  }
}

TabularMdp build_empirical_model(std::span<const std::int64_t> sample_counts, int n_states,
                                 int n_actions, std::span<const double> reward, double gamma,
                                 double reward_bound) {
  const auto pairs = static_cast<std::size_t>(n_states) * n_actions;
  if (sample_counts.size() != pairs * n_states || reward.size() != pairs) {
    throw Error(ErrorKind::ShapeMismatch, "count/reward tensor sizes inconsistent");
  }
  TabularMdp m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.reward.assign(reward.begin(), reward.end());
  m.gamma = gamma;
  m.reward_bound = reward_bound;
  m.transition.resize(pairs * n_states);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      const std::size_t base = m.pair_index(s, a) * n_states;
      std::int64_t total = 0;
      for (int next = 0; next < n_states; ++next) total += sample_counts[base + next];
      if (total <= 0) {
        std::ostringstream msg;
        msg << "no samples for (s=" << s << ", a=" << a << ")";
        throw Error(ErrorKind::MissingSamples, msg.str());
      }
      for (int next = 0; next < n_states; ++next) {
        m.transition[base + next] =
            static_cast<double>(sample_counts[base + next]) / static_cast<double>(total);
      }
    }
  }
  return m;
}

PolicyEvaluation policy_evaluation(const TabularMdp& mdp, const TabularPolicy& policy,
                                   const EvalContext& ctx) {
  check_policy_shape(mdp, policy);
  ctx.validate(mdp.n_states);
  const int n = mdp.n_states;

  Eigen::MatrixXd p_pi;
  Eigen::VectorXd r_pi;
  policy_kernel(mdp, policy, p_pi, r_pi);

  Eigen::VectorXd v;
  double residual = 0.0;
  if (n <= kDirectSolveLimit) {
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - mdp.gamma * p_pi;
    v = system.partialPivLu().solve(r_pi);
    residual = (r_pi + mdp.gamma * p_pi * v - v).cwiseAbs().maxCoeff();
  } else {
    v = Eigen::VectorXd::Zero(n);
    for (int it = 0; it < 1'000'000; ++it) {
      Eigen::VectorXd next = r_pi + mdp.gamma * p_pi * v;
      residual = (next - v).cwiseAbs().maxCoeff();
      v.swap(next);
      if (residual <= 1e-12) break;
    }
  }

  PolicyEvaluation out;
  out.table.values.assign(v.data(), v.data() + n);
  out.table.residual = residual;
  out.expected_return = weighted(ctx.initial_dist, out.table.values);
  return out;
}

double eps_opt_certificate(double gamma, double tol) { return 2.0 * gamma * tol / (1.0 - gamma); }

ValueIterationResult value_iteration(const TabularMdp& mdp, double tol, const EvalContext& ctx,
                                     int max_iterations) {
  if (!(tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "tolerance must be positive");
  ctx.validate(mdp.n_states);
  const int n = mdp.n_states;
  const int na = mdp.n_actions;

  std::vector<double> v(n, 0.0), next(n, 0.0);
  double residual = 0.0;
  int it = 0;
  for (; it < max_iterations; ++it) {
    residual = 0.0;
    for (int s = 0; s < n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < na; ++a) {
        auto row = mdp.row(s, a);
        double q = mdp.r(s, a) + mdp.gamma * std::inner_product(row.begin(), row.end(), v.begin(), 0.0);
        best = std::max(best, q);
      }
      next[s] = best;
      residual = std::max(residual, std::abs(best - v[s]));
    }
    v.swap(next);
    if (residual <= tol) {
      ++it;
      break;
    }
  }
  if (residual > tol) {
    throw Error(ErrorKind::ConvergenceFailure, "value iteration hit its iteration cap");
  }

  ValueIterationResult out;
  out.iterations = it;
  out.greedy_actions.resize(n);
  for (int s = 0; s < n; ++s) {
    int best_a = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < na; ++a) {
      auto row = mdp.row(s, a);
      double q = mdp.r(s, a) + mdp.gamma * std::inner_product(row.begin(), row.end(), v.begin(), 0.0);
      if (q > best) {  // strict: lowest index wins ties
        best = q;
        best_a = a;
      }
    }
    out.greedy_actions[s] = best_a;
  }
  out.greedy = TabularPolicy::deterministic(n, na, out.greedy_actions);
  out.table.values = v;
  out.table.residual = residual;
  out.eps_opt_certificate = eps_opt_certificate(mdp.gamma, tol);
  out.table_return = weighted(ctx.initial_dist, v);
  out.greedy_return = policy_evaluation(mdp, out.greedy, ctx).expected_return;
  return out;
}

Visitation visitation_distribution(const TabularMdp& mdp, const TabularPolicy& policy,
                                   const EvalContext& ctx) {
  check_policy_shape(mdp, policy);
  ctx.validate(mdp.n_states);
  const int n = mdp.n_states;
  const int na = mdp.n_actions;

  Eigen::MatrixXd p_pi;
  Eigen::VectorXd r_pi;
  policy_kernel(mdp, policy, p_pi, r_pi);
  Eigen::MatrixXd p_pi_t = p_pi.transpose();

  // Smallest H with gamma^H < 1e-12.
  const int horizon = static_cast<int>(std::ceil(std::log(1e-12) / std::log(mdp.gamma))) + 1;

  Eigen::VectorXd rho = Eigen::Map<const Eigen::VectorXd>(ctx.initial_dist.data(), n);
  Eigen::VectorXd state_occ = Eigen::VectorXd::Zero(n);
  double discount = 1.0;
  for (int h = 0; h < horizon; ++h) {
    state_occ += discount * rho;
    rho = p_pi_t * rho;
    discount *= mdp.gamma;
  }
  state_occ *= (1.0 - mdp.gamma);

  Visitation out{n, na, std::vector<double>(static_cast<std::size_t>(n) * na)};
  double mass = 0.0;
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < na; ++a) {
      out.density[static_cast<std::size_t>(s) * na + a] = state_occ(s) * policy.prob(s, a);
      mass += out.density[static_cast<std::size_t>(s) * na + a];
    }
  }
  // Renormalize away the truncated tail (< 1e-12).
  for (double& d : out.density) d /= mass;
  return out;
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error(ErrorKind::ShapeMismatch, "distribution lengths differ");
  double l1 = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) l1 += std::abs(p[i] - q[i]);
  return 0.5 * l1;
}

double model_inconsistency(const TabularMdp& true_mdp, const TabularMdp& model_mdp,
                           const TabularPolicy& policy, const EvalContext& ctx) {
  check_same_spaces(true_mdp, model_mdp);
  const Visitation d = visitation_distribution(true_mdp, policy, ctx);
  double eps = 0.0;
  for (int s = 0; s < true_mdp.n_states; ++s) {
    for (int a = 0; a < true_mdp.n_actions; ++a) {
      const double w = d.at(s, a);
      if (w == 0.0) continue;
      eps += w * tv_distance(true_mdp.row(s, a), model_mdp.row(s, a));
    }
  }
  return eps;
}

double max_pair_tv(const TabularMdp& a, const TabularMdp& b) {
  check_same_spaces(a, b);
  double worst = 0.0;
  for (int s = 0; s < a.n_states; ++s) {
    for (int act = 0; act < a.n_actions; ++act) {
      worst = std::max(worst, tv_distance(a.row(s, act), b.row(s, act)));
    }
  }
  return worst;
}

std::string to_json(const TabularMdp& mdp) {
  nlohmann::json doc;
  doc["n_states"] = mdp.n_states;
  doc["n_actions"] = mdp.n_actions;
  doc["transition"] = mdp.transition;
  doc["reward"] = mdp.reward;
  doc["gamma"] = mdp.gamma;
  doc["reward_bound"] = mdp.reward_bound;
  return doc.dump();
}

TabularMdp mdp_from_json(const std::string& text) {
  TabularMdp m;
  try {
    const auto doc = nlohmann::json::parse(text);
    m.n_states = doc.at("n_states").get<int>();
    m.n_actions = doc.at("n_actions").get<int>();
    m.transition = doc.at("transition").get<std::vector<double>>();
    m.reward = doc.at("reward").get<std::vector<double>>();
    m.gamma = doc.at("gamma").get<double>();
    if (doc.contains("reward_bound")) {
      m.reward_bound = doc.at("reward_bound").get<double>();
    } else {
      for (double r : m.reward) m.reward_bound = std::max(m.reward_bound, std::abs(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("malformed MDP document: ") + e.what());
  }
  m.validate();
  return m;
}

}  // namespace cmlo::mdp
