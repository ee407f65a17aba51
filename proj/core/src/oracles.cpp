#include "cmlo/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cmlo/error.hpp"

namespace cmlo::oracle {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Vec bound_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

const char* to_string(OracleKind kind) {
  switch (kind) {
    case OracleKind::ValueIteration: return "value_iteration";
    case OracleKind::CemMpc: return "cem";
    case OracleKind::Ilqr: return "ilqr";
  }
  return "?";
}

OracleKind oracle_kind_from_string(const std::string& name) {
  if (name == "value_iteration") return OracleKind::ValueIteration;
  if (name == "cem") return OracleKind::CemMpc;
  if (name == "ilqr") return OracleKind::Ilqr;
  throw Error(ErrorKind::InvalidConfig, "unknown oracle kind '" + name + "'");
}

void OracleSpec::validate() const {
  if (!(tolerance > 0.0)) throw Error(ErrorKind::InvalidConfig, "oracle tolerance must be > 0");
  if (horizon < 1) throw Error(ErrorKind::InvalidConfig, "planner horizon must be >= 1");
  if (population < 1) throw Error(ErrorKind::InvalidConfig, "population must be >= 1");
  if (elites < 1 || elites > population)
    throw Error(ErrorKind::InvalidConfig, "need 1 <= elites <= population");
  if (iterations < 1 || ilqr_iterations < 1)
    throw Error(ErrorKind::InvalidConfig, "iteration caps must be >= 1");
  if (!(init_std_fraction > 0.0) || !(min_std >= 0.0))
    throw Error(ErrorKind::InvalidConfig, "bad CEM std settings");
  if (ilqr_regularization < 0.0) throw Error(ErrorKind::InvalidConfig, "regularization must be >= 0");
}

Vec UniformRandomPolicy::act(const Vec& /*state*/, Rng& rng) {
  if (spec_.n_actions > 0) {
    Vec a(1);
    const auto k = static_cast<int>(uniform01(rng) * spec_.n_actions);
    a(0) = std::min(k, spec_.n_actions - 1);
    return a;
  }
  Vec a(spec_.action_dim);
  for (int i = 0; i < spec_.action_dim; ++i) {
    const double lo = spec_.action_low[static_cast<std::size_t>(i)];
    const double hi = spec_.action_high[static_cast<std::size_t>(i)];
    a(i) = lo + (hi - lo) * uniform01(rng);
  }
  return a;
}

Vec TabularGreedyPolicy::act(const Vec& state, Rng& /*rng*/) {
  Vec a(1);
  a(0) = actions_.at(static_cast<std::size_t>(env::TabularEnv::state_index(state)));
  return a;
}

TabularOracleResult optimize_tabular(const mdp::TabularMdp& model, const OracleSpec& spec,
                                     const mdp::EvalContext& ctx) {
  spec.validate();
  auto vi = mdp::value_iteration(model, spec.tolerance, ctx);
  TabularOracleResult out;
  out.policy = vi.greedy;
  out.actions = vi.greedy_actions;
  out.eps_opt_certificate = vi.eps_opt_certificate;
  out.model_value = vi.greedy_return;
  return out;
}

// ---------------------------------------------------------------------------

CemResult cem_plan(const PlanningProblem& problem, const Vec& state, const OracleSpec& spec,
                   Rng& rng, const Matrix* warm_start) {
  spec.validate();
  if (!problem.env || !problem.dynamics)
    throw Error(ErrorKind::InvalidArgument, "planning problem needs dynamics and environment");
  if (!state.allFinite()) throw Error(ErrorKind::InvalidArgument, "non-finite planning state");
  const auto& es = problem.env->spec();
  const int m = es.action_dim;
  const int horizon = spec.horizon;
  const int pop = spec.population;
  const Vec low = bound_vec(es.action_low);
  const Vec high = bound_vec(es.action_high);

  Matrix mean(m, horizon);
  if (warm_start && warm_start->rows() == m && warm_start->cols() == horizon) {
    mean = *warm_start;
  } else {
    mean = (0.5 * (low + high)).replicate(1, horizon);
  }
  Matrix stddev = (spec.init_std_fraction * (high - low)).replicate(1, horizon);

  // candidates[k] is an m x horizon action sequence
  std::vector<Matrix> candidates(static_cast<std::size_t>(pop), Matrix(m, horizon));
  std::vector<double> scores(static_cast<std::size_t>(pop));
  std::vector<int> order(static_cast<std::size_t>(pop));
  Matrix carried;  // best sequence of the previous iteration
  CemResult out;

  for (int it = 0; it < spec.iterations; ++it) {
    for (int k = 0; k < pop; ++k) {
      auto& c = candidates[static_cast<std::size_t>(k)];
      if (k == 0 && it > 0) {
        c = carried;
        continue;
      }
      for (int t = 0; t < horizon; ++t)
        for (int i = 0; i < m; ++i)
          c(i, t) = std::clamp(mean(i, t) + stddev(i, t) * standard_normal(rng), low(i), high(i));
    }

    // Score all candidates in one batch per time step.
    Matrix states = state.replicate(1, pop);
    std::vector<char> alive(static_cast<std::size_t>(pop), 1);
    std::fill(scores.begin(), scores.end(), 0.0);
    Matrix actions(m, pop);
    for (int t = 0; t < horizon; ++t) {
      for (int k = 0; k < pop; ++k) actions.col(k) = candidates[static_cast<std::size_t>(k)].col(t);
      Matrix next = problem.dynamics(states, actions);
      for (int k = 0; k < pop; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        if (!alive[ks]) continue;
        Vec nk = problem.env->canonicalize(next.col(k));
        const double r = problem.env->reward(states.col(k), actions.col(k), nk);
        scores[ks] += r;
        next.col(k) = nk;
        if (problem.env->terminal(nk)) alive[ks] = 0;
      }
      states = std::move(next);
    }
    for (auto& s : scores)
      if (!std::isfinite(s)) s = kNegInf;

    std::iota(order.begin(), order.end(), 0);
    const int n_elite = spec.elites;
    std::partial_sort(order.begin(), order.begin() + n_elite, order.end(), [&](int a, int b) {
      const double sa = scores[static_cast<std::size_t>(a)];
      const double sb = scores[static_cast<std::size_t>(b)];
      return sa > sb || (sa == sb && a < b);
    });
    const double best = scores[static_cast<std::size_t>(order[0])];
    if (best == kNegInf) throw Error(ErrorKind::PlannerFailure, "all CEM candidates non-finite");
    out.best_per_iter.push_back(best);
    carried = candidates[static_cast<std::size_t>(order[0])];

    int finite = 0;
    Matrix sum = Matrix::Zero(m, horizon);
    for (int e = 0; e < n_elite; ++e) {
      const auto idx = static_cast<std::size_t>(order[static_cast<std::size_t>(e)]);
      if (scores[idx] == kNegInf) break;
      sum += candidates[idx];
      ++finite;
    }
    mean = sum / finite;
    Matrix var = Matrix::Zero(m, horizon);
    for (int e = 0; e < finite; ++e) {
      const auto idx = static_cast<std::size_t>(order[static_cast<std::size_t>(e)]);
      var += (candidates[idx] - mean).cwiseAbs2();
    }
    stddev = (var / finite).cwiseSqrt().cwiseMax(spec.min_std);
  }

  for (int t = 0; t < horizon; ++t) mean.col(t) = mean.col(t).cwiseMax(low).cwiseMin(high);
  out.plan = std::move(mean);
  return out;
}

// ---------------------------------------------------------------------------

std::pair<Matrix, Matrix> finite_difference_jacobians(
    const std::function<Vec(const Vec&, const Vec&)>& step, const Vec& x, const Vec& u,
    double h) {
  const Vec f0 = step(x, u);
  Matrix a(f0.size(), x.size());
  Matrix b(f0.size(), u.size());
  Vec xp = x, up = u;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    const Vec fp = step(xp, u);
    xp(i) = x(i) - h;
    const Vec fm = step(xp, u);
    xp(i) = x(i);
    a.col(i) = (fp - fm) / (2.0 * h);
  }
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    up(i) = u(i) + h;
    const Vec fp = step(x, up);
    up(i) = u(i) - h;
    const Vec fm = step(x, up);
    up(i) = u(i);
    b.col(i) = (fp - fm) / (2.0 * h);
  }
  return {a, b};
}

namespace {

double stage_cost(const env::QuadraticCost& c, const Vec& x, const Vec& u) {
  const Vec dx = x - c.goal;
  return dx.dot(c.state_weight * dx) + u.dot(c.control_weight * u);
}

double terminal_cost(const env::QuadraticCost& c, const Vec& x) {
  const Vec dx = x - c.goal;
  return dx.dot(c.terminal_weight * dx);
}

struct Trajectory {
  std::vector<Vec> x;
  std::vector<Vec> u;
  double cost = 0.0;
};

Vec clip(const Vec& u, const std::optional<std::pair<Vec, Vec>>& bounds) {
  if (!bounds) return u;
  return u.cwiseMax(bounds->first).cwiseMin(bounds->second);
}

}  // namespace

IlqrResult ilqr_plan(const LinearizedDynamics& model, const env::QuadraticCost& cost,
                     const Vec& x0, const OracleSpec& spec, const std::vector<Vec>* initial_actions,
                     const std::optional<std::pair<Vec, Vec>>& action_bounds) {
  spec.validate();
  if (!model.step) throw Error(ErrorKind::InvalidArgument, "iLQR needs a step function");
  const auto n = x0.size();
  const auto m = cost.control_weight.rows();
  if (cost.state_weight.rows() != n || cost.terminal_weight.rows() != n || cost.goal.size() != n ||
      cost.control_weight.cols() != m)
    throw Error(ErrorKind::ShapeMismatch, "quadratic cost does not match the state/action sizes");
  {
    Eigen::LLT<Matrix> llt(0.5 * (cost.control_weight + cost.control_weight.transpose()));
    if (llt.info() != Eigen::Success)
      throw Error(ErrorKind::InvalidCost, "control cost is not positive definite");
  }
  const int horizon = spec.horizon;

  auto rollout = [&](const Trajectory& nominal, const std::vector<Vec>& k_ff,
                     const std::vector<Matrix>& gains, double step) {
    Trajectory t;
    t.x.push_back(x0);
    for (int i = 0; i < horizon; ++i) {
      const auto si = static_cast<std::size_t>(i);
      Vec u = nominal.u[si];
      if (!k_ff.empty()) u += step * k_ff[si] + gains[si] * (t.x[si] - nominal.x[si]);
      u = clip(u, action_bounds);
      t.cost += stage_cost(cost, t.x[si], u);
      t.u.push_back(u);
      t.x.push_back(model.step(t.x[si], u));
    }
    t.cost += terminal_cost(cost, t.x.back());
    if (!std::isfinite(t.cost)) t.cost = std::numeric_limits<double>::infinity();
    return t;
  };

  Trajectory nominal;
  nominal.u.assign(static_cast<std::size_t>(horizon), Vec::Zero(m));
  if (initial_actions && static_cast<int>(initial_actions->size()) == horizon) nominal.u = *initial_actions;
  nominal = rollout(nominal, {}, {}, 0.0);
  if (!std::isfinite(nominal.cost))
    throw Error(ErrorKind::PlannerFailure, "iLQR initial rollout diverged");

  IlqrResult out;
  std::vector<Matrix> gains(static_cast<std::size_t>(horizon));
  std::vector<Vec> k_ff(static_cast<std::size_t>(horizon));
  const Matrix& q = cost.state_weight;
  const Matrix& r = cost.control_weight;

  for (int iter = 0; iter < spec.ilqr_iterations; ++iter) {
    std::vector<Matrix> as(static_cast<std::size_t>(horizon)), bs(static_cast<std::size_t>(horizon));
    for (int i = 0; i < horizon; ++i) {
      const auto si = static_cast<std::size_t>(i);
      auto ab = model.jacobians ? model.jacobians(nominal.x[si], nominal.u[si])
                                : finite_difference_jacobians(model.step, nominal.x[si], nominal.u[si]);
      as[si] = std::move(ab.first);
      bs[si] = std::move(ab.second);
    }

    double mu = 0.0;
    bool ok = false;
    for (int attempt = 0; attempt < 20 && !ok; ++attempt) {
      Vec vx = 2.0 * cost.terminal_weight * (nominal.x.back() - cost.goal);
      Matrix vxx = 2.0 * cost.terminal_weight;
      ok = true;
      for (int i = horizon - 1; i >= 0; --i) {
        const auto si = static_cast<std::size_t>(i);
        const Matrix& a = as[si];
        const Matrix& b = bs[si];
        const Vec qx = 2.0 * q * (nominal.x[si] - cost.goal) + a.transpose() * vx;
        const Vec qu = 2.0 * r * nominal.u[si] + b.transpose() * vx;
        const Matrix qxx = 2.0 * q + a.transpose() * vxx * a;
        Matrix quu = 2.0 * r + b.transpose() * vxx * b;
        const Matrix qux = b.transpose() * vxx * a;
        quu = 0.5 * (quu + quu.transpose());
        Eigen::LLT<Matrix> llt(quu + mu * Matrix::Identity(m, m));
        if (llt.info() != Eigen::Success) {
          ok = false;
          mu = std::max(spec.ilqr_regularization > 0.0 ? spec.ilqr_regularization : 1e-6, mu * 10.0);
          break;
        }
        k_ff[si] = -llt.solve(qu);
        gains[si] = -llt.solve(qux);
        const Matrix& kk = gains[si];
        vx = qx + kk.transpose() * quu * k_ff[si] + kk.transpose() * qu + qux.transpose() * k_ff[si];
        vxx = qxx + kk.transpose() * quu * kk + kk.transpose() * qux + qux.transpose() * kk;
        vxx = 0.5 * (vxx + vxx.transpose());
      }
    }
    if (!ok) throw Error(ErrorKind::PlannerFailure, "iLQR backward pass could not be regularized");

    out.iterations = iter + 1;
    bool improved = false;
    double step = 1.0;
    for (int ls = 0; ls < 12; ++ls, step *= 0.5) {
      Trajectory cand = rollout(nominal, k_ff, gains, step);
      if (cand.cost < nominal.cost) {
        const double gain = nominal.cost - cand.cost;
        nominal = std::move(cand);
        improved = gain > 1e-12 * std::max(1.0, std::abs(nominal.cost));
        break;
      }
    }
    if (!improved) break;
  }

  if (!std::isfinite(nominal.cost)) throw Error(ErrorKind::PlannerFailure, "iLQR diverged");
  out.actions = nominal.u;
  out.states = nominal.x;
  out.gains = gains;
  out.cost = nominal.cost;
  return out;
}

// ---------------------------------------------------------------------------

CemPolicy::CemPolicy(std::shared_ptr<const model::DynamicsModel> model, const env::Environment& env,
                     OracleSpec spec)
    : model_(std::move(model)), env_(&env), spec_(spec) {
  spec_.validate();
}

Vec CemPolicy::act(const Vec& state, Rng& rng) {
  PlanningProblem problem;
  const auto* m = model_.get();
  problem.dynamics = [m](const Matrix& s, const Matrix& a) { return m->predict_mean(s, a); };
  problem.env = env_;
  std::optional<Matrix> warm;
  if (previous_) {
    Matrix w = *previous_;
    const auto h = w.cols();
    if (h > 1) w.leftCols(h - 1) = previous_->rightCols(h - 1);
    warm = std::move(w);
  }
  auto res = cem_plan(problem, state, spec_, rng, warm ? &*warm : nullptr);
  previous_ = res.plan;
  return env_->clip_action(res.plan.col(0));
}

IlqrPolicy::IlqrPolicy(std::shared_ptr<const model::DynamicsModel> model,
                       const env::Environment& env, OracleSpec spec)
    : model_(std::move(model)), env_(&env), spec_(spec) {
  spec_.validate();
  auto c = env.quadratic_cost();
  if (!c) throw Error(ErrorKind::OracleMismatch, "iLQR needs an environment with a quadratic cost");
  cost_ = *c;
}

Vec IlqrPolicy::act(const Vec& state, Rng& /*rng*/) {
  const auto* m = model_.get();
  LinearizedDynamics lin;
  lin.step = [m](const Vec& x, const Vec& u) -> Vec {
    Matrix xs = x;
    Matrix us = u;
    return m->predict_mean(xs, us).col(0);
  };
  const auto& es = env_->spec();
  std::pair<Vec, Vec> bounds{bound_vec(es.action_low), bound_vec(es.action_high)};
  std::optional<std::vector<Vec>> warm;
  if (previous_ && !previous_->empty()) {
    auto w = *previous_;
    std::rotate(w.begin(), w.begin() + 1, w.end());
    warm = std::move(w);
  }
  auto res = ilqr_plan(lin, cost_, state, spec_, warm ? &*warm : nullptr, bounds);
  previous_ = res.actions;
  return env_->clip_action(res.actions.front());
}

OptimizeResult optimize(std::shared_ptr<const model::DynamicsModel> model,
                        const env::Environment& env, const OracleSpec& spec,
                        const mdp::EvalContext* ctx) {
  spec.validate();
  OptimizeResult out;
  if (spec.kind == OracleKind::ValueIteration) {
    const auto* tab = dynamic_cast<const model::TabularCountModel*>(model.get());
    if (!tab || !env.is_tabular())
      throw Error(ErrorKind::OracleMismatch, "value iteration needs a tabular model");
    mdp::EvalContext fallback = mdp::EvalContext::uniform(tab->empirical().n_states);
    auto res = optimize_tabular(tab->empirical(), spec, ctx ? *ctx : fallback);
    out.policy = std::make_unique<TabularGreedyPolicy>(res.actions, res.eps_opt_certificate);
    out.certified = true;
    out.eps_opt = res.eps_opt_certificate;
    return out;
  }
  if (!dynamic_cast<const model::EnsembleModel*>(model.get()) || env.is_tabular())
    throw Error(ErrorKind::OracleMismatch,
                std::string("planner oracle '") + to_string(spec.kind) + "' needs an ensemble model");
  if (spec.kind == OracleKind::CemMpc)
    out.policy = std::make_unique<CemPolicy>(std::move(model), env, spec);
  else
    out.policy = std::make_unique<IlqrPolicy>(std::move(model), env, spec);
  return out;
}

}  // namespace cmlo::oracle
