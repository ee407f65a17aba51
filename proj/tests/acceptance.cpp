// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Criteria 10-12 run the pendulum ablation from configs/.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "cmlo/bounds.hpp"
#include "cmlo/cli.hpp"
#include "cmlo/coverage.hpp"
#include "cmlo/dynamics.hpp"
#include "cmlo/engine.hpp"
#include "cmlo/envs.hpp"
#include "cmlo/error.hpp"
#include "cmlo/mdp.hpp"
#include "support/reference.hpp"

using namespace cmlo;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kTvTol = 1e-12;
constexpr double kSoundTol = 1e-9;
constexpr double kGradTol = 1e-4;
constexpr double kHullTol = 1e-9;
constexpr double kCertTol = 1e-9;
constexpr int kTvPairs = 10000;
constexpr int kTrials = 1000;
constexpr int kGradNets = 100;
constexpr int kSeedsNeeded = 4;  // of 5, for the stage diagnostics
constexpr double kLimitTv = 1.0;
constexpr double kLimitSimulation = 30.0;
constexpr double kLimitCampaign = 300.0;
constexpr double kLimitConcentration = 120.0;
constexpr double kLimitAblation = 1800.0;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> random_simplex(int n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(n);
  double z = 0.0;
  for (auto& x : p) z += (x = e(rng));
  for (auto& x : p) x /= z;
  return p;
}

// ---------------------------------------------------------------------------

Verdict tv_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  int asym = 0;
  for (int i = 0; i < kTvPairs; ++i) {
    const int n = 2 + i % 15;
    auto p = random_simplex(n, rng), q = random_simplex(n, rng);
    if (i % 10 == 0) q = p;
    double l1 = 0.0;
    for (int k = 0; k < n; ++k) l1 += std::abs(p[k] - q[k]);
    const double tv = mdp::tv_distance(p, q);
    worst = std::max(worst, std::abs(tv - 0.5 * l1));
    asym += tv != mdp::tv_distance(q, p);
  }
  const double t = seconds_since(t0);
  return {worst <= kTvTol && asym == 0 && t < kLimitTv,
          "pairs=" + std::to_string(kTvPairs) + " max|tv-L1/2|=" + fmt(worst) +
              " asymmetric=" + std::to_string(asym) + " time=" + fmt(t, 3) + "s"};
}

Verdict simulation_soundness() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto trials = bounds::simulation_gap_campaign(kTrials, 202);
  int ok = 0;
  double ratio = 0.0;
  for (const auto& t : trials) {
    ok += t.check.gap <= t.check.bound + kSoundTol;
    if (t.check.bound > 0) ratio = std::max(ratio, t.check.gap / t.check.bound);
  }
  const double t = seconds_since(t0);
  return {ok == kTrials && t < kLimitSimulation,
          std::to_string(ok) + "/" + std::to_string(kTrials) + " within kappa*eps, max gap/bound=" +
              fmt(ratio) + " time=" + fmt(t, 3) + "s"};
}

Verdict gap_campaign() {
  const auto t0 = std::chrono::steady_clock::now();
  bounds::CampaignConfig cfg;
  cfg.n_trials = kTrials;
  cfg.seed = 303;
  const auto trials = bounds::verify_gap_campaign(cfg);
  int conservative = 0, eq = 0, eq_ok = 0, exact_all = 0;
  for (const auto& tr : trials) {
    conservative += tr.report.conservative_c <= tr.report.actual_gap + kSoundTol;
    exact_all += tr.exact_c_ok;
    if (tr.equality_holds) {
      ++eq;
      eq_ok += tr.exact_c_ok;
    }
  }
  // Random trials almost never meet the equality assumption, so add
  // instances that meet it by construction: M1 is the tight two-sink model
  // with its own truth, M2 the truth itself, pi2 its value-iteration policy.
  int built = 0, built_eq = 0, built_ok = 0;
  for (double gamma : {0.5, 0.7, 0.9, 0.95, 0.99})
    for (double leak : {0.05, 0.1, 0.3, 0.5}) {
      const auto inst = bounds::tight_simulation_instance(gamma, 1.0, leak);
      const double k = bounds::kappa(gamma, 1.0);
      const double eps1 = mdp::model_inconsistency(inst.truth, inst.model, inst.policy, inst.ctx);
      const double v_model = mdp::policy_evaluation(inst.model, inst.policy, inst.ctx).expected_return;
      const double v_true = mdp::policy_evaluation(inst.truth, inst.policy, inst.ctx).expected_return;
      const auto vi2 = mdp::value_iteration(inst.truth, 1e-6, inst.ctx);
      bounds::BoundInputs in;
      in.kappa = k;
      in.gamma = gamma;
      in.eps_m1_pi1 = eps1;
      in.eps_m2_pi2 = 0.0;
      in.ceiling_v1 = mdp::value_iteration(inst.model, 1e-13, inst.ctx).table_return;
      in.ceiling_v2 = mdp::value_iteration(inst.truth, 1e-13, inst.ctx).table_return;
      in.eps_opt = vi2.eps_opt_certificate;
      const double c = bounds::gap_bound(in).bound_c;
      const double gap = mdp::policy_evaluation(inst.truth, vi2.greedy, inst.ctx).expected_return - v_true;
      ++built;
      if (std::abs(v_model - v_true - k * eps1) <= 1e-6 * k * eps1) {
        ++built_eq;
        built_ok += c <= gap + kSoundTol;
      }
    }
  const double t = seconds_since(t0);
  return {conservative == kTrials && eq_ok == eq && built_eq == built && built_ok == built &&
              t < kLimitCampaign,
          "conservative " + std::to_string(conservative) + "/" + std::to_string(kTrials) +
              "; equality split: " + std::to_string(eq) + " random trials with residual<=1e-6*kappa*eps (" +
              std::to_string(eq_ok) + " C<=gap), constructed " + std::to_string(built_eq) + "/" +
              std::to_string(built) + " meet it with C<=gap in " + std::to_string(built_ok) +
              "; unconditioned C<=gap in " + std::to_string(exact_all) + "/" + std::to_string(kTrials) +
              " random trials (reported only) time=" + fmt(t, 3) + "s"};
}

Verdict ceiling_soundness() {
  std::mt19937_64 rng(404);
  int ok = 0;
  double worst = -1e300, ratio = 0.0;
  for (int i = 0; i < kTrials; ++i) {
    const int S = 2 + static_cast<int>(rng() % 9), A = 1 + static_cast<int>(rng() % 3);
    const double gamma = 0.5 + 0.49 * std::uniform_real_distribution<double>(0, 1)(rng);
    const double sparsity = 0.3 + 0.7 * std::uniform_real_distribution<double>(0, 1)(rng);
    const auto m1 = env::random_mdp(S, A, rng(), sparsity, gamma);
    auto m2 = env::random_mdp(S, A, rng(), sparsity, gamma);
    m2.reward = m1.reward;
    const auto ctx = mdp::EvalContext{random_simplex(S, rng)};
    const double v1 = mdp::value_iteration(m1, 1e-13, ctx).table_return;
    const double v2 = mdp::value_iteration(m2, 1e-13, ctx).table_return;
    const double bound = bounds::ceiling_gap_bound(m1, m2, m1.reward_bound / (1.0 - gamma), gamma);
    ok += std::abs(v2 - v1) <= bound + kSoundTol;
    worst = std::max(worst, std::abs(v2 - v1) - bound);
    if (bound > 0) ratio = std::max(ratio, std::abs(v2 - v1) / bound);
  }
  return {ok == kTrials, std::to_string(ok) + "/" + std::to_string(kTrials) +
                             " max(gap-bound)=" + fmt(worst) + " max gap/bound=" + fmt(ratio)};
}

Verdict concentration() {
  const auto t0 = std::chrono::steady_clock::now();
  int ok = 0, cells = 0;
  std::string worst;
  double worst_margin = 1e300;
  for (std::int64_t m : {50, 100, 200})
    for (double eps : {0.2, 0.3}) {
      const auto c = bounds::concentration_check(4, m, eps, 100000, 505 + m);
      ++cells;
      ok += c.ok;
      const double margin = c.bound + 3 * c.std_error - c.frequency;
      if (margin < worst_margin) {
        worst_margin = margin;
        worst = "m=" + std::to_string(m) + " eps=" + fmt(eps) + " freq=" + fmt(c.frequency) +
                " bound=" + fmt(c.bound);
      }
    }
  const double t = seconds_since(t0);
  return {ok == cells && t < kLimitConcentration,
          std::to_string(ok) + "/" + std::to_string(cells) + " cells; tightest " + worst +
              " time=" + fmt(t, 3) + "s"};
}

Verdict corollary() {
  bounds::CorollaryConfig cfg;
  cfg.seed = 606;
  const auto rep = bounds::corollary_check(cfg);
  return {rep.ok && rep.instances.size() == 100,
          "instances=" + std::to_string(rep.instances.size()) + " fraction=" + fmt(rep.fraction) +
              " required>=" + fmt(rep.required)};
}

Verdict gradient_check() {
  double worst = 0.0;
  int ok = 0;
  for (int i = 0; i < kGradNets; ++i) {
    Rng rng = make_rng(707, static_cast<std::uint64_t>(i));
    nn::NetConfig cfg;
    cfg.state_dim = 1 + i % 4;
    cfg.action_dim = 1 + i % 2;
    cfg.hidden = i % 3 == 0 ? std::vector<int>{6} : std::vector<int>{5 + i % 4, 4};
    cfg.predict_delta = i % 2 == 0;
    nn::GaussianNet net(cfg, rng);
    const int batch = 1 + i % 9;
    Eigen::MatrixXd x(cfg.input_dim(), batch), y(cfg.state_dim, batch);
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = standard_normal(rng);
    for (Eigen::Index k = 0; k < y.size(); ++k) y(k) = 2.0 * standard_normal(rng);
    const double e = ref::nll_gradient_rel_error(net, x, y);
    worst = std::max(worst, e);
    ok += e < kGradTol;
  }
  return {ok == kGradNets, std::to_string(ok) + "/" + std::to_string(kGradNets) +
                               " nets, max relative error=" + fmt(worst)};
}

Verdict hull_equivalence() {
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  int ok = 0, degenerate = 0;
  for (int t = 0; t < kTrials; ++t) {
    const int n = static_cast<int>(rng() % 60);
    std::vector<shift::Point2> pts(n);
    switch (t % 5) {
      case 0:
        for (auto& p : pts) p = {u(rng), u(rng)};
        break;
      case 1:  // integer grid: duplicates and collinear runs
        for (auto& p : pts) p = {std::round(3 * u(rng)), std::round(3 * u(rng))};
        break;
      case 2: {  // one line
        const double a = u(rng), b = u(rng);
        for (auto& p : pts) {
          const double s = u(rng);
          p = {a * s, b * s};
        }
        break;
      }
      case 3:  // one repeated point
        for (auto& p : pts) p = {0.25, -0.5};
        break;
      default:  // two tight clusters far apart
        for (std::size_t i = 0; i < pts.size(); ++i)
          pts[i] = {(i % 2 ? 100.0 : 0.0) + 1e-3 * u(rng), 1e-3 * u(rng)};
    }
    const double area = shift::convex_hull_area(pts);
    const double brute = ref::brute_force_hull_area(pts);
    degenerate += brute == 0.0;
    worst = std::max(worst, std::abs(area - brute));
    ok += std::abs(area - brute) <= kHullTol;
  }
  return {ok == kTrials, std::to_string(ok) + "/" + std::to_string(kTrials) + " sets (" +
                             std::to_string(degenerate) + " degenerate), max diff=" + fmt(worst)};
}

// Exact policy iteration with dense linear solves; independent of the
// library's value iteration.
struct ExactSolver {
  static Eigen::VectorXd evaluate(const mdp::TabularMdp& m, const std::vector<int>& act) {
    const int S = m.n_states;
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(S, S);
    Eigen::VectorXd r(S);
    for (int s = 0; s < S; ++s) {
      r(s) = m.reward[s * m.n_actions + act[s]];
      for (int t = 0; t < S; ++t) a(s, t) -= m.gamma * m.p(s, act[s], t);
    }
    return a.partialPivLu().solve(r);
  }
  static Eigen::VectorXd optimal(const mdp::TabularMdp& m) {
    std::vector<int> act(m.n_states, 0);
    for (int it = 0; it < 1000; ++it) {
      const auto v = evaluate(m, act);
      bool changed = false;
      for (int s = 0; s < m.n_states; ++s) {
        auto q = [&](int a) {
          double acc = m.reward[s * m.n_actions + a];
          for (int t = 0; t < m.n_states; ++t) acc += m.gamma * m.p(s, a, t) * v(t);
          return acc;
        };
        int best = act[s];
        for (int a = 0; a < m.n_actions; ++a)
          if (q(a) > q(best) + 1e-13) best = a;
        changed |= best != act[s];
        act[s] = best;
      }
      if (!changed) return v;
    }
    return evaluate(m, act);
  }
};

Verdict oracle_contract() {
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int ok = 0;
  double slack = 1e300;
  for (int i = 0; i < kTrials; ++i) {
    const int S = 2 + static_cast<int>(rng() % 11), A = 1 + static_cast<int>(rng() % 4);
    const double gamma = 0.5 + 0.49 * u(rng);
    const auto m = env::random_mdp(S, A, rng(), 0.2 + 0.8 * u(rng), gamma);
    const mdp::EvalContext ctx{random_simplex(S, rng)};
    const double tol = std::pow(10.0, -1.0 - 5.0 * u(rng));
    const auto vi = mdp::value_iteration(m, tol, ctx);
    const Eigen::VectorXd v_pi = ExactSolver::evaluate(m, vi.greedy_actions);
    const Eigen::VectorXd v_star = ExactSolver::optimal(m);
    double lhs = 0.0, rhs = 0.0;
    for (int s = 0; s < S; ++s) {
      lhs += ctx.initial_dist[s] * v_pi(s);
      rhs += ctx.initial_dist[s] * v_star(s);
    }
    const double margin = lhs - (rhs - vi.eps_opt_certificate);
    slack = std::min(slack, margin);
    ok += margin >= -kCertTol;
  }
  return {ok == kTrials, std::to_string(ok) + "/" + std::to_string(kTrials) +
                             " MDPs, min(V_pi - V* + eps_opt)=" + fmt(slack)};
}

// ---------------------------------------------------------------------------
// Engine-level criteria.

bool same_double(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

bool same_trace(const engine::RunRecord& a, const engine::RunRecord& b) {
  if (a.trainings.size() != b.trainings.size() || a.episodes.size() != b.episodes.size() ||
      a.estimates.size() != b.estimates.size() || a.diagnostics.size() != b.diagnostics.size() ||
      a.env_steps != b.env_steps || a.model_buffer_size != b.model_buffer_size)
    return false;
  for (std::size_t i = 0; i < a.trainings.size(); ++i)
    if (a.trainings[i].step != b.trainings[i].step ||
        !same_double(a.trainings[i].mean_loss, b.trainings[i].mean_loss))
      return false;
  for (std::size_t i = 0; i < a.episodes.size(); ++i)
    if (a.episodes[i].end_step != b.episodes[i].end_step || a.episodes[i].ret != b.episodes[i].ret)
      return false;
  for (std::size_t i = 0; i < a.estimates.size(); ++i)
    if (!same_double(a.estimates[i].accumulator, b.estimates[i].accumulator) ||
        a.estimates[i].decision != b.estimates[i].decision)
      return false;
  for (std::size_t i = 0; i < a.diagnostics.size(); ++i)
    if (!same_double(a.diagnostics[i].coverage, b.diagnostics[i].coverage) ||
        !same_double(a.diagnostics[i].model_error, b.diagnostics[i].model_error))
      return false;
  return true;
}

struct IntereventTally {
  int runs = 0;
  int bad = 0;
  long lo = LONG_MAX, hi = 0;
  void add(const engine::RunRecord& r, const shift::TriggerConfig& t) {
    const auto range = engine::interevent_range(r);
    ++runs;
    if (!range) return;
    lo = std::min(lo, range->first);
    hi = std::max(hi, range->second);
    bad += range->first < t.t_min || range->second > t.t_max;
  }
};

struct AblationData {
  cli::RunConfig config;
  std::vector<engine::RunRecord> runs;
  double seconds = 0.0;
  fs::path root;
  std::string error;
};

AblationData run_ablation(int workers) {
  AblationData d;
  const fs::path cfg_path = fs::path(CMLO_SOURCE_DIR) / "configs" / "pendulum_ablation.json";
  try {
    std::ifstream in(cfg_path);
    std::stringstream ss;
    ss << in.rdbuf();
    d.config = cli::parse_run_config(ss.str(), cfg_path.parent_path());
    if (workers > 0) d.config.workers = workers;
    d.root = cli::output_root() / "acceptance" / ("pendulum-" + d.config.hash);
    const auto t0 = std::chrono::steady_clock::now();
    for (auto& o : cli::execute_runs(d.config, d.root, &std::cerr)) d.runs.push_back(std::move(o.record));
    d.seconds = seconds_since(t0);
  } catch (const std::exception& e) {
    d.error = e.what();
  }
  return d;
}

Verdict trigger_safety(const AblationData& ab) {
  IntereventTally tally;
  int equivalent = 0, compared = 0;
  // Tabular chain: several trigger windows, and pinned windows vs fixed.
  std::vector<double> mu(8, 1.0 / 8);
  const env::TabularEnv chain(env::chain_mdp(8, 0.2, 0.9), mu, 50, "chain");
  engine::EngineConfig cfg;
  cfg.oracle.kind = oracle::OracleKind::ValueIteration;
  cfg.rollout.rollouts_per_update = 8;
  cfg.budget = 3000;
  cfg.n_stages = 4;
  for (auto [tmin, tmax, f] : {std::tuple{50, 400, 25}, std::tuple{60, 130, 20}, std::tuple{10, 1000, 7}}) {
    cfg.trigger.t_min = tmin;
    cfg.trigger.t_max = tmax;
    cfg.trigger.check_frequency = f;
    cfg.trigger.alpha = 0.5;
    for (std::uint64_t seed = 0; seed < 5; ++seed) tally.add(engine::run_cmlo(chain, cfg, seed), cfg.trigger);
  }
  cfg.trigger.check_frequency = 25;
  for (int k : {50, 75, 130})
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      cfg.trigger.t_min = cfg.trigger.t_max = k;
      const auto a = engine::run_cmlo(chain, cfg, seed);
      tally.add(a, cfg.trigger);
      ++compared;
      equivalent += same_trace(a, engine::run_fixed_interval(chain, cfg, k, seed));
    }

  // Pendulum with the ablation's engine settings on a short budget.
  if (ab.error.empty()) {
    const auto pend = env::make_environment(ab.config.env_doc);
    auto pcfg = ab.config.engine;
    pcfg.budget = 1200;
    pcfg.trigger.t_min = pcfg.trigger.t_max = 300;
    const auto a = engine::run_cmlo(*pend, pcfg, 0);
    ++compared;
    equivalent += same_trace(a, engine::run_fixed_interval(*pend, pcfg, 300, 0));
    for (const auto& r : ab.runs)
      if (r.mode == engine::Mode::Cmlo) tally.add(r, ab.config.engine.trigger);
  }
  const bool pass = ab.error.empty() && tally.bad == 0 && equivalent == compared;
  return {pass, std::to_string(tally.runs - tally.bad) + "/" + std::to_string(tally.runs) +
                    " runs inside [t_min, t_max] (observed gaps " + std::to_string(tally.lo) + ".." +
                    std::to_string(tally.hi) + "); pinned window == fixed in " +
                    std::to_string(equivalent) + "/" + std::to_string(compared) +
                    (ab.error.empty() ? "" : "; ablation error: " + ab.error)};
}

Verdict ablation_direction(const AblationData& ab) {
  if (!ab.error.empty()) return {false, "ablation failed: " + ab.error};
  for (const auto& r : ab.runs)
    if (r.failure) return {false, "run failed: " + cli::summary_line(r)};
  const auto rep = cli::build_report(ab.runs);
  const cli::GroupRow* cmlo = nullptr;
  const cli::GroupRow* best = nullptr;
  for (const auto& g : rep.groups) {
    if (g.group == "cmlo") {
      cmlo = &g;
    } else if (g.final_return.mean && (!best || *g.final_return.mean > *best->final_return.mean)) {
      best = &g;
    }
  }
  if (!cmlo || !best || !cmlo->final_return.mean) return {false, "missing groups in the report"};
  const double sc = cmlo->final_return.std.value_or(0.0);
  const double sf = best->final_return.std.value_or(0.0);
  const double pooled = std::sqrt(0.5 * (sc * sc + sf * sf));
  const double threshold = *best->final_return.mean - pooled;
  const bool returns_ok = *cmlo->final_return.mean >= threshold;
  const bool trainings_ok = *cmlo->trainings.mean <= *best->trainings.mean;
  const bool time_ok = ab.seconds < kLimitAblation;
  std::ostringstream os;
  os << "cmlo return " << fmt(*cmlo->final_return.mean) << "+-" << fmt(sc) << " vs best "
     << best->group << ' ' << fmt(*best->final_return.mean) << "+-" << fmt(sf)
     << " (threshold " << fmt(threshold) << "); trainings " << fmt(*cmlo->trainings.mean) << " vs "
     << fmt(*best->trainings.mean) << "; all groups:";
  for (const auto& g : rep.groups)
    os << ' ' << g.group << '=' << fmt(g.final_return.mean.value_or(NAN)) << '/'
       << fmt(g.trainings.mean.value_or(NAN));
  os << "; time=" << fmt(ab.seconds, 4) << "s runs=" << ab.root.string();
  return {returns_ok && trainings_ok && time_ok, os.str()};
}

Verdict stage_diagnostics(const AblationData& ab) {
  if (!ab.error.empty()) return {false, "ablation failed: " + ab.error};
  int n = 0, cov = 0, err = 0;
  for (const auto& r : ab.runs) {
    if (r.mode != engine::Mode::Cmlo) continue;
    const auto st = engine::stage_summaries(r);
    ++n;
    cov += cli::coverage_nondecreasing(st);
    err += cli::error_nonincreasing(st);
  }
  return {n == 5 && cov >= kSeedsNeeded && err >= kSeedsNeeded,
          "coverage non-decreasing in " + std::to_string(cov) + "/" + std::to_string(n) +
              " seeds, prediction error non-increasing in " + std::to_string(err) + "/" +
              std::to_string(n)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the cmlo library"};
  std::vector<int> only;
  int workers = 0;
  app.add_option("--only", only, "Run only these criteria (1-12)")->delimiter(',');
  app.add_option("--workers", workers, "Parallel runs for the pendulum ablation");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int i) { return selected.empty() || selected.count(i) > 0; };

  std::optional<AblationData> ablation;
  auto ab = [&]() -> const AblationData& {
    if (!ablation) ablation = run_ablation(workers);
    return *ablation;
  };

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"tv-identity", tv_identity},
      {"simulation-lemma-soundness", simulation_soundness},
      {"gap-campaign", gap_campaign},
      {"ceiling-gap-soundness", ceiling_soundness},
      {"l1-concentration", concentration},
      {"interval-corollary", corollary},
      {"nll-gradient-check", gradient_check},
      {"hull-oracle-equivalence", hull_equivalence},
      {"value-iteration-certificate", oracle_contract},
      {"trigger-safety", [&] { return trigger_safety(ab()); }},
      {"pendulum-ablation-direction", [&] { return ablation_direction(ab()); }},
      {"stage-diagnostics", [&] { return stage_diagnostics(ab()); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << id << "  " << criteria[i].first
              << "  " << v.detail << std::endl;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : "acceptance: all criteria pass")
            << std::endl;
  return failed ? 1 : 0;
}
