#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cmlo/coverage.hpp"
#include "cmlo/dynamics.hpp"
#include "cmlo/envs.hpp"
#include "cmlo/mdp.hpp"
#include "cmlo/oracles.hpp"

using namespace cmlo;

static void BM_ValueIteration(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto m = env::random_mdp(n, 4, 1, 0.3, 0.95);
  const auto ctx = mdp::EvalContext::uniform(n);
  for (auto _ : state) benchmark::DoNotOptimize(mdp::value_iteration(m, 1e-6, ctx).table_return);
}
BENCHMARK(BM_ValueIteration)->Arg(16)->Arg(64)->Arg(256);

static void BM_ConvexHullArea(benchmark::State& state) {
  Rng rng = make_rng(2);
  std::normal_distribution<double> g;
  std::vector<shift::Point2> pts(static_cast<std::size_t>(state.range(0)));
  for (auto& p : pts) p = {g(rng), g(rng)};
  for (auto _ : state) benchmark::DoNotOptimize(shift::convex_hull_area(pts));
}
BENCHMARK(BM_ConvexHullArea)->Arg(256)->Arg(4096);

static void BM_CoverageVolume(benchmark::State& state) {
  Rng rng = make_rng(3);
  std::normal_distribution<double> g;
  std::vector<Eigen::VectorXd> states(20000, Eigen::VectorXd(3));
  for (auto& s : states)
    for (int i = 0; i < 3; ++i) s(i) = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(shift::coverage_volume(states, 1000, rng).volume);
}
BENCHMARK(BM_CoverageVolume);

static void BM_NllGradient(benchmark::State& state) {
  nn::NetConfig cfg;
  cfg.state_dim = 3;
  cfg.action_dim = 1;
  cfg.hidden = {64, 64};
  Rng rng = make_rng(4);
  const nn::GaussianNet net(cfg, rng);
  const int batch = static_cast<int>(state.range(0));
  const nn::Matrix x = nn::Matrix::Random(cfg.input_dim(), batch);
  const nn::Matrix y = nn::Matrix::Random(cfg.state_dim, batch);
  for (auto _ : state) benchmark::DoNotOptimize(nn::nll_loss(net, x, y).loss);
}
BENCHMARK(BM_NllGradient)->Arg(32)->Arg(256);

static void BM_CemPendulum(benchmark::State& state) {
  const env::Pendulum pend;
  oracle::PlanningProblem p;
  p.env = &pend;
  p.dynamics = [&pend](const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) -> Eigen::MatrixXd {
    Eigen::MatrixXd out(s.rows(), s.cols());
    for (Eigen::Index j = 0; j < s.cols(); ++j)
      out.col(j) = env::pendulum_step(s.col(j), a(0, j), pend.constants()).next_state;
    return out;
  };
  oracle::OracleSpec spec;
  spec.population = 25;
  spec.elites = 3;
  spec.iterations = 2;
  Rng rng = make_rng(5);
  Eigen::VectorXd s(2);
  s << 3.0, 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(oracle::cem_plan(p, s, spec, rng).plan(0, 0));
}
BENCHMARK(BM_CemPendulum);

BENCHMARK_MAIN();
