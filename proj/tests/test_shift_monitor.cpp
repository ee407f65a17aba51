#include <cmath>
#include <random>
#include <sstream>

#include "cmlo/coverage.hpp"
#include "cmlo/error.hpp"
#include "cmlo/trigger.hpp"
#include "doctest.h"
#include "support/reference.hpp"

using namespace cmlo;
using namespace cmlo::shift;

namespace {

std::vector<Eigen::VectorXd> cloud(int n, int dim, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  std::vector<Eigen::VectorXd> out;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd v(dim);
    for (int k = 0; k < dim; ++k) v(k) = g(rng);
    out.push_back(v);
  }
  return out;
}

class FixedErrorModel final : public model::DynamicsModel {
 public:
  explicit FixedErrorModel(double err) : err_(err) {}
  int members() const override { return 1; }
  model::Matrix predict_mean(const model::Matrix& s, const model::Matrix&) const override { return s; }
  model::Matrix rollout_step(const model::Matrix& s, const model::Matrix&, Rng&, bool) const override {
    return s;
  }
  double one_step_error(std::span<const nn::TransitionTuple>) const override { return err_; }

 private:
  double err_;
};

// Drives accumulate() the way the training loop does: F steps between checks.
std::vector<long> fire_steps(TriggerState& st, const TriggerConfig& cfg, long horizon, double ratio,
                             double err) {
  std::vector<long> fired;
  for (long t = 1; t <= horizon; ++t) {
    ++st.steps_since_training;
    if (t % cfg.check_frequency != 0) continue;
    if (accumulate(st, cfg, ratio, err, t) == Decision::Train) {
      fired.push_back(t);
      reset_after_training(st, 1.0);
    }
  }
  return fired;
}

}  // namespace

TEST_CASE("pca on axis-aligned and isotropic clouds") {
  std::vector<Eigen::VectorXd> line;
  for (int i = 0; i < 10; ++i) line.push_back(Eigen::Vector3d(i - 4.5, 0.0, 0.0));
  const auto p = pca_project(line, 2);
  CHECK(std::abs(p.basis(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.explained_variance(1) == doctest::Approx(0.0).epsilon(1e-12));
  for (int i = 0; i < 10; ++i) {
    CHECK(p.points[i].x == doctest::Approx(i - 4.5).epsilon(1e-12));
    CHECK(std::abs(p.points[i].y) < 1e-12);
  }

  const auto iso = pca_project(cloud(20000, 3, 1), 2);
  CHECK(iso.explained_variance(0) == doctest::Approx(1.0).epsilon(0.05));
  CHECK(iso.explained_variance(1) == doctest::Approx(1.0).epsilon(0.05));
  CHECK((iso.basis.transpose() * iso.basis - Eigen::Matrix2d::Identity()).norm() < 1e-12);

  std::vector<Eigen::VectorXd> two = {Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(-1, 0, 4)};
  const auto pp = pca_project(two, 2);
  const double d = std::hypot(pp.points[0].x - pp.points[1].x, pp.points[0].y - pp.points[1].y);
  CHECK(d == doctest::Approx((two[0] - two[1]).norm()).epsilon(1e-12));

  std::vector<Eigen::VectorXd> same(4, Eigen::Vector2d(1.0, 1.0));
  try {
    pca_project(same, 2);
    FAIL("expected DegenerateCloud");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateCloud);
  }
}

TEST_CASE("hull area of simple shapes") {
  CHECK(convex_hull_area({{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}}) == doctest::Approx(1.0));
  CHECK(convex_hull_area({{0, 0}, {1, 0}, {0, 1}}) == doctest::Approx(0.5));
  CHECK(convex_hull_area({{0, 0}, {1, 1}, {2, 2}, {3, 3}}) == 0.0);
  CHECK(convex_hull_area({{1, 1}, {1, 1}, {1, 1}}) == 0.0);
  CHECK(convex_hull_area({}) == 0.0);
  CHECK(convex_hull_area({{0, 0}, {0, 0}, {2, 0}, {2, 0}, {0, 2}}) == doctest::Approx(2.0));
  CHECK_THROWS_AS(convex_hull_area({{0, 0}, {1, NAN}, {0, 1}}), Error);

  const auto hull = graham_scan({{0, 0}, {2, 0}, {1, 1}, {2, 2}, {0, 2}, {1, 0}});
  REQUIRE(hull.size() == 4);
  CHECK(hull[0].x == 0.0);
  CHECK(hull[0].y == 0.0);
  CHECK(hull[1].x == 2.0);  // counter-clockwise
}

TEST_CASE("hull area matches brute force on random sets") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    std::vector<Point2> pts(3 + t % 40);
    for (auto& p : pts) {
      p = {u(rng), u(rng)};
      if (t % 3 == 0) p = {std::round(p.x * 3), std::round(p.y * 3)};  // many duplicates/collinear
    }
    CHECK(std::abs(convex_hull_area(pts) - ref::brute_force_hull_area(pts)) <= 1e-9);
  }
}

TEST_CASE("coverage volume") {
  Rng rng = make_rng(1);
  std::vector<Eigen::VectorXd> repeated(50, Eigen::Vector3d(0.1, 0.2, 0.3));
  const auto r = coverage_volume(repeated, 20, rng);
  CHECK(r.volume == 0.0);
  CHECK(r.degenerate);

  std::mt19937_64 g(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Eigen::VectorXd> square;
  for (int i = 0; i < 5000; ++i) square.push_back(Eigen::Vector2d(u(g), u(g)));
  const auto sq = coverage_volume(square, 1000, rng);
  CHECK(sq.volume == doctest::Approx(1.0).epsilon(0.03));
  CHECK(sq.n_points == 1000);

  // Sample covers the buffer: no randomness involved.
  Rng a = make_rng(10), b = make_rng(99);
  const auto small = cloud(30, 4, 3);
  CHECK(coverage_volume(small, 100, a).volume == coverage_volume(small, 100, b).volume);

  std::vector<Eigen::VectorXd> none;
  CHECK_THROWS_AS(coverage_volume(none, 10, rng), Error);
}

TEST_CASE("raw condition") {
  CHECK(raw_condition(2.0, 1.0, 0.25) == 0.5);
  try {
    raw_condition(1.0, 0.0, 1.0);
    FAIL("expected DegenerateBase");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateBase);
  }
}

TEST_CASE("perfect model trains only at the maximal interval") {
  TriggerConfig cfg;
  cfg.alpha = 0.5;
  cfg.beta = 1.0;
  cfg.check_frequency = 50;
  cfg.t_min = 100;
  cfg.t_max = 400;
  TriggerState st;
  const auto fired = fire_steps(st, cfg, 2000, 1.0, 0.0);
  CHECK(fired == std::vector<long>{400, 800, 1200, 1600, 2000});
  for (const auto& r : st.estimates_log) CHECK(r.term == 0.0);
}

TEST_CASE("estimate at the threshold fires at the first eligible check") {
  TriggerConfig cfg;
  cfg.alpha = std::log(2.0);
  cfg.beta = 1.0;
  cfg.check_frequency = 50;
  cfg.t_min = 50;
  cfg.t_max = 1000;
  TriggerState st;
  const auto fired = fire_steps(st, cfg, 200, 2.0, 0.5);  // ratio * err + beta = 2
  CHECK(fired == std::vector<long>{50, 100, 150, 200});

  // t_min holds the decision back even with a large accumulator.
  cfg.t_min = 150;
  TriggerState held;
  CHECK(fire_steps(held, cfg, 300, 2.0, 0.5) == std::vector<long>{150, 300});
}

TEST_CASE("scripted accumulator trace") {
  TriggerConfig cfg;
  cfg.alpha = 1.0;
  cfg.beta = 0.5;
  cfg.t_min = 200;
  cfg.t_max = 1000;
  TriggerState st;
  // ratio * err: 0.5, 1.5, 2.5, 0 -> terms log 1, log 2, log 3, log 0.5
  const double products[] = {0.5, 1.5, 2.5, 0.0};
  std::vector<Decision> ds;
  for (int i = 0; i < 4; ++i) {
    st.steps_since_training += 50;
    ds.push_back(accumulate(st, cfg, 1.0, products[i], 50 * (i + 1)));
  }
  const auto& log = st.estimates_log;
  REQUIRE(log.size() == 4);
  CHECK(log[0].accumulator == doctest::Approx(0.0));
  CHECK(log[1].accumulator == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(log[2].accumulator == doctest::Approx(std::log(6.0)).epsilon(1e-15));
  CHECK(log[3].term == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
  CHECK(log[3].accumulator == doctest::Approx(std::log(3.0)).epsilon(1e-15));
  CHECK(ds == std::vector<Decision>{Decision::Hold, Decision::Hold, Decision::Hold, Decision::Train});

  // A failed estimate adds nothing.
  TriggerState f;
  f.steps_since_training = 500;
  CHECK(accumulate(f, cfg, 1.0, 100.0, 1, true) == Decision::Hold);
  CHECK(f.accumulator == 0.0);
  CHECK(f.estimates_log.back().estimator_failed);

  std::ostringstream csv;
  write_trigger_csv(csv, log);
  CHECK(csv.str().rfind("step,ratio,pred_error,term,accumulator,decision,estimator_failed\n", 0) == 0);
}

TEST_CASE("trigger step anchors the coverage base") {
  TriggerConfig cfg;
  cfg.alpha = 0.1;
  cfg.beta = 1.0;
  cfg.t_min = 1;
  cfg.t_max = 1000;
  cfg.hull_sample_size = 500;
  const auto states = cloud(200, 3, 8);
  const FixedErrorModel model(1.0);
  std::vector<nn::TransitionTuple> fresh(1);
  Rng rng = make_rng(4);
  TriggerState st;
  st.steps_since_training = 10;
  const auto out = trigger_step(st, cfg, fresh, model, states, rng, 10);
  CHECK(out.decision == Decision::Train);
  CHECK(out.current_volume > 0.0);
  CHECK(st.base_hull_volume == out.current_volume);
  CHECK(st.accumulator == 0.0);
  CHECK(st.estimates_log.back().ratio == 1.0);

  // Same buffer, same base: ratio 1 and error 0 -> nothing accumulates.
  const FixedErrorModel perfect(0.0);
  st.steps_since_training = 50;
  const auto again = trigger_step(st, cfg, fresh, perfect, states, rng, 60);
  CHECK(again.decision == Decision::Hold);
  CHECK(st.estimates_log.back().ratio == doctest::Approx(1.0));
  CHECK(st.accumulator == 0.0);
}

TEST_CASE("trigger config validation") {
  TriggerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.t_min = 600;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.alpha = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
