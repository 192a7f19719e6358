#include <doctest.h>

#include <cmath>
#include <limits>

#include "glmmlasso/glm_lasso.hpp"
#include "glmmlasso/optimizer.hpp"
#include "helpers.hpp"

using namespace glmmlasso;

TEST_CASE("descent direction examples") {
  CHECK(descent_direction(0.5, 1.0, 1.0, 0.0, true) == 0.0);
  CHECK(descent_direction(5.0, 2.0, 2.0, 0.0, true) == doctest::Approx(-1.5));
  CHECK(descent_direction(4.0, 2.0, 0.0, 0.3, false) == doctest::Approx(-2.0));
  // grid oracle for 5d + d^2 + 2|d|
  double best = 0.0, bv = std::numeric_limits<double>::infinity();
  for (double d = -4.0; d <= 1.0; d += 1e-4) {
    const double v = 5 * d + d * d + 2 * std::abs(d);
    if (v < bv) {
      bv = v;
      best = d;
    }
  }
  CHECK(best == doctest::Approx(-1.5).epsilon(1e-3));
}

TEST_CASE("descent direction minimizes the one-dimensional surrogate") {
  Engine eng = make_engine(3, 1);
  boost::random::normal_distribution<double> nd;
  for (int r = 0; r < 200; ++r) {
    const double g = 3 * nd(eng), h = std::exp(nd(eng)), lam = std::abs(2 * nd(eng)), b = nd(eng);
    const double d = descent_direction(g, h, lam, b, true);
    auto sur = [&](double x) { return g * x + 0.5 * h * x * x + lam * std::abs(b + x); };
    for (double e : {-1e-3, 1e-3, -0.1, 0.1}) CHECK(sur(d) <= sur(d + e) + 1e-12);
  }
}

namespace {

Problem bern_problem(int N, int m, int p, double tau, std::uint64_t seed) {
  auto d = testutil::random_dataset(N, m, p, seed);
  VectorXd beta = VectorXd::Zero(p);
  beta[0] = 0.2;
  if (p > 1) beta[1] = 1.0;
  if (p > 2) beta[2] = -1.0;
  testutil::draw_response(d, FamilySpec::bernoulli(), beta, tau, seed + 1);
  return Problem(d, testutil::random_intercept(), FamilySpec::bernoulli());
}

}  // namespace

TEST_CASE("armijo accepts the exact newton step for a gaussian quadratic") {
  auto d = testutil::random_dataset(5, 4, 2, 21);
  testutil::draw_response(d, FamilySpec::gaussian(), VectorXd::Constant(2, 1.0), 0.0, 22);
  Problem prob(d, testutil::random_intercept(), FamilySpec::gaussian(true, 1.0));
  ParamState psi = prob.initial_state();
  psi.theta << 0.0;
  psi.beta.setZero();
  OptimizerConfig cfg;
  GlmmLassoSolver s(prob, 0.0, cfg, psi);
  const double g = s.gradient(1, false);
  const double h = 2.0 * d.X.col(1).squaredNorm();
  const auto r = s.armijo_search(1, descent_direction(g, h, 0.0, 0.0, false), h, g, false);
  CHECK(r.accepted);
  CHECK(r.alpha == 1.0);
  CHECK(r.trials == 1);
  // coordinate exactly minimized: gradient vanishes
  CHECK(std::abs(s.gradient(1, false)) <= 1e-8);
}

TEST_CASE("armijo backtracks when the curvature is clamped") {
  auto prob = bern_problem(6, 5, 3, 0.5, 31);
  ParamState psi = prob.initial_state();
  OptimizerConfig cfg;
  cfg.mode = FitMode::exact;
  GlmmLassoSolver s(prob, 0.0, cfg, psi);
  const double q0 = s.q_la();
  const double g = s.gradient(1, true);
  const double h = 1e-5;  // forced to c_min: the unit step overshoots
  const double d = descent_direction(g, h, 0.0, 0.0, false);
  const auto r = s.armijo_search(1, d, h, g, true);
  CHECK(r.accepted);
  CHECK(r.alpha < 1.0);
  CHECK(r.new_q_la < q0);
  // direct re-evaluation agrees with the recorded value
  CHECK(q_la(prob, s.state(), 0.0).value.q_la == doctest::Approx(r.new_q_la).epsilon(1e-10));
  // zero direction is a no-op
  const auto z = s.armijo_search(2, 0.0, 1.0, 0.0, true);
  CHECK(!z.accepted);
  CHECK(z.trials == 0);
}

TEST_CASE("theta update matches a grid scan for a gaussian random intercept") {
  auto d = testutil::random_dataset(8, 4, 1, 41);
  testutil::draw_response(d, FamilySpec::gaussian(), VectorXd::Constant(1, 0.5), 1.2, 42);
  Problem prob(d, testutil::random_intercept(), FamilySpec::gaussian(true, 1.0));
  ParamState psi = prob.initial_state();
  psi.beta << 0.5;
  OptimizerConfig cfg;
  GlmmLassoSolver s(prob, 0.0, cfg, psi);
  s.optimize_theta(0);
  const double got = s.state().theta[0];
  double best = 0.0, bq = std::numeric_limits<double>::infinity();
  // coarse scan then 1e-5 grid around the coarse minimum
  for (double t = 0.0; t <= 5.0; t += 1e-2) {
    ParamState p = psi;
    p.theta << t;
    const double q = q_la(prob, p, 0.0).value.q_la;
    if (q < bq) {
      bq = q;
      best = t;
    }
  }
  const double c = best;
  for (double t = std::max(0.0, c - 0.01); t <= c + 0.01; t += 1e-5) {
    ParamState p = psi;
    p.theta << t;
    const double q = q_la(prob, p, 0.0).value.q_la;
    if (q < bq) {
      bq = q;
      best = t;
    }
  }
  CHECK(std::abs(got - best) <= 1e-3);
}

TEST_CASE("theta at the boundary without group heterogeneity") {
  auto prob = bern_problem(50, 10, 2, 0.0, 51);
  ParamState psi = prob.initial_state();
  OptimizerConfig cfg;
  const auto rec = fit(prob, 0.0, cfg, psi);
  CHECK(rec.converged);
  CHECK(rec.psi_hat.theta[0] < 0.15);
}

TEST_CASE("phi is skipped for bernoulli") {
  auto prob = bern_problem(5, 4, 2, 1.0, 61);
  OptimizerConfig cfg;
  GlmmLassoSolver s(prob, 0.0, cfg, prob.initial_state());
  CHECK(!s.optimize_phi());
  CHECK(s.state().phi == 1.0);
}

TEST_CASE("gaussian dispersion estimate") {
  auto d = testutil::random_dataset(20, 5, 2, 71);
  testutil::draw_response(d, FamilySpec::gaussian(), VectorXd::Constant(2, 1.0), 0.8, 72);
  Problem prob(d, testutil::random_intercept(), FamilySpec::gaussian(false));
  OptimizerConfig cfg;
  const auto rec = fit(prob, 0.0, cfg, init_start(prob, cfg));
  CHECK(rec.converged);
  CHECK(rec.psi_hat.phi > 0.6);
  CHECK(rec.psi_hat.phi < 1.5);
}

TEST_CASE("lambda above lambda_max zeroes the penalized coefficients") {
  auto prob = bern_problem(10, 5, 6, 0.8, 81);
  OptimizerConfig cfg;
  const auto rec = fit(prob, 1e4, cfg, init_start(prob, cfg));
  CHECK(rec.converged);
  for (int k = 1; k < prob.p(); ++k) CHECK(rec.psi_hat.beta[k] == 0.0);
  CHECK(rec.active_set.size() <= 1);
}

TEST_CASE("fit: monotone trace, KKT at convergence, both modes") {
  for (auto mode : {FitMode::approximate, FitMode::exact}) {
    auto prob = bern_problem(20, 6, 8, 1.0, 91);
    OptimizerConfig cfg;
    cfg.mode = mode;
    const auto start = init_start(prob, cfg);
    for (double lam : {0.0, 3.0, 15.0}) {
      const auto rec = fit(prob, lam, cfg, start);
      CHECK(rec.converged);
      CHECK(rec.kkt.ok);
      CHECK(rec.monotonicity_violations == 0);
      for (std::size_t i = 1; i < rec.trace.size(); ++i) CHECK(rec.trace[i] <= rec.trace[i - 1] + 1e-10);
      CHECK(rec.trace.back() == rec.q_la_final);
      for (int k : rec.active_set) CHECK(rec.psi_hat.beta[k] != 0.0);
    }
  }
}

TEST_CASE("active-set cycling matches full cycling") {
  auto prob = bern_problem(25, 8, 15, 1.0, 101);
  OptimizerConfig c5, c1;
  c1.active_set_period = 1;
  const auto start = init_start(prob, c5);
  const auto a = fit(prob, 8.0, c5, start);
  const auto b = fit(prob, 8.0, c1, start);
  CHECK(a.active_set == b.active_set);
  CHECK(std::abs(a.q_la_final - b.q_la_final) <= 1e-6 * std::abs(b.q_la_final));
}

TEST_CASE("internal GLM lasso soft-thresholds on an orthonormal design") {
  // X^T X = n I with centered columns; gaussian phi = 1 makes dev gradient -2 X^T r
  const int n = 8;
  MatrixXd X(n, 3);
  X.col(0).setOnes();
  X.col(1) << 1, -1, 1, -1, 1, -1, 1, -1;
  X.col(2) << 1, 1, -1, -1, 1, 1, -1, -1;
  VectorXd y(n);
  y << 3.0, 1.0, 0.5, -0.2, 2.0, 0.1, 0.4, -1.0;
  const std::vector<bool> mask{false, true, true};
  const FamilySpec fam = FamilySpec::gaussian(true, 1.0);
  const double lam = 3.0;
  const auto r = glm_lasso(X, y, fam, 1.0, mask, lam, {}, 10000, 1e-14);
  const VectorXd ols = X.transpose() * y / n;
  CHECK(r.beta[0] == doctest::Approx(ols[0]).epsilon(1e-6));
  for (int k = 1; k < 3; ++k) {
    // minimize n b^2 - 2 n ols b + lam |b|  ->  soft(ols, lam / (2n))
    const double t = lam / (2.0 * n);
    const double soft = std::copysign(std::max(0.0, std::abs(ols[k]) - t), ols[k]);
    CHECK(std::abs(r.beta[k] - soft) <= 1e-6);
  }
}

TEST_CASE("null bernoulli data gives a near intercept-only start") {
  auto d = testutil::random_dataset(30, 5, 6, 111);
  testutil::draw_response(d, FamilySpec::bernoulli(), VectorXd::Zero(6), 0.0, 112);
  Problem prob(d, testutil::random_intercept(), FamilySpec::bernoulli());
  const auto cv = glm_lasso_cv(d.X, d.y, prob.family, 1.0, prob.penalty_mask);
  int nz = 0;
  for (int k = 1; k < 6; ++k) nz += cv.fit.beta[k] != 0.0;
  CHECK(nz <= 2);
  CHECK(cv.best <= 10);
}
