#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <boost/random/normal_distribution.hpp>

#include "glmmlasso/simulate.hpp"
#include "helpers.hpp"

using namespace glmmlasso;

namespace {

double corr(const VectorXd& a, const VectorXd& b) {
  const VectorXd ac = a.array() - a.mean(), bc = b.array() - b.mean();
  return ac.dot(bc) / std::sqrt(ac.squaredNorm() * bc.squaredNorm());
}

double logistic(double e) { return 1.0 / (1.0 + std::exp(-e)); }

}  // namespace

TEST_CASE("AR(1) covariate correlations") {
  SUBCASE("independent columns") {
    Engine eng = make_engine(3, 0);
    const MatrixXd X = gen_design_matrix(200, 10, 6, 0.0, eng);
    CHECK(X.col(0).isOnes());
    for (int j = 1; j < 6; ++j)
      for (int k = j + 1; k < 6; ++k) CHECK(std::abs(corr(X.col(j), X.col(k))) <= 0.1);
  }
  SUBCASE("rho = 0.2") {
    Engine eng = make_engine(4, 0);
    const MatrixXd X = gen_design_matrix(500, 10, 8, 0.2, eng);
    for (int j = 1; j + 1 < 8; ++j) CHECK(std::abs(corr(X.col(j), X.col(j + 1)) - 0.2) <= 0.05);
    for (int j = 1; j + 2 < 8; ++j) CHECK(std::abs(corr(X.col(j), X.col(j + 2)) - 0.04) <= 0.05);
    for (int j = 1; j < 8; ++j) {
      CHECK(std::abs(X.col(j).mean()) <= 0.05);
      CHECK(std::abs(X.col(j).squaredNorm() / X.rows() - 1.0) <= 0.08);
    }
  }
}

TEST_CASE("Gauss-Hermite rule integrates polynomials against exp(-x^2)") {
  std::vector<double> x, w;
  gauss_hermite(12, x, w);
  REQUIRE(x.size() == 12);
  auto integral = [&](int k) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * std::pow(x[i], k);
    return s;
  };
  const double sp = std::sqrt(std::numbers::pi);
  CHECK(integral(0) == doctest::Approx(sp).epsilon(1e-13));
  CHECK(std::abs(integral(1)) <= 1e-13);
  CHECK(integral(2) == doctest::Approx(sp / 2).epsilon(1e-13));
  CHECK(integral(10) == doctest::Approx(sp * 945.0 / 32.0).epsilon(1e-12));
}

TEST_CASE("quadrature likelihood is exact for a gaussian random intercept") {
  auto d = testutil::random_dataset(6, 4, 3, 201);
  VectorXd b(3);
  b << 0.3, -0.5, 0.8;
  testutil::draw_response(d, FamilySpec::gaussian(), b, 0.9, 202);
  Problem prob(d, testutil::random_intercept(), FamilySpec::gaussian(false));
  ParamState psi = prob.initial_state();
  psi.beta = b;
  psi.theta << 0.8;
  psi.phi = 0.7;
  // y_g ~ N(X_g b, phi I + theta^2 11^T)
  double ll = 0.0;
  for (int g = 0; g < 6; ++g) {
    const VectorXd r = d.y.segment(g * 4, 4) - d.X.middleRows(g * 4, 4) * b;
    const MatrixXd S = 0.7 * MatrixXd::Identity(4, 4) + 0.64 * MatrixXd::Ones(4, 4);
    Eigen::LLT<MatrixXd> llt(S);
    const MatrixXd L = llt.matrixL();
    ll += -0.5 * (4 * std::log(2 * std::numbers::pi) + 2 * L.diagonal().array().log().sum() + r.dot(llt.solve(r)));
  }
  CHECK(gh_loglik(prob, psi) == doctest::Approx(ll).epsilon(1e-10));
}

TEST_CASE("quadrature likelihood at theta = 0 is the GLM likelihood") {
  auto d = testutil::random_dataset(5, 5, 3, 211);
  VectorXd b(3);
  b << 0.1, 0.7, -0.4;
  testutil::draw_response(d, FamilySpec::bernoulli(), b, 1.0, 212);
  Problem prob(d, testutil::random_intercept(), FamilySpec::bernoulli());
  ParamState psi = prob.initial_state();
  psi.beta = b;
  psi.theta << 0.0;
  double ll = 0.0;
  for (int i = 0; i < d.n(); ++i) {
    const double mu = logistic(d.X.row(i).dot(b));
    ll += d.y[i] > 0.5 ? std::log(mu) : std::log(1.0 - mu);
  }
  CHECK(gh_loglik(prob, psi) == doctest::Approx(ll).epsilon(1e-10));
}

TEST_CASE("quadrature converges under node doubling") {
  auto d = testutil::random_dataset(10, 5, 3, 221);
  VectorXd b(3);
  b << -0.2, 0.6, 0.5;
  testutil::draw_response(d, FamilySpec::bernoulli(), b, 1.0, 222);
  Problem prob(d, testutil::random_intercept(), FamilySpec::bernoulli());
  ParamState psi = prob.initial_state();
  psi.beta = b;
  psi.theta << 1.0;
  const double g20 = gh_loglik(prob, psi, 20), g60 = gh_loglik(prob, psi, 60);
  CHECK(std::abs(g20 - g60) <= 1e-8);
  // Laplace stays within the stated accuracy band
  const double f = q_la(prob, psi, 0.0).value.f;
  CHECK(std::abs(f + 2.0 * g60) / std::abs(2.0 * g60) <= 0.03);

  SUBCASE("two random effects use a tensor grid") {
    CovarianceTemplate c;
    c.blocks.push_back({0, {kInterceptColumn, 1}, CovStructure::diagonal});
    Problem p2(d, c, FamilySpec::bernoulli());
    ParamState s2 = p2.initial_state();
    s2.beta = b;
    s2.theta << 0.9, 0.5;
    CHECK(std::abs(gh_loglik(p2, s2, 20) - gh_loglik(p2, s2, 40)) <= 1e-7);
  }
}

TEST_CASE("generated bernoulli data match the marginal mean") {
  auto des = SimDesign::named("logistic_L1");
  des.N = 400;
  const auto gen = gen_replicate(des, 5, 0);
  REQUIRE(gen.data.n() == 4000);
  // Monte-Carlo over covariates and both random effects
  Engine eng = make_engine(99, 1);
  boost::random::normal_distribution<double> nd;
  double acc = 0.0;
  const int M = 200000;
  for (int r = 0; r < M; ++r) {
    double x[5];
    x[1] = nd(eng);
    for (int k = 2; k < 5; ++k) x[k] = 0.2 * x[k - 1] + std::sqrt(1 - 0.04) * nd(eng);
    double eta = des.beta0[0] + nd(eng) * std::sqrt(des.theta2_true[0]);
    for (int k = 1; k < 5; ++k) eta += des.beta0[k] * x[k];
    eta += x[1] * nd(eng) * std::sqrt(des.theta2_true[1]);
    acc += logistic(eta);
  }
  CHECK(std::abs(gen.data.y.mean() - acc / M) <= 0.05);
}

TEST_CASE("generated poisson counts match exp(eta) on average") {
  auto des = SimDesign::named("poisson_L1");
  des.N = 200;
  const auto gen = gen_replicate(des, 6, 0);
  double expect = 0.0;
  for (int i = 0; i < gen.data.n(); ++i) {
    const int g = gen.data.groups[0].level[i];
    expect += std::exp(gen.data.X.row(i).dot(des.beta0) + gen.b[g]);
  }
  expect /= gen.data.n();
  CHECK(std::abs(gen.data.y.mean() / expect - 1.0) <= 0.05);
}

TEST_CASE("simulated data are reproducible per replicate") {
  const auto des = SimDesign::named("poisson_L1");
  const auto a = gen_replicate(des, 42, 3), b = gen_replicate(des, 42, 3), c = gen_replicate(des, 42, 4);
  CHECK(a.data.X == b.data.X);
  CHECK(a.data.y == b.data.y);
  CHECK(a.b == b.b);
  CHECK(a.data.y != c.data.y);
}

TEST_CASE("named designs") {
  for (const auto& n : SimDesign::names()) {
    const auto d = SimDesign::named(n);
    CHECK_NOTHROW(d.validate());
    CHECK(d.beta0.size() == d.p);
    CHECK(d.s0() >= 4);
  }
  const auto h1 = SimDesign::named("logistic_H1");
  CHECK(h1.p == 150);
  CHECK(SimDesign::named("logistic_H1", StudyScale::full).p == 500);
  CHECK(h1.true_support().size() == 5);
  CHECK_THROWS_AS(SimDesign::named("nope"), InvalidInput);
}

TEST_CASE("median and rescaled MAD") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  // |x - 3| = {2,1,0,1,2} -> median 1
  CHECK(rescaled_mad({1.0, 2.0, 3.0, 4.0, 5.0}) == doctest::Approx(1.4826));
}

TEST_CASE("study tables do not depend on the worker count") {
  auto des = SimDesign::named("poisson_L1");
  des.N = 10;
  des.p = 6;
  des.beta0.conservativeResize(6);
  StudyConfig cfg;
  cfg.replicates = 3;
  cfg.methods = {"glmmlasso", "hybrid", "oracle"};
  cfg.path.n_lambda = 6;
  cfg.workers = 1;
  const auto a = run_study(des, cfg);
  cfg.workers = 3;
  const auto b = run_study(des, cfg);
  CHECK(a.replicates_csv() == b.replicates_csv());
  CHECK(a.summary_csv() == b.summary_csv());
  for (const auto& row : a.rows)
    if (row.method == "oracle") CHECK(row.tp == des.s0());
}
