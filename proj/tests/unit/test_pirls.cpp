#include <doctest.h>

#include <cmath>

#include <boost/random/normal_distribution.hpp>

#include "glmmlasso/error.hpp"
#include "glmmlasso/pirls.hpp"
#include "helpers.hpp"

using namespace glmmlasso;

namespace {

Dataset tiny(const std::vector<double>& y, const std::vector<int>& g) {
  Dataset d;
  const int n = static_cast<int>(y.size());
  d.y = Eigen::Map<const VectorXd>(y.data(), n);
  d.X = MatrixXd::Ones(n, 1);
  d.column_names = {"(Intercept)"};
  d.groups.push_back(GroupingFactor::from_ints("g", g));
  return d;
}

double bisect(auto&& f, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(lo) * f(mid) <= 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("gaussian ridge closed form in one iteration") {
  Problem prob(tiny({2.0, 0.0}, {0, 1}), testutil::random_intercept(), FamilySpec::gaussian(true, 1.0));
  ParamState psi = prob.initial_state();
  psi.beta << 0.0;
  psi.theta << 1.0;
  const auto r = solve_mode(prob, psi, VectorXd::Zero(2));
  CHECK(r.converged);
  CHECK(r.iterations <= 2);
  CHECK(std::abs(r.u_tilde[0] - 1.0) <= 1e-10);
  CHECK(std::abs(r.u_tilde[1]) <= 1e-10);
}

TEST_CASE("theta zero gives u = 0") {
  auto d = testutil::random_dataset(5, 4, 3, 1);
  testutil::draw_response(d, FamilySpec::bernoulli(), VectorXd::Zero(3), 1.0, 2);
  Problem prob(d, testutil::random_intercept(), FamilySpec::bernoulli());
  ParamState psi = prob.initial_state();
  psi.theta << 0.0;
  const auto r = solve_mode(prob, psi, VectorXd::Zero(prob.q()));
  CHECK(r.u_tilde.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.iterations <= 1);
  CHECK(r.logdet == 0.0);
}

TEST_CASE("bernoulli single group mode matches a bisection oracle") {
  Problem prob(tiny({1.0, 1.0}, {0, 0}), testutil::random_intercept(), FamilySpec::bernoulli());
  ParamState psi = prob.initial_state();
  psi.beta << 0.0;
  psi.theta << 1.0;
  const auto r = solve_mode(prob, psi, VectorXd::Zero(1));
  const double oracle = bisect([](double u) { return -2.0 * (1.0 - 1.0 / (1.0 + std::exp(-u))) + u; }, 0.0, 5.0);
  CHECK(oracle == doctest::Approx(0.674832).epsilon(1e-5));
  CHECK(std::abs(r.u_tilde[0] - oracle) <= 1e-9);
  // idempotent under warm start
  const auto r2 = solve_mode(prob, psi, r.u_tilde);
  CHECK(r2.iterations <= 1);
}

TEST_CASE("S value and gradient") {
  Problem prob(tiny({1.0, 0.0}, {0, 1}), testutil::random_intercept(), FamilySpec::bernoulli());
  const double th[] = {1.0};
  const auto zl = prob.re.zlambda(th);
  const VectorXd xb = VectorXd::Zero(2);
  CHECK(s_value(prob, zl, xb, 1.0, VectorXd::Zero(2)) == doctest::Approx(2.0 * std::log(2.0)));

  auto d = testutil::random_dataset(4, 3, 2, 3);
  testutil::draw_response(d, FamilySpec::bernoulli(), VectorXd::Zero(2), 1.0, 4);
  Problem p2(d, testutil::random_intercept(), FamilySpec::bernoulli());
  const double th2[] = {0.8};
  const auto zl2 = p2.re.zlambda(th2);
  const VectorXd xb2 = d.X * VectorXd::Constant(2, 0.3);
  Engine eng = make_engine(5, 0);
  boost::random::normal_distribution<double> nd;
  VectorXd u(p2.q());
  for (auto& v : u) v = nd(eng);
  const VectorXd g = s_grad(p2, zl2, xb2, 1.0, u);
  for (int j = 0; j < p2.q(); ++j) {
    auto f = [&](double t) {
      VectorXd w = u;
      w[j] = t;
      return s_value(p2, zl2, xb2, 1.0, w);
    };
    CHECK(std::abs(testutil::fd_central(f, u[j], 1e-5) - g[j]) <= 1e-6);
  }
  // gaussian, u = 0: -Lambda^T Z^T (y - X beta) / phi
  auto d3 = testutil::random_dataset(3, 2, 2, 6);
  testutil::draw_response(d3, FamilySpec::gaussian(), VectorXd::Zero(2), 1.0, 7);
  Problem p3(d3, testutil::random_intercept(), FamilySpec::gaussian(true, 2.0));
  const double th3[] = {1.5};
  const auto zl3 = p3.re.zlambda(th3);
  const VectorXd g3 = s_grad(p3, zl3, VectorXd::Zero(6), 2.0, VectorXd::Zero(3));
  const VectorXd ref = -(MatrixXd(p3.re.z()) * 1.5).transpose() * d3.y / 2.0;
  CHECK((g3 - ref).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("block, sparse and dense solvers agree") {
  auto d = testutil::random_dataset(8, 6, 3, 9);
  testutil::draw_response(d, FamilySpec::poisson(), VectorXd::Constant(3, 0.2), 0.7, 10);
  CovarianceTemplate c;
  c.blocks.push_back({0, {kInterceptColumn, 1}, CovStructure::unstructured_lower});
  Problem prob(d, c, FamilySpec::poisson());
  ParamState psi = prob.initial_state();
  psi.theta << 0.7, 0.2, 0.5;
  psi.beta << 0.1, 0.2, -0.1;
  const auto zl = prob.re.zlambda(std::span<const double>(psi.theta.data(), 3));
  const VectorXd xb = d.X * psi.beta;
  PirlsConfig cfg;
  cfg.solver = SolverKind::block;
  const auto a = solve_mode(prob, zl, xb, 1.0, VectorXd::Zero(prob.q()), cfg);
  cfg.solver = SolverKind::dense;
  const auto b = solve_mode(prob, zl, xb, 1.0, VectorXd::Zero(prob.q()), cfg);
  const auto zg = prob.re.zlambda(std::span<const double>(psi.theta.data(), 3), true);
  cfg.solver = SolverKind::sparse;
  const auto s = solve_mode(prob, zg, xb, 1.0, VectorXd::Zero(prob.q()), cfg);
  CHECK((a.u_tilde - b.u_tilde).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((a.u_tilde - s.u_tilde).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(a.logdet == doctest::Approx(b.logdet).epsilon(1e-10));
  CHECK(a.logdet == doctest::Approx(s.logdet).epsilon(1e-10));
  CHECK(a.grad_inf <= 1e-8 * (1.0 + a.u_tilde.cwiseAbs().maxCoeff()));
  CHECK(a.W.minCoeff() > 0.0);
  CHECK(a.logdet >= 0.0);
}

TEST_CASE("pirls iteration budget raises a convergence error") {
  auto d = testutil::random_dataset(5, 4, 2, 11);
  testutil::draw_response(d, FamilySpec::bernoulli(), VectorXd::Zero(2), 2.0, 12);
  Problem prob(d, testutil::random_intercept(), FamilySpec::bernoulli());
  ParamState psi = prob.initial_state();
  psi.theta << 3.0;
  PirlsConfig cfg;
  cfg.max_iter = 1;
  cfg.grad_tol = 0.0;
  cfg.cert_tol = 0.0;
  CHECK_THROWS_AS(solve_mode(prob, psi, VectorXd::Zero(prob.q()), cfg), PirlsConvergenceError);
}
