#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "glmmlasso/selection.hpp"
#include <Eigen/QR>

#include "helpers.hpp"

using namespace glmmlasso;

namespace {

Problem bern(int N, int m, int p, std::uint64_t seed) {
  auto d = testutil::random_dataset(N, m, p, seed);
  VectorXd b = VectorXd::Zero(p);
  b[0] = 0.2;
  b[1] = 1.2;
  if (p > 2) b[2] = -1.0;
  testutil::draw_response(d, FamilySpec::bernoulli(), b, 0.8, seed + 1);
  return Problem(d, testutil::random_intercept(), FamilySpec::bernoulli());
}

}  // namespace

TEST_CASE("information criteria arithmetic") {
  CHECK(information_criterion(500.0, 7, 400, Criterion::bic) == 500.0 + 7.0 * std::log(400.0));
  // the commonly quoted rounded value
  CHECK(std::abs(information_criterion(500.0, 7, 400, Criterion::bic) - 541.9395) <= 1e-3);
  CHECK(information_criterion(500.0, 7, 400, Criterion::aic) == 514.0);
}

TEST_CASE("df counts nonzero fixed effects and covariance parameters") {
  FitRecord r;
  r.active_set = {0, 2, 5};
  CHECK(degrees_of_freedom(r, 1) == 4);
  // intercept + slope, diagonal: two covariance parameters
  auto d = testutil::random_dataset(4, 3, 3, 5);
  CovarianceTemplate c;
  c.blocks.push_back({0, {kInterceptColumn, 1}, CovStructure::diagonal});
  Problem prob(d, c, FamilySpec::gaussian());
  CHECK(prob.d() == 2);
  CHECK(degrees_of_freedom(r, prob.d()) == 5);
}

TEST_CASE("lambda grid is log spaced from lambda_max") {
  auto prob = bern(10, 6, 6, 101);
  OptimizerConfig cfg;
  const auto grid = lambda_grid(prob, cfg);
  REQUIRE(grid.size() == 21);
  for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
    CHECK(grid[j] > grid[j + 1]);
    CHECK(std::abs(grid[j] / grid[j + 1] - grid[0] / grid[1]) <= 1e-12);
  }
  CHECK(grid.back() == doctest::Approx(0.01 * grid.front()).epsilon(1e-12));

  PathConfig pc;
  pc.n_lambda = 3;
  const auto path = compute_path(prob, cfg, pc);
  CHECK(path.lambdas.front() == grid.front());
  const auto rec = fit(prob, grid.front(), cfg, path.null_fit.psi_hat, path.null_fit.u_tilde);
  for (int k = 0; k < prob.p(); ++k)
    if (prob.penalty_mask[k]) {
      CHECK(rec.psi_hat.beta[k] == 0.0);
      CHECK(path.records.front().psi_hat.beta[k] == 0.0);
    }
}

TEST_CASE("warm-started path is no worse than cold starts") {
  auto prob = bern(10, 8, 5, 111);
  OptimizerConfig cfg;
  PathConfig pc;
  pc.n_lambda = 8;
  const auto start = init_start(prob, cfg);
  const auto warm = compute_path(prob, cfg, pc, start);
  pc.warm_start = false;
  const auto cold = compute_path(prob, cfg, pc, start);
  REQUIRE(warm.lambdas == cold.lambdas);
  for (std::size_t j = 0; j < warm.records.size(); ++j) {
    const double qw = warm.records[j].q_la_final, qc = cold.records[j].q_la_final;
    CHECK(qw <= qc + 1e-6 * std::abs(qc));
  }
  CHECK(warm.df[warm.best_aic] >= warm.df[warm.best_bic]);
}

TEST_CASE("hybrid refit stays on the selected set with lambda zero") {
  auto prob = bern(12, 8, 6, 121);
  OptimizerConfig cfg;
  PathConfig pc;
  pc.n_lambda = 10;
  const auto path = compute_path(prob, cfg, pc);
  const auto h = select_hybrid(prob, cfg, path);
  CHECK(h.stage1_index == path.best_bic);
  CHECK(h.stage2.lambda == 0.0);
  for (int k : h.stage2.active_set) {
    const bool allowed = !prob.penalty_mask[k] ||
                         std::find(h.selected_set.begin(), h.selected_set.end(), k) != h.selected_set.end();
    CHECK(allowed);
  }
}

TEST_CASE("empty selection falls back to the unpenalized fit") {
  auto prob = bern(10, 6, 4, 131);
  OptimizerConfig cfg;
  PathConfig pc;
  pc.n_lambda = 3;
  const auto path = compute_path(prob, cfg, pc);
  const auto r = refit_on(prob, cfg, {}, path.records.front());
  for (int k = 1; k < prob.p(); ++k) CHECK(r.psi_hat.beta[k] == 0.0);
  CHECK(r.psi_hat.beta[0] != 0.0);

  const auto t = select_thresholded(prob, cfg, path, {1e6});
  CHECK(t.empty_fallback);
  CHECK(t.selected_set.empty());
}

TEST_CASE("thresholded selection") {
  auto prob = bern(12, 8, 6, 141);
  OptimizerConfig cfg;
  PathConfig pc;
  pc.n_lambda = 10;
  const auto path = compute_path(prob, cfg, pc);
  const auto& s1 = path.records[path.best_aic];
  std::vector<int> support;
  double smallest = 1e300;
  for (int k : s1.active_set)
    if (prob.penalty_mask[k]) {
      support.push_back(k);
      smallest = std::min(smallest, std::abs(s1.psi_hat.beta[k]));
    }
  REQUIRE(!support.empty());
  // a threshold below every magnitude keeps the whole support
  const auto tiny = select_thresholded(prob, cfg, path, {0.5 * smallest});
  CHECK(tiny.selected_set == support);
  CHECK(tiny.stage1_index == path.best_aic);

  // selected set size is nonincreasing in the threshold
  std::size_t prev = support.size() + 1;
  for (double t : {0.01, 0.1, 0.3, 0.6, 1.0}) {
    std::size_t cnt = 0;
    for (int k : support)
      if (std::abs(s1.psi_hat.beta[k]) > t) ++cnt;
    CHECK(cnt <= prev);
    prev = cnt;
  }
  const auto best = select_thresholded(prob, cfg, path);
  CHECK(best.lambda_thres > 0.0);
  for (int k : best.selected_set) CHECK(std::abs(s1.psi_hat.beta[k]) > best.lambda_thres);
}

TEST_CASE("hybrid debiases by the soft-threshold shift on an orthogonal gaussian design") {
  // Penalized columns are centered within groups, so they are orthogonal to
  // the intercept and to Z; the mode and theta do not depend on them and each
  // coordinate solves a one-dimensional lasso with curvature h = 2 |x|^2 / phi.
  const int N = 10, m = 6, p = 4;
  auto d = testutil::random_dataset(N, m, p, 151);
  for (int j = 1; j < p; ++j)
    for (int g = 0; g < N; ++g) {
      const double mean = d.X.col(j).segment(g * m, m).mean();
      d.X.col(j).segment(g * m, m).array() -= mean;
    }
  {
    // mutually orthogonal as well
    const MatrixXd cent = d.X.rightCols(p - 1);
    Eigen::HouseholderQR<MatrixXd> qr(cent);
    d.X.rightCols(p - 1) = qr.householderQ() * MatrixXd::Identity(N * m, p - 1) * 3.0;
  }
  VectorXd b(p);
  b << 0.5, 1.0, 0.05, -0.8;
  testutil::draw_response(d, FamilySpec::gaussian(), b, 0.7, 152);
  Problem prob(d, testutil::random_intercept(), FamilySpec::gaussian(true, 1.0));
  OptimizerConfig cfg;
  cfg.outer_tol = 1e-10;
  PathConfig pc;
  pc.n_lambda = 6;
  const auto path = compute_path(prob, cfg, pc);
  const auto h = select_hybrid(prob, cfg, path);
  const double lambda = h.stage1.lambda;
  for (int k : h.selected_set) {
    const double xx = d.X.col(k).squaredNorm();
    const double z = d.X.col(k).dot(d.y) / xx;
    const double shift = lambda / (2.0 * xx);
    CHECK(h.stage2.psi_hat.beta[k] == doctest::Approx(z).epsilon(1e-5));
    CHECK(h.stage2.psi_hat.beta[k] - h.stage1.psi_hat.beta[k] ==
          doctest::Approx((z > 0 ? 1.0 : -1.0) * shift).epsilon(1e-4));
  }
}

TEST_CASE("out-of-sample evaluation") {
  auto prob = bern(10, 6, 4, 161);
  OptimizerConfig cfg;
  const auto rec = fit(prob, 1.0, cfg, init_start(prob, cfg));
  CHECK(out_of_sample_nll(prob, rec.psi_hat, prob.data) == doctest::Approx(rec.objective.f).epsilon(1e-8));

  // theta = 0 reduces to the GLM deviance term
  ParamState psi = rec.psi_hat;
  psi.theta.setZero();
  const VectorXd mu = (prob.data.X * psi.beta).unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
  double dev = 0.0;
  for (int i = 0; i < prob.n(); ++i)
    dev += -2.0 * (prob.data.y[i] * std::log(mu[i]) + (1.0 - prob.data.y[i]) * std::log(1.0 - mu[i]));
  CHECK(out_of_sample_nll(prob, psi, prob.data) == doctest::Approx(dev).epsilon(1e-12));

  Dataset bad = prob.data.select_columns({0, 1});
  CHECK_THROWS_AS(out_of_sample_nll(prob, rec.psi_hat, bad), InvalidInput);
}

TEST_CASE("comparing a path with itself") {
  auto prob = bern(10, 6, 4, 171);
  OptimizerConfig cfg;
  PathConfig pc;
  pc.n_lambda = 5;
  const auto path = compute_path(prob, cfg, pc);
  const auto m = compare_paths(path, path);
  for (std::size_t j = 0; j < m.lambdas.size(); ++j) {
    CHECK(m.rel_ll[j] == 0.0);
    CHECK(m.rel_fix[j] == 0.0);
    CHECK(m.active_set_match[j]);
  }
  CHECK(m.active_set_rate == 1.0);
}
