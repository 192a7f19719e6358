#include "glmmlasso/glm_lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "glmmlasso/error.hpp"
#include "glmmlasso/optimizer.hpp"
#include "glmmlasso/rng.hpp"
#include "kernels.hpp"

namespace glmmlasso {

namespace {

double deviance_at(const VectorXd& eta, const VectorXd& y, FamilyKind kind, double phi) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) s += detail::neg2_term(kind, y[i], detail::mean_of(kind, eta[i]), phi);
  return s;
}

double penalty_of(const VectorXd& beta, const std::vector<bool>& mask, double lambda) {
  if (!std::isfinite(lambda) || lambda == 0.0) return 0.0;
  double s = 0.0;
  for (Eigen::Index k = 0; k < beta.size(); ++k)
    if (mask[k]) s += std::abs(beta[k]);
  return lambda * s;
}

}  // namespace

double glm_deviance(const MatrixXd& X, const VectorXd& y, const FamilySpec& fam, double phi,
                    const VectorXd& beta) {
  return deviance_at(X * beta, y, fam.kind, phi);
}

GlmLassoResult glm_lasso(const MatrixXd& X, const VectorXd& y, const FamilySpec& fam, double phi,
                         const std::vector<bool>& mask, double lambda, const VectorXd& beta_start,
                         int max_sweeps, double tol) {
  const int p = static_cast<int>(X.cols());
  const Eigen::Index n = y.size();
  if (X.rows() != n) throw InvalidInput("design/response size mismatch");
  if (static_cast<int>(mask.size()) != p) throw InvalidInput("penalty mask length mismatch");
  if (!(lambda >= 0.0)) throw InvalidInput("lambda must be nonnegative");
  const auto kind = fam.kind;
  const bool frozen = !std::isfinite(lambda);

  GlmLassoResult r;
  r.beta = beta_start.size() == p ? beta_start : VectorXd::Zero(p);
  if (frozen)
    for (int k = 0; k < p; ++k)
      if (mask[k]) r.beta[k] = 0.0;
  VectorXd eta = X * r.beta;
  VectorXd mu(n), trial(n);
  auto refresh_mu = [&] {
    for (Eigen::Index i = 0; i < n; ++i) mu[i] = detail::mean_of(kind, eta[i]);
  };
  refresh_mu();
  double dev = deviance_at(eta, y, kind, phi);
  double q = dev + penalty_of(r.beta, mask, lambda);

  for (r.sweeps = 1; r.sweeps <= max_sweeps; ++r.sweeps) {
    const double q_old = q;
    double max_step = 0.0;
    for (int k = 0; k < p; ++k) {
      const bool pen = mask[k];
      if (frozen && pen) continue;
      double g = 0.0, h = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double x = X(i, k);
        g += x * (y[i] - mu[i]);
        h += x * x * detail::var_of(kind, mu[i]);
      }
      g *= -2.0 / phi;
      h = std::clamp(2.0 * h / phi, 1e-5, 1e5);
      const double lam = frozen ? 0.0 : lambda;
      const double d = descent_direction(g, h, lam, r.beta[k], pen);
      if (d == 0.0) continue;
      const double bk = r.beta[k];
      const double pen_now = pen ? lam * std::abs(bk) : 0.0;
      const double delta = g * d + (pen ? lam * (std::abs(bk + d) - std::abs(bk)) : 0.0);
      if (!(delta < 0.0)) continue;
      double alpha = 1.0;
      for (int t = 0; t < 30; ++t, alpha *= 0.5) {
        trial = eta + alpha * d * X.col(k);
        const double dev_t = deviance_at(trial, y, kind, phi);
        const double pen_t = pen ? lam * std::abs(bk + alpha * d) : 0.0;
        const double q_t = q - dev - pen_now + dev_t + pen_t;
        if (q_t <= q + alpha * 0.1 * delta + 1e-13 * std::max(1.0, std::abs(q))) {
          r.beta[k] = bk + alpha * d;
          eta.swap(trial);
          refresh_mu();
          dev = dev_t;
          q = q_t;
          max_step = std::max(max_step, std::abs(alpha * d));
          break;
        }
      }
    }
    if (std::abs(q_old - q) <= tol * std::max(1.0, std::abs(q)) && max_step < 1e-6) {
      r.converged = true;
      break;
    }
  }
  r.sweeps = std::min(r.sweeps, max_sweeps);
  r.deviance = dev;
  return r;
}

double glm_lambda_max(const MatrixXd& X, const VectorXd& y, const FamilySpec& fam, double phi,
                      const std::vector<bool>& mask) {
  const auto null_fit =
      glm_lasso(X, y, fam, phi, mask, std::numeric_limits<double>::infinity());
  const VectorXd eta = X * null_fit.beta;
  double lmax = 0.0;
  for (Eigen::Index k = 0; k < X.cols(); ++k) {
    if (!mask[k]) continue;
    double g = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) g += X(i, k) * (y[i] - detail::mean_of(fam.kind, eta[i]));
    lmax = std::max(lmax, std::abs(2.0 * g / phi));
  }
  return lmax;
}

std::vector<double> log_lambda_grid(double lambda_max, int n_lambda, double ratio) {
  if (n_lambda < 1) throw InvalidInput("grid needs at least one value");
  if (!(lambda_max >= 0.0) || !(ratio > 0.0 && ratio <= 1.0)) throw InvalidInput("bad grid bounds");
  std::vector<double> g(n_lambda);
  if (n_lambda == 1) {
    g[0] = lambda_max;
    return g;
  }
  const double a = std::log(lambda_max), b = std::log(ratio * lambda_max);
  for (int j = 0; j < n_lambda; ++j) g[j] = std::exp(a + (b - a) * j / (n_lambda - 1));
  g.front() = lambda_max;
  return g;
}

GlmLassoPath glm_lasso_path(const MatrixXd& X, const VectorXd& y, const FamilySpec& fam, double phi,
                            const std::vector<bool>& mask, const std::vector<double>& lambdas) {
  GlmLassoPath path;
  path.lambdas = lambdas;
  VectorXd warm;
  for (double lam : lambdas) {
    path.fits.push_back(glm_lasso(X, y, fam, phi, mask, lam, warm));
    warm = path.fits.back().beta;
  }
  return path;
}

GlmLassoCv glm_lasso_cv(const MatrixXd& X, const VectorXd& y, const FamilySpec& fam, double phi,
                        const std::vector<bool>& mask, int n_lambda, int folds, std::uint64_t seed) {
  const int n = static_cast<int>(y.size());
  if (folds < 2 || folds > n) throw InvalidInput("bad number of folds");
  GlmLassoCv cv;
  const double lmax = glm_lambda_max(X, y, fam, phi, mask);
  cv.lambdas = log_lambda_grid(std::max(lmax, 1e-8), n_lambda);
  cv.cv_deviance.assign(cv.lambdas.size(), 0.0);

  Engine eng = make_engine(seed, 0);
  const auto perm = permutation(n, eng);
  std::vector<int> fold_of(n);
  for (int i = 0; i < n; ++i) fold_of[perm[i]] = i % folds;

  for (int f = 0; f < folds; ++f) {
    std::vector<int> tr, te;
    for (int i = 0; i < n; ++i) (fold_of[i] == f ? te : tr).push_back(i);
    const MatrixXd Xtr = X(tr, Eigen::all), Xte = X(te, Eigen::all);
    const VectorXd ytr = y(tr), yte = y(te);
    const auto path = glm_lasso_path(Xtr, ytr, fam, phi, mask, cv.lambdas);
    for (std::size_t j = 0; j < cv.lambdas.size(); ++j)
      cv.cv_deviance[j] += glm_deviance(Xte, yte, fam, phi, path.fits[j].beta) / n;
  }
  cv.best = static_cast<int>(std::min_element(cv.cv_deviance.begin(), cv.cv_deviance.end()) -
                             cv.cv_deviance.begin());
  VectorXd warm;
  for (int j = 0; j <= cv.best; ++j) {
    cv.fit = glm_lasso(X, y, fam, phi, mask, cv.lambdas[j], warm);
    warm = cv.fit.beta;
  }
  return cv;
}

}  // namespace glmmlasso
