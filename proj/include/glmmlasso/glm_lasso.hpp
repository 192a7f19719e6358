#pragma once

#include <cstdint>
#include <vector>

#include "glmmlasso/family.hpp"
#include "glmmlasso/model.hpp"

namespace glmmlasso {

// l1-penalized GLM without random effects, minimizing
// sum_i -2 log p(y_i | x_i beta) + lambda * sum_{k penalized} |beta_k|.
// Used for starting values and as the no-random-effects baseline.

struct GlmLassoResult {
  VectorXd beta;
  double deviance = 0.0;  // -2 log-likelihood
  int sweeps = 0;
  bool converged = false;
};

GlmLassoResult glm_lasso(const MatrixXd& X, const VectorXd& y, const FamilySpec& fam, double phi,
                         const std::vector<bool>& mask, double lambda, const VectorXd& beta_start = {},
                         int max_sweeps = 1000, double tol = 1e-9);

double glm_deviance(const MatrixXd& X, const VectorXd& y, const FamilySpec& fam, double phi,
                    const VectorXd& beta);

// Largest |d dev / d beta_k| over penalized k at the unpenalized-only fit.
double glm_lambda_max(const MatrixXd& X, const VectorXd& y, const FamilySpec& fam, double phi,
                      const std::vector<bool>& mask);

// Log-spaced descending grid from lambda_max down to ratio * lambda_max.
std::vector<double> log_lambda_grid(double lambda_max, int n_lambda, double ratio = 0.01);

struct GlmLassoPath {
  std::vector<double> lambdas;
  std::vector<GlmLassoResult> fits;
};

GlmLassoPath glm_lasso_path(const MatrixXd& X, const VectorXd& y, const FamilySpec& fam, double phi,
                            const std::vector<bool>& mask, const std::vector<double>& lambdas);

struct GlmLassoCv {
  std::vector<double> lambdas;
  std::vector<double> cv_deviance;  // mean held-out deviance per observation
  int best = 0;
  GlmLassoResult fit;               // refit on all data at lambdas[best]
};

GlmLassoCv glm_lasso_cv(const MatrixXd& X, const VectorXd& y, const FamilySpec& fam, double phi,
                        const std::vector<bool>& mask, int n_lambda = 21, int folds = 5,
                        std::uint64_t seed = 20111);

}  // namespace glmmlasso
