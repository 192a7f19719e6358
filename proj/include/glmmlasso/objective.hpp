#pragma once

#include <vector>

#include "glmmlasso/model.hpp"
#include "glmmlasso/pirls.hpp"

namespace glmmlasso {

/// Terms of the Laplace-approximated objective.
/// q_la = f + penalty, f = neg2_cond_loglik + logdet + u_norm2.
struct ObjectiveValue {
  double q_la = 0.0;
  double f = 0.0;
  double neg2_cond_loglik = 0.0;
  double logdet = 0.0;
  double u_norm2 = 0.0;
  double penalty = 0.0;
};

struct LaplaceEvaluation {
  ObjectiveValue value;
  PirlsResult mode;
};

double l1_penalty(const VectorXd& beta, const std::vector<bool>& mask, double lambda);

ObjectiveValue objective_from_mode(const Problem& prob, const PirlsResult& mode, const VectorXd& beta,
                                   double phi, double lambda);

/// Q^LA at psi: solves for the mode (warm-started at u_warm) and assembles the terms.
LaplaceEvaluation q_la(const Problem& prob, const ParamState& psi, double lambda,
                       const VectorXd& u_warm = {}, const PirlsConfig& cfg = {});

/// df/dbeta_k with the mode held fixed at mode.u_tilde.
///
/// Only the conditional deviance is differentiated unless logdet_in_grad is
/// set, in which case the log-determinant's dependence through W is added
/// via tr(A^{-1} dA/dbeta_k).
double grad_beta_fixed_u(int k, const Problem& prob, const ParamState& psi, const PirlsResult& mode,
                         bool logdet_in_grad = false);

/// Full derivative of f including the mode's dependence on beta_k, by central
/// differences with two warm-started PIRLS solves.
double grad_beta_exact(int k, const Problem& prob, const ParamState& psi, const VectorXd& u_warm,
                       const PirlsConfig& cfg = {});

/// Observation weights for the log-determinant part of df/dbeta_k.
///
/// df/dbeta_k = -2 x_k^T (y - mu) / phi + x_k^T direct with the mode frozen;
/// the total derivative, including the mode's response
/// du~/dbeta_k = -A^{-1} (Z Lambda)^T W x_k, is the same with `exact`.
struct GradientTerms {
  VectorXd direct;
  VectorXd exact;
};

GradientTerms gradient_terms(const Problem& prob, const ZLambda& zl, const PirlsResult& mode, double phi,
                             const PirlsConfig& cfg = {});

/// Total derivative of f at the mode via the implicit-function identity.
double grad_beta_analytic(int k, const Problem& prob, const ParamState& psi, const PirlsResult& mode);

/// Fisher-information diagonal 2 sum x_ik^2 W_i, clamped to [c_min, c_max].
double hessian_diag(int k, const Problem& prob, const PirlsResult& mode, double c_min = 1e-5,
                    double c_max = 1e5);

/// Evaluation context for one theta: caches Z Lambda and exposes the
/// frozen-mode objective used by the approximate algorithm.
class LaplaceEvaluator {
 public:
  LaplaceEvaluator(const Problem& prob, PirlsConfig cfg = {});

  void set_theta(const VectorXd& theta);
  const VectorXd& theta() const { return theta_; }
  const ZLambda& zlambda() const { return zl_; }
  const Problem& problem() const { return *prob_; }
  const PirlsConfig& pirls_config() const { return cfg_; }

  LaplaceEvaluation evaluate(const VectorXd& beta, const VectorXd& xbeta, double phi, double lambda,
                             const VectorXd& u_warm) const;

  /// f(.|u): deviance and log-determinant at eta = xbeta + zlu with the mode
  /// frozen, W re-evaluated at the trial linear predictor.
  double f_fixed_u(const VectorXd& xbeta, double phi, const VectorXd& zlu, double u_norm2) const;

  double grad_fixed_u(int k, const PirlsResult& mode, double phi, bool logdet_in_grad) const;
  double hessian(int k, const PirlsResult& mode, double c_min, double c_max) const;
  GradientTerms gradient_terms(const PirlsResult& mode, double phi) const;
  double grad_deviance(int k, const PirlsResult& mode, double phi) const;

 private:
  const Problem* prob_;
  PirlsConfig cfg_;
  VectorXd theta_;
  ZLambda zl_;
};

}  // namespace glmmlasso
