#pragma once

#include <vector>

#include "glmmlasso/error.hpp"
#include "glmmlasso/model.hpp"

namespace glmmlasso {

enum class SolverKind { automatic, block, sparse, dense };

struct PirlsConfig {
  int max_iter = 100;
  // relative change of the linear predictor, as in the classic PIRLS rule
  double eta_tol = 1e-8;
  // gradient certificate accompanying the eta rule, scaled by 1 + |u|_inf
  double cert_tol = 1e-8;
  // gradient level accepted without any further step
  double grad_tol = 1e-11;
  int max_halvings = 20;
  SolverKind solver = SolverKind::automatic;
};

/// Cholesky factorization of (Z Lambda)^T W (Z Lambda) + I.
///
/// The block path stores one small dense factor per level of the single
/// grouping factor; the sparse path uses a simplicial LDL^T.
class ModeSystem {
 public:
  void factorize(const ZLambda& zl, const VectorXd& w, SolverKind kind = SolverKind::automatic);
  VectorXd solve(const VectorXd& rhs) const;
  double logdet() const { return logdet_; }
  // m_i^T A^{-1} m_i for every row m_i of Z Lambda.
  VectorXd leverages(const ZLambda& zl) const;
  SolverKind kind() const { return kind_; }

 private:
  SolverKind kind_ = SolverKind::automatic;
  int q_ = 0;
  int K_ = 0;
  const ZLambda* zl_ = nullptr;
  std::vector<double> chol_;  // n_levels * K * K, lower factors
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  Eigen::LLT<MatrixXd> dense_;
  double logdet_ = 0.0;
};

struct PirlsResult {
  VectorXd u_tilde;
  VectorXd W;    // 1 / (phi v(mu) g'(mu)^2)
  VectorXd mu;
  VectorXd eta;
  int iterations = 0;
  bool converged = false;
  double s_value = 0.0;    // S(u~)
  double grad_inf = 0.0;   // |S'(u~)|_inf
  double logdet = 0.0;     // log |(Z Lambda)^T W (Z Lambda) + I|
};

/// Thrown when PIRLS exhausts its iteration budget; keeps the last iterate.
class PirlsConvergenceError : public ConvergenceError {
 public:
  PirlsConvergenceError(const std::string& what, PirlsResult last_state)
      : ConvergenceError(what), last(std::move(last_state)) {}
  PirlsResult last;
};

/// Random-effects mode u~ = argmin_u S(u) by damped PIRLS, warm-started at u_start.
PirlsResult solve_mode(const Problem& prob, const ZLambda& zl, const VectorXd& xbeta, double phi,
                       const VectorXd& u_start, const PirlsConfig& cfg = {});

PirlsResult solve_mode(const Problem& prob, const ParamState& psi, const VectorXd& u_start,
                       const PirlsConfig& cfg = {});

/// S(u) = -sum{(y xi - b(xi))/phi + c(y, phi)} + |u|^2 / 2.
double s_value(const Problem& prob, const ZLambda& zl, const VectorXd& xbeta, double phi,
               const VectorXd& u);
/// S'(u) = -(Z Lambda)^T B (y - mu) + u.
VectorXd s_grad(const Problem& prob, const ZLambda& zl, const VectorXd& xbeta, double phi,
                const VectorXd& u);

}  // namespace glmmlasso
