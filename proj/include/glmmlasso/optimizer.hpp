#pragma once

#include <string>
#include <vector>

#include "glmmlasso/model.hpp"
#include "glmmlasso/objective.hpp"
#include "glmmlasso/pirls.hpp"

namespace glmmlasso {

enum class FitMode { exact, approximate };

std::string to_string(FitMode m);
FitMode fit_mode_from_name(const std::string& name);

struct OptimizerConfig {
  FitMode mode = FitMode::exact;
  double alpha_init = 1.0;
  double delta = 0.5;
  double rho_armijo = 0.1;
  double gamma = 0.0;
  double c_min = 1e-5;
  double c_max = 1e5;
  int active_set_period = 5;  // full sweep every D-th outer iteration
  int max_outer_iter = 200;
  double outer_tol = 1e-6;
  int max_armijo_backtracks = 30;
  double scalar_opt_tol = 1e-7;
  double theta_max = 1e3;
  double phi_max = 1e6;
  bool logdet_in_grad = false;
  // exact gradient by central differences instead of the implicit-function formula
  bool fd_exact_gradient = false;
  // Convergence additionally requires the stationarity certificate.
  bool require_kkt = true;
  PirlsConfig pirls;

  void validate() const;
};

/// Stationarity certificate: |g_k| <= lambda + tol at penalized zeros,
/// |g_k + lambda sign(beta_k)| <= tol elsewhere, tol = 1e-3 lambda + 1e-6.
struct KktReport {
  bool ok = true;
  double tolerance = 0.0;
  double max_violation = 0.0;
  std::vector<int> failing;
};

struct FitRecord {
  ParamState psi_hat;
  VectorXd u_tilde;
  double lambda = 0.0;
  FitMode mode = FitMode::exact;
  ObjectiveValue objective;
  double q_la_final = 0.0;
  std::vector<int> active_set;  // {k : beta_k != 0}
  int outer_iterations = 0;
  bool converged = false;
  std::vector<double> trace;    // Q^LA after every outer iteration, trace[0] = start
  int flagged_coordinates = 0;  // Armijo budget exhausted
  int exact_fallbacks = 0;      // approximate steps replaced by exact ones
  int monotonicity_violations = 0;
  KktReport kkt;
  long pirls_solves = 0;
  double seconds = 0.0;
};

/// Minimizer over d of g d + h d^2 / 2 + lambda |beta_k + d| (penalized), else -g / h.
double descent_direction(double grad, double h, double lambda, double beta_k, bool penalized);

struct ArmijoResult {
  bool accepted = false;
  double alpha = 0.0;
  double new_beta_k = 0.0;
  double new_q_la = 0.0;
  int trials = 0;
};

/// Coordinate gradient descent on Q^LA for a fixed lambda.
///
/// The approximate mode differentiates with the mode held fixed and runs the
/// Armijo search on Q^LA(.|u~); an accepted step is kept only if the re-solved
/// Q^LA does not increase, otherwise the coordinate falls back to an exact step.
class GlmmLassoSolver {
 public:
  GlmmLassoSolver(const Problem& prob, double lambda, OptimizerConfig cfg, const ParamState& start,
                  const VectorXd& u_start = {});

  // One coordinate update of beta_k; returns true when beta_k changed.
  bool update_coordinate(int k);
  ArmijoResult armijo_search(int k, double d, double h, double grad, bool exact);
  // One-dimensional minimization over theta_l / phi; true when improved.
  bool optimize_theta(int l);
  bool optimize_phi();
  FitRecord run();

  double gradient(int k, bool exact);
  KktReport check_kkt();

  double q_la() const { return q_; }
  const ParamState& state() const { return psi_; }
  const PirlsResult& mode() const { return mode_; }
  const ObjectiveValue& objective() const { return value_; }

 private:
  void commit(const VectorXd& xbeta, LaplaceEvaluation eval);
  double noise() const;
  LaplaceEvaluation evaluate_theta(const VectorXd& theta, double phi);

  const Problem& prob_;
  double lambda_;
  OptimizerConfig cfg_;
  ParamState psi_;
  VectorXd xbeta_;
  LaplaceEvaluator ev_;
  PirlsResult mode_;
  ObjectiveValue value_;
  double q_ = 0.0;
  int flagged_ = 0;
  int fallbacks_ = 0;
  long solves_ = 0;
  // per-mode observation weights for the exact gradient, dropped on commit
  VectorXd exact_terms_;
  bool terms_valid_ = false;
};

FitRecord fit(const Problem& prob, double lambda, const OptimizerConfig& cfg, const ParamState& start,
              const VectorXd& u_start = {});

/// Starting value: cross-validated GLM Lasso for beta, then one pass of the
/// theta and phi updates at that beta.
ParamState init_start(const Problem& prob, const OptimizerConfig& cfg);

KktReport check_kkt(const Problem& prob, const FitRecord& rec, const OptimizerConfig& cfg);

}  // namespace glmmlasso
