#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "glmmlasso/model.hpp"
#include "glmmlasso/optimizer.hpp"
#include "glmmlasso/rng.hpp"
#include "glmmlasso/selection.hpp"

namespace glmmlasso {

enum class StudyScale { desk, full };

/// Data-generating process of one simulation design.
struct SimDesign {
  std::string name = "custom";
  FamilySpec family = FamilySpec::bernoulli();
  int N = 0;
  int n_C = 0;
  int p = 0;  // columns of X, intercept included
  double rho_x = 0.2;
  VectorXd beta0;
  // random-effect variables (kInterceptColumn or X column) and their variances
  std::vector<int> re_columns{kInterceptColumn};
  VectorXd theta2_true;
  std::optional<double> corr_re;  // correlation of the first two random effects
  int replicates = 20;

  int n() const { return N * n_C; }
  int s0() const;
  std::vector<int> true_support() const;
  CovarianceTemplate cov_template() const;
  void validate() const;

  static SimDesign named(const std::string& name, StudyScale scale = StudyScale::desk);
  static std::vector<std::string> names();
};

/// n x p design: intercept column plus AR(1) rows, corr(x_k, x_k') = rho^|k-k'|.
MatrixXd gen_design_matrix(int N, int n_C, int p, double rho_x, Engine& eng);

struct Generated {
  Dataset data;
  VectorXd b;  // true random effects, level-major like u
};

/// Draws b and y for the given X; groups are consecutive blocks of n_C rows.
Generated gen_response(const SimDesign& design, const MatrixXd& X, Engine& eng);
/// Dataset of replicate r (stream 2r for training data).
Generated gen_replicate(const SimDesign& design, std::uint64_t seed, int replicate);

/// Gauss-Hermite nodes/weights for weight exp(-x^2).
void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// Marginal log-likelihood by adaptive Gauss-Hermite quadrature, single
/// grouping factor, at most two random effects per level.
double gh_loglik(const Problem& prob, const ParamState& psi, int n_nodes = 40);

struct ReplicateRow {
  int replicate = 0;
  std::string method;
  bool ok = true;
  std::string error;
  int size_S = 0;
  int tp = 0;
  std::vector<double> theta2;  // estimated random-effect variances
  std::vector<double> beta;    // leading coefficients (up to 5)
  double se = 0.0;
  double lambda = 0.0;
};

struct FitDiagnostics {
  long fits = 0;
  long converged = 0;
  long kkt_failures = 0;            // among converged fits
  long monotonicity_violations = 0;
  double max_trace_increase = 0.0;  // largest single outer-step increase
  void add(const FitRecord& r);
  void merge(const FitDiagnostics& o);
};

struct MethodSummary {
  std::string method;
  int n_ok = 0;
  int n_failed = 0;
  std::vector<std::string> columns;
  std::vector<double> median, mad;
};

struct StudyConfig {
  std::vector<std::string> methods{"glmmlasso", "hybrid", "thresholded", "glm_lasso", "oracle"};
  int replicates = 20;
  std::uint64_t seed = 1;
  int workers = 1;
  OptimizerConfig optimizer;
  PathConfig path;
};

struct StudyResult {
  SimDesign design;
  std::vector<ReplicateRow> rows;  // replicate-major, methods in config order
  std::vector<MethodSummary> summary;
  FitDiagnostics diagnostics;

  std::string replicates_csv() const;
  std::string summary_csv() const;
  std::string table_text() const;
};

double median(std::vector<double> v);
/// Median absolute deviation times 1.4826.
double rescaled_mad(const std::vector<double>& v);

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

StudyResult run_study(const SimDesign& design, const StudyConfig& cfg);

struct ComparisonStudy {
  SimDesign design;
  std::vector<ModeComparison> per_replicate;
  double mean_rel_ll = 0.0, mean_rel_fix = 0.0, mean_rel_iter = 0.0, mean_rel_time = 0.0;
  double sd_rel_ll = 0.0, sd_rel_fix = 0.0;
  double active_set_rate = 0.0;
  int excluded = 0;
  FitDiagnostics diagnostics;
  std::string table_text(bool with_time = false) const;
  // per-replicate, per-lambda rows followed by an aggregate row
  std::string csv(bool with_time = false) const;
};

ComparisonStudy run_mode_comparison(const SimDesign& design, const StudyConfig& cfg);

struct GrowingPRow {
  int p = 0;
  std::string method;
  double median_nll = 0.0, mad_nll = 0.0;
  int n_ok = 0;
};

struct GrowingPStudy {
  std::vector<int> ps;
  std::vector<GrowingPRow> rows;
  FitDiagnostics diagnostics;
  std::string csv() const;
  std::string table_text() const;
  double median_of(int p, const std::string& method) const;
};

/// Random-intercept logistic design with noise covariates; methods full_ml,
/// glmmlasso and hybrid scored by out-of-sample -2 log L on fresh groups.
GrowingPStudy run_growing_p(const std::vector<int>& ps, const StudyConfig& cfg);

}  // namespace glmmlasso
