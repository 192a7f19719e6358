#pragma once

#include <optional>
#include <string>
#include <vector>

#include "glmmlasso/optimizer.hpp"

namespace glmmlasso {

enum class Criterion { aic, bic };

/// f(psi_hat) + a(n) df with a(n) = log n (BIC) or 2 (AIC).
double information_criterion(double f, int df, int n, Criterion kind);
/// Nonzero fixed effects (intercept included) plus the number of covariance parameters.
int degrees_of_freedom(const FitRecord& rec, int d);
double information_criterion(const FitRecord& rec, int n, int d, Criterion kind);

struct PathConfig {
  int n_lambda = 21;
  double min_ratio = 0.01;
  bool warm_start = true;
  std::vector<double> lambdas;  // explicit grid; empty means the log grid from lambda_max
};

struct FitPath {
  double lambda_max = 0.0;
  std::vector<double> lambdas;  // strictly decreasing
  std::vector<FitRecord> records;
  std::vector<double> aic, bic;
  std::vector<int> df;
  int best_bic = 0;
  int best_aic = 0;
  FitRecord null_fit;  // penalized coefficients at zero
  ParamState start;
};

/// Unpenalized-coordinates-only fit starting from start; penalized beta stay zero.
FitRecord fit_null(const Problem& prob, const OptimizerConfig& cfg, const ParamState& start);

/// Largest |df/dbeta_k| over penalized k at the null fit.
double lambda_max(const Problem& prob, const OptimizerConfig& cfg, const FitRecord& null_fit);

std::vector<double> lambda_grid(const Problem& prob, const OptimizerConfig& cfg, const PathConfig& pc = {});

FitPath compute_path(const Problem& prob, const OptimizerConfig& cfg, const PathConfig& pc = {},
                     std::optional<ParamState> start = std::nullopt);

enum class TwoStageKind { hybrid, thresholded };

struct TwoStageResult {
  TwoStageKind kind = TwoStageKind::hybrid;
  int stage1_index = 0;
  FitRecord stage1;
  std::vector<int> selected_set;  // penalized columns kept
  FitRecord stage2;               // full-length coefficients, zeros off the selected set
  double lambda_thres = 0.0;
  double stage2_bic = 0.0;
  bool empty_fallback = false;
};

/// lambda = 0 refit on the given penalized columns plus every unpenalized one.
FitRecord refit_on(const Problem& prob, const OptimizerConfig& cfg, const std::vector<int>& penalized_cols,
                   const FitRecord& from);

TwoStageResult select_hybrid(const Problem& prob, const OptimizerConfig& cfg, const FitPath& path);
/// Thresholds default to the midpoints of the sorted distinct |beta_k| of the AIC-best record.
TwoStageResult select_thresholded(const Problem& prob, const OptimizerConfig& cfg, const FitPath& path,
                                  std::vector<double> thres_grid = {});

/// Laplace -2 log-likelihood f of psi_hat on new data (fresh mode, no penalty).
double out_of_sample_nll(const Problem& fitted, const ParamState& psi_hat, const Dataset& new_data);

struct ModeComparison {
  std::vector<double> lambdas;
  std::vector<double> rel_iter, rel_ll, rel_fix, rel_time;
  std::vector<bool> active_set_match;
  std::vector<bool> included;
  int excluded = 0;
  double mean_rel_ll = 0.0, sd_rel_ll = 0.0;
  double mean_rel_fix = 0.0, sd_rel_fix = 0.0;
  double mean_rel_iter = 0.0, mean_rel_time = 0.0;
  double active_set_rate = 0.0;
};

/// Fits both modes over the same grid and from the same start.
ModeComparison compare_exact_approx(const Problem& prob, const OptimizerConfig& cfg, const PathConfig& pc = {});
ModeComparison compare_paths(const FitPath& approx, const FitPath& exact);

}  // namespace glmmlasso
