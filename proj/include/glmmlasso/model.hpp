#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <span>
#include <string>
#include <vector>

#include "glmmlasso/family.hpp"

namespace glmmlasso {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// A grouping factor; levels are re-indexed 0..n_levels-1 by first appearance.
struct GroupingFactor {
  std::string name;
  std::vector<int> level;           // per observation
  std::vector<std::string> labels;  // label of each level

  int n_levels() const { return static_cast<int>(labels.size()); }

  static GroupingFactor from_labels(std::string name, const std::vector<std::string>& raw);
  static GroupingFactor from_ints(std::string name, const std::vector<int>& raw);
};

/// Response, fixed-effects design and grouping structure of one fit problem.
struct Dataset {
  VectorXd y;
  MatrixXd X;                             // n x p; column 0 is the intercept when has_intercept
  std::vector<std::string> column_names;  // length p
  std::vector<GroupingFactor> groups;
  bool has_intercept = true;

  int n() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(X.cols()); }

  // Throws InvalidInput on shape mismatch, zero columns or bad group vectors.
  void validate() const;
  int column_index(const std::string& name) const;  // -1 when absent
  int factor_index(const std::string& name) const;  // -1 when absent

  // Dataset restricted to the given columns (in order).
  Dataset select_columns(const std::vector<int>& cols) const;
};

enum class CovStructure { scalar_identity, diagonal, unstructured_lower };

std::string to_string(CovStructure s);
CovStructure cov_structure_from_name(const std::string& name);

/// Random-effects variable: a column of X, or the constant one.
inline constexpr int kInterceptColumn = -1;

struct RandomBlock {
  int factor = 0;
  std::vector<int> columns;  // X column indices or kInterceptColumn
  CovStructure structure = CovStructure::diagonal;

  int k() const { return static_cast<int>(columns.size()); }
  int n_params() const;
};

/// Declarative map theta -> Cholesky factor of the random-effects covariance.
///
/// Parameters are laid out block by block. Within an unstructured block they
/// fill the lower triangle column by column, so the diagonal of the factor
/// sits at the first entry of each column.
struct CovarianceTemplate {
  std::vector<RandomBlock> blocks;
  int max_d = 10;

  int d() const;
  int param_offset(int block) const;
  void validate(const Dataset& data) const;

  // true where theta_l is a diagonal entry of the factor (lower bound 0).
  std::vector<bool> diagonal_params() const;
  // k x k lower-triangular factor of block b.
  MatrixXd block_factor(int b, std::span<const double> theta) const;
  MatrixXd block_covariance(int b, std::span<const double> theta) const;
  // theta reproducing the given per-block covariance (Cholesky).
  VectorXd theta_from_covariances(const std::vector<MatrixXd>& sigma) const;
  // Number of X columns that carry a random effect, flags per column.
  std::vector<bool> random_columns(int p) const;
};

/// Z Lambda_theta for a fixed theta, stored row-wise.
///
/// With a single grouping factor every row touches exactly one level block,
/// so the rows are kept as dense K-vectors plus the level index.
struct ZLambda {
  int n = 0;
  int q = 0;
  bool blocked = false;
  // blocked layout
  int K = 0;                        // random effects per level
  std::vector<int> level;           // per row
  MatrixXd rows;                    // n x K
  std::vector<std::vector<int>> block_index;  // level -> global u indices (size K)
  // general layout
  SparseMatrix M;                   // n x q

  VectorXd times(const VectorXd& u) const;           // Z Lambda u
  VectorXd transpose_times(const VectorXd& v) const; // (Z Lambda)^T v
  bool is_zero() const { return zero; }
  bool zero = false;
};

/// Random-effects design derived from a dataset and a covariance template.
class RandomEffectsDesign {
 public:
  RandomEffectsDesign() = default;
  RandomEffectsDesign(const Dataset& data, const CovarianceTemplate& cov);

  int n() const { return n_; }
  int q() const { return q_; }
  bool single_factor() const { return single_factor_; }
  const CovarianceTemplate& cov() const { return cov_; }

  // Column offset of block b in u.
  int block_offset(int b) const { return offsets_[b]; }
  int block_levels(int b) const { return levels_[b]; }

  SparseMatrix z() const;                                  // n x q
  SparseMatrix lambda(std::span<const double> theta) const;  // q x q lower
  ZLambda zlambda(std::span<const double> theta, bool force_general = false) const;

 private:
  CovarianceTemplate cov_;
  int n_ = 0;
  int q_ = 0;
  bool single_factor_ = false;
  std::vector<int> offsets_;
  std::vector<int> levels_;
  std::vector<std::vector<int>> level_copy_;
  std::vector<MatrixXd> values_;  // per block: n x k covariate values
};

/// Full parameter vector (beta, theta, phi) plus the penalty mask.
struct ParamState {
  VectorXd beta;
  VectorXd theta;
  double phi = 1.0;
  std::vector<bool> penalty_mask;
};

/// Intercept and every column with a random effect are unpenalized.
std::vector<bool> default_penalty_mask(const Dataset& data, const CovarianceTemplate& cov);

/// Column standardization applied before fitting (non-intercept columns).
struct Standardization {
  VectorXd center;
  VectorXd scale;
  bool active = false;

  static Standardization compute(const Dataset& data);
  void apply(Dataset& data) const;
  // Coefficients on the original column scale.
  VectorXd to_original(const VectorXd& beta_std, bool has_intercept) const;
  VectorXd to_standardized(const VectorXd& beta_orig, bool has_intercept) const;
};

/// Immutable fit problem: data, random-effects design, family and mask.
struct Problem {
  Dataset data;
  CovarianceTemplate cov;
  RandomEffectsDesign re;
  FamilySpec family;
  std::vector<bool> penalty_mask;

  Problem(Dataset d, CovarianceTemplate c, FamilySpec f);
  Problem(Dataset d, CovarianceTemplate c, FamilySpec f, std::vector<bool> mask);

  int n() const { return data.n(); }
  int p() const { return data.p(); }
  int q() const { return re.q(); }
  int d() const { return cov.d(); }

  // Same problem restricted to a column subset; template columns remapped.
  Problem restrict_columns(const std::vector<int>& cols) const;
  ParamState initial_state() const;
};

}  // namespace glmmlasso
