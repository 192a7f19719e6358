#include "glmmlasso/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "glmmlasso/error.hpp"

namespace glmmlasso {

GroupingFactor GroupingFactor::from_labels(std::string name, const std::vector<std::string>& raw) {
  GroupingFactor g;
  g.name = std::move(name);
  g.level.reserve(raw.size());
  std::unordered_map<std::string, int> index;
  for (const auto& label : raw) {
    auto [it, inserted] = index.try_emplace(label, static_cast<int>(g.labels.size()));
    if (inserted) g.labels.push_back(label);
    g.level.push_back(it->second);
  }
  return g;
}

GroupingFactor GroupingFactor::from_ints(std::string name, const std::vector<int>& raw) {
  std::vector<std::string> labels;
  labels.reserve(raw.size());
  for (int v : raw) labels.push_back(std::to_string(v));
  return from_labels(std::move(name), labels);
}

void Dataset::validate() const {
  const auto n_obs = y.size();
  if (n_obs == 0) throw InvalidInput("dataset has no observations");
  if (X.rows() != n_obs)
    throw InvalidInput("X has " + std::to_string(X.rows()) + " rows, expected " +
                       std::to_string(n_obs));
  if (static_cast<Eigen::Index>(column_names.size()) != X.cols())
    throw InvalidInput("column_names length does not match X");
  if (!y.allFinite() || !X.allFinite()) throw InvalidInput("non-finite value in y or X");
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    if (X.col(j).cwiseAbs().maxCoeff() == 0.0)
      throw InvalidInput("column '" + column_names[j] + "' is identically zero");
  if (has_intercept && (X.cols() == 0 || (X.col(0).array() != 1.0).any()))
    throw InvalidInput("has_intercept is set but column 0 is not a column of ones");
  for (const auto& g : groups) {
    if (static_cast<Eigen::Index>(g.level.size()) != n_obs)
      throw InvalidInput("grouping factor '" + g.name + "' has wrong length");
    for (int l : g.level)
      if (l < 0 || l >= g.n_levels())
        throw InvalidInput("grouping factor '" + g.name + "' has an unknown level index");
  }
}

int Dataset::column_index(const std::string& name) const {
  auto it = std::find(column_names.begin(), column_names.end(), name);
  return it == column_names.end() ? -1 : static_cast<int>(it - column_names.begin());
}

int Dataset::factor_index(const std::string& name) const {
  for (std::size_t i = 0; i < groups.size(); ++i)
    if (groups[i].name == name) return static_cast<int>(i);
  return -1;
}

Dataset Dataset::select_columns(const std::vector<int>& cols) const {
  Dataset out;
  out.y = y;
  out.groups = groups;
  out.X.resize(X.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.X.col(static_cast<Eigen::Index>(j)) = X.col(cols[j]);
    out.column_names.push_back(column_names[cols[j]]);
  }
  out.has_intercept = has_intercept && !cols.empty() && cols.front() == 0;
  return out;
}

std::string to_string(CovStructure s) {
  switch (s) {
    case CovStructure::scalar_identity: return "scalar";
    case CovStructure::diagonal: return "diagonal";
    case CovStructure::unstructured_lower: return "unstructured";
  }
  return "unknown";
}

CovStructure cov_structure_from_name(const std::string& name) {
  if (name == "scalar" || name == "scalar_identity") return CovStructure::scalar_identity;
  if (name == "diagonal" || name == "diag") return CovStructure::diagonal;
  if (name == "unstructured" || name == "unstructured_lower") return CovStructure::unstructured_lower;
  throw InvalidInput("unknown covariance structure '" + name + "'");
}

int RandomBlock::n_params() const {
  switch (structure) {
    case CovStructure::scalar_identity: return 1;
    case CovStructure::diagonal: return k();
    case CovStructure::unstructured_lower: return k() * (k() + 1) / 2;
  }
  return 0;
}

int CovarianceTemplate::d() const {
  int total = 0;
  for (const auto& b : blocks) total += b.n_params();
  return total;
}

int CovarianceTemplate::param_offset(int block) const {
  int off = 0;
  for (int b = 0; b < block; ++b) off += blocks[b].n_params();
  return off;
}

void CovarianceTemplate::validate(const Dataset& data) const {
  if (d() > max_d)
    throw InvalidInput("covariance template has " + std::to_string(d()) +
                       " parameters, more than the limit " + std::to_string(max_d));
  for (const auto& b : blocks) {
    if (b.factor < 0 || b.factor >= static_cast<int>(data.groups.size()))
      throw InvalidInput("random-effects block refers to an unknown grouping factor");
    if (b.columns.empty()) throw InvalidInput("random-effects block without variables");
    for (int c : b.columns)
      if (c != kInterceptColumn && (c < 0 || c >= data.p()))
        throw InvalidInput("random-effects block refers to an unknown column");
  }
}

std::vector<bool> CovarianceTemplate::diagonal_params() const {
  std::vector<bool> out;
  for (const auto& b : blocks) {
    if (b.structure != CovStructure::unstructured_lower) {
      out.insert(out.end(), b.n_params(), true);
      continue;
    }
    for (int j = 0; j < b.k(); ++j)
      for (int i = j; i < b.k(); ++i) out.push_back(i == j);
  }
  return out;
}

MatrixXd CovarianceTemplate::block_factor(int b, std::span<const double> theta) const {
  const auto& blk = blocks[b];
  const int k = blk.k();
  const int off = param_offset(b);
  if (static_cast<int>(theta.size()) != d())
    throw InvalidInput("theta has length " + std::to_string(theta.size()) + ", expected " +
                       std::to_string(d()));
  MatrixXd L = MatrixXd::Zero(k, k);
  switch (blk.structure) {
    case CovStructure::scalar_identity:
      L.diagonal().setConstant(theta[off]);
      break;
    case CovStructure::diagonal:
      for (int j = 0; j < k; ++j) L(j, j) = theta[off + j];
      break;
    case CovStructure::unstructured_lower: {
      int idx = off;
      for (int j = 0; j < k; ++j)
        for (int i = j; i < k; ++i) L(i, j) = theta[idx++];
      break;
    }
  }
  return L;
}

MatrixXd CovarianceTemplate::block_covariance(int b, std::span<const double> theta) const {
  const MatrixXd L = block_factor(b, theta);
  return L * L.transpose();
}

VectorXd CovarianceTemplate::theta_from_covariances(const std::vector<MatrixXd>& sigma) const {
  if (sigma.size() != blocks.size()) throw InvalidInput("one covariance per block expected");
  VectorXd theta(d());
  int idx = 0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    const MatrixXd& S = sigma[b];
    switch (blk.structure) {
      case CovStructure::scalar_identity: theta[idx++] = std::sqrt(S(0, 0)); break;
      case CovStructure::diagonal:
        for (int j = 0; j < blk.k(); ++j) theta[idx++] = std::sqrt(S(j, j));
        break;
      case CovStructure::unstructured_lower: {
        Eigen::LLT<MatrixXd> llt(S);
        if (llt.info() != Eigen::Success) throw InvalidInput("covariance is not positive definite");
        const MatrixXd L = llt.matrixL();
        for (int j = 0; j < blk.k(); ++j)
          for (int i = j; i < blk.k(); ++i) theta[idx++] = L(i, j);
        break;
      }
    }
  }
  return theta;
}

std::vector<bool> CovarianceTemplate::random_columns(int p) const {
  std::vector<bool> out(p, false);
  for (const auto& b : blocks)
    for (int c : b.columns)
      if (c >= 0 && c < p) out[c] = true;
  return out;
}

RandomEffectsDesign::RandomEffectsDesign(const Dataset& data, const CovarianceTemplate& cov)
    : cov_(cov), n_(data.n()) {
  cov.validate(data);
  single_factor_ = !cov.blocks.empty();
  for (const auto& b : cov.blocks) {
    const auto& g = data.groups[b.factor];
    offsets_.push_back(q_);
    levels_.push_back(g.n_levels());
    q_ += g.n_levels() * b.k();
    level_copy_.push_back(g.level);
    MatrixXd vals(n_, b.k());
    for (int j = 0; j < b.k(); ++j) {
      if (b.columns[j] == kInterceptColumn)
        vals.col(j).setOnes();
      else
        vals.col(j) = data.X.col(b.columns[j]);
    }
    values_.push_back(std::move(vals));
    if (b.factor != cov.blocks.front().factor) single_factor_ = false;
  }
}

SparseMatrix RandomEffectsDesign::z() const {
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t b = 0; b < cov_.blocks.size(); ++b) {
    const int k = cov_.blocks[b].k();
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < k; ++j)
        trip.emplace_back(i, offsets_[b] + level_copy_[b][i] * k + j, values_[b](i, j));
  }
  SparseMatrix Z(n_, q_);
  Z.setFromTriplets(trip.begin(), trip.end());
  return Z;
}

SparseMatrix RandomEffectsDesign::lambda(std::span<const double> theta) const {
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t b = 0; b < cov_.blocks.size(); ++b) {
    const MatrixXd L = cov_.block_factor(static_cast<int>(b), theta);
    const int k = cov_.blocks[b].k();
    for (int r = 0; r < levels_[b]; ++r) {
      const int base = offsets_[b] + r * k;
      for (int j = 0; j < k; ++j)
        for (int i = j; i < k; ++i)
          if (L(i, j) != 0.0) trip.emplace_back(base + i, base + j, L(i, j));
    }
  }
  SparseMatrix lam(q_, q_);
  lam.setFromTriplets(trip.begin(), trip.end());
  return lam;
}

ZLambda RandomEffectsDesign::zlambda(std::span<const double> theta, bool force_general) const {
  ZLambda zl;
  zl.n = n_;
  zl.q = q_;
  std::vector<MatrixXd> factors;
  bool all_zero = true;
  for (std::size_t b = 0; b < cov_.blocks.size(); ++b) {
    factors.push_back(cov_.block_factor(static_cast<int>(b), theta));
    if (factors.back().cwiseAbs().maxCoeff() != 0.0) all_zero = false;
  }
  zl.zero = all_zero;
  if (single_factor_ && !force_general) {
    zl.blocked = true;
    int K = 0;
    for (const auto& b : cov_.blocks) K += b.k();
    zl.K = K;
    zl.level = level_copy_.front();
    zl.rows.resize(n_, K);
    const int n_levels = levels_.front();
    zl.block_index.assign(n_levels, std::vector<int>());
    for (int r = 0; r < n_levels; ++r) {
      auto& idx = zl.block_index[r];
      for (std::size_t b = 0; b < cov_.blocks.size(); ++b) {
        const int k = cov_.blocks[b].k();
        for (int j = 0; j < k; ++j) idx.push_back(offsets_[b] + r * k + j);
      }
    }
    int pos = 0;
    for (std::size_t b = 0; b < cov_.blocks.size(); ++b) {
      const int k = cov_.blocks[b].k();
      zl.rows.middleCols(pos, k) = values_[b] * factors[b];
      pos += k;
    }
    return zl;
  }
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t b = 0; b < cov_.blocks.size(); ++b) {
    const int k = cov_.blocks[b].k();
    const MatrixXd rows = values_[b] * factors[b];
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < k; ++j)
        trip.emplace_back(i, offsets_[b] + level_copy_[b][i] * k + j, rows(i, j));
  }
  zl.M.resize(n_, q_);
  zl.M.setFromTriplets(trip.begin(), trip.end());
  return zl;
}

VectorXd ZLambda::times(const VectorXd& u) const {
  if (!blocked) return M * u;
  VectorXd out(n);
  for (int i = 0; i < n; ++i) {
    const auto& idx = block_index[level[i]];
    double s = 0.0;
    for (int j = 0; j < K; ++j) s += rows(i, j) * u[idx[j]];
    out[i] = s;
  }
  return out;
}

VectorXd ZLambda::transpose_times(const VectorXd& v) const {
  if (!blocked) return M.transpose() * v;
  VectorXd out = VectorXd::Zero(q);
  for (int i = 0; i < n; ++i) {
    const auto& idx = block_index[level[i]];
    for (int j = 0; j < K; ++j) out[idx[j]] += rows(i, j) * v[i];
  }
  return out;
}

std::vector<bool> default_penalty_mask(const Dataset& data, const CovarianceTemplate& cov) {
  std::vector<bool> mask(data.p(), true);
  if (data.has_intercept && data.p() > 0) mask[0] = false;
  const auto random = cov.random_columns(data.p());
  for (int j = 0; j < data.p(); ++j)
    if (random[j]) mask[j] = false;
  return mask;
}

Standardization Standardization::compute(const Dataset& data) {
  Standardization s;
  s.active = true;
  const int p = data.p();
  s.center = VectorXd::Zero(p);
  s.scale = VectorXd::Ones(p);
  const double n = data.n();
  for (int j = 0; j < p; ++j) {
    if (j == 0 && data.has_intercept) continue;
    const double m = data.X.col(j).mean();
    const double var = (data.X.col(j).array() - m).square().sum() / std::max(1.0, n - 1.0);
    s.center[j] = data.has_intercept ? m : 0.0;
    const double sd = std::sqrt(var);
    s.scale[j] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

void Standardization::apply(Dataset& data) const {
  if (!active) return;
  for (int j = 0; j < data.p(); ++j)
    data.X.col(j) = (data.X.col(j).array() - center[j]) / scale[j];
}

VectorXd Standardization::to_original(const VectorXd& beta_std, bool has_intercept) const {
  if (!active) return beta_std;
  VectorXd out = beta_std.array() / scale.array();
  // center[0] is zero for the intercept column
  if (has_intercept) out[0] = beta_std[0] - out.dot(center);
  return out;
}

VectorXd Standardization::to_standardized(const VectorXd& beta_orig, bool has_intercept) const {
  if (!active) return beta_orig;
  VectorXd out = beta_orig.array() * scale.array();
  if (has_intercept) out[0] = beta_orig[0] + beta_orig.dot(center);
  return out;
}

Problem::Problem(Dataset d, CovarianceTemplate c, FamilySpec f)
    : Problem(std::move(d), std::move(c), f, {}) {}

Problem::Problem(Dataset d, CovarianceTemplate c, FamilySpec f, std::vector<bool> mask)
    : data(std::move(d)), cov(std::move(c)), family(f), penalty_mask(std::move(mask)) {
  data.validate();
  family.validate();
  for (Eigen::Index i = 0; i < data.y.size(); ++i) family.check_response(data.y[i]);
  re = RandomEffectsDesign(data, cov);
  if (penalty_mask.empty()) penalty_mask = default_penalty_mask(data, cov);
  if (static_cast<int>(penalty_mask.size()) != data.p())
    throw InvalidInput("penalty mask length does not match the number of columns");
}

Problem Problem::restrict_columns(const std::vector<int>& cols) const {
  std::vector<int> remap(p(), -1);
  for (std::size_t j = 0; j < cols.size(); ++j) remap[cols[j]] = static_cast<int>(j);
  CovarianceTemplate c = cov;
  for (auto& b : c.blocks)
    for (int& col : b.columns) {
      if (col == kInterceptColumn) continue;
      if (remap[col] < 0) throw InvalidInput("restricted problem drops a random-effects column");
      col = remap[col];
    }
  std::vector<bool> mask;
  for (int j : cols) mask.push_back(penalty_mask[j]);
  return Problem(data.select_columns(cols), std::move(c), family, std::move(mask));
}

ParamState Problem::initial_state() const {
  ParamState s;
  s.beta = VectorXd::Zero(p());
  s.theta = VectorXd::Zero(d());
  const auto diag = cov.diagonal_params();
  for (int l = 0; l < d(); ++l) s.theta[l] = diag[l] ? 1.0 : 0.0;
  s.phi = family.phi_fixed;
  s.penalty_mask = penalty_mask;
  return s;
}

}  // namespace glmmlasso
