#include "glmmlasso/pirls.hpp"

#include <cmath>

#include "glmmlasso/error.hpp"
#include "kernels.hpp"

namespace glmmlasso {

namespace {

// In-place lower Cholesky of a K x K row-major block; returns log-determinant.
double cholesky_block(double* a, int K) {
  double logdet = 0.0;
  for (int j = 0; j < K; ++j) {
    double diag = a[j * K + j];
    for (int m = 0; m < j; ++m) diag -= a[j * K + m] * a[j * K + m];
    if (!(diag > 0.0)) throw NumericalError("mode system is not positive definite");
    const double ljj = std::sqrt(diag);
    a[j * K + j] = ljj;
    logdet += 2.0 * std::log(ljj);
    for (int i = j + 1; i < K; ++i) {
      double s = a[i * K + j];
      for (int m = 0; m < j; ++m) s -= a[i * K + m] * a[j * K + m];
      a[i * K + j] = s / ljj;
    }
  }
  return logdet;
}

void forward(const double* L, int K, double* x) {
  for (int i = 0; i < K; ++i) {
    double s = x[i];
    for (int m = 0; m < i; ++m) s -= L[i * K + m] * x[m];
    x[i] = s / L[i * K + i];
  }
}

void backward(const double* L, int K, double* x) {
  for (int i = K - 1; i >= 0; --i) {
    double s = x[i];
    for (int m = i + 1; m < K; ++m) s -= L[m * K + i] * x[m];
    x[i] = s / L[i * K + i];
  }
}

struct ModeState {
  VectorXd eta;
  VectorXd mu;
  double s = 0.0;
};

ModeState evaluate_state(const Problem& prob, const ZLambda& zl, const VectorXd& xbeta, double phi,
                         const VectorXd& u) {
  ModeState st;
  st.eta = xbeta;
  if (!zl.is_zero()) st.eta += zl.times(u);
  const auto kind = prob.family.kind;
  const auto& y = prob.data.y;
  st.mu.resize(st.eta.size());
  double dev = 0.0;
  for (Eigen::Index i = 0; i < st.eta.size(); ++i) {
    st.mu[i] = detail::mean_of(kind, st.eta[i]);
    dev += detail::neg2_term(kind, y[i], st.mu[i], phi);
  }
  st.s = 0.5 * dev + 0.5 * u.squaredNorm();
  return st;
}

VectorXd gradient_at(const Problem& prob, const ZLambda& zl, const ModeState& st, double phi,
                     const VectorXd& u) {
  if (zl.is_zero()) return u;
  const VectorXd resid = (prob.data.y - st.mu) / phi;
  return u - zl.transpose_times(resid);
}

VectorXd weights_at(const Problem& prob, const ModeState& st, double phi) {
  VectorXd w(st.mu.size());
  for (Eigen::Index i = 0; i < w.size(); ++i)
    w[i] = detail::var_of(prob.family.kind, st.mu[i]) / phi;
  return w;
}

}  // namespace

void ModeSystem::factorize(const ZLambda& zl, const VectorXd& w, SolverKind kind) {
  zl_ = &zl;
  q_ = zl.q;
  if (kind == SolverKind::automatic) kind = zl.blocked ? SolverKind::block : SolverKind::sparse;
  if (kind == SolverKind::block && !zl.blocked)
    throw InvalidInput("block solver requires a single grouping factor");
  kind_ = kind;
  if (kind == SolverKind::block) {
    const int K = zl.K;
    K_ = K;
    const int n_levels = static_cast<int>(zl.block_index.size());
    chol_.assign(static_cast<std::size_t>(n_levels) * K * K, 0.0);
    for (int r = 0; r < n_levels; ++r)
      for (int j = 0; j < K; ++j) chol_[(r * K + j) * K + j] = 1.0;
    for (int i = 0; i < zl.n; ++i) {
      double* a = &chol_[static_cast<std::size_t>(zl.level[i]) * K * K];
      for (int j = 0; j < K; ++j) {
        const double wj = w[i] * zl.rows(i, j);
        for (int m = 0; m <= j; ++m) a[j * K + m] += wj * zl.rows(i, m);
      }
    }
    logdet_ = 0.0;
    for (int r = 0; r < n_levels; ++r) logdet_ += cholesky_block(&chol_[static_cast<std::size_t>(r) * K * K], K);
    return;
  }
  // Assemble the general system from Z Lambda (sparse or dense rows).
  Eigen::SparseMatrix<double> M;
  if (zl.blocked) {
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < zl.n; ++i)
      for (int j = 0; j < zl.K; ++j) trip.emplace_back(i, zl.block_index[zl.level[i]][j], zl.rows(i, j));
    M.resize(zl.n, zl.q);
    M.setFromTriplets(trip.begin(), trip.end());
  } else {
    M = zl.M;
  }
  Eigen::SparseMatrix<double> A = M.transpose() * w.asDiagonal() * M;
  Eigen::SparseMatrix<double> I(q_, q_);
  I.setIdentity();
  A += I;
  if (kind == SolverKind::dense) {
    dense_.compute(MatrixXd(A));
    if (dense_.info() != Eigen::Success) throw NumericalError("mode system is not positive definite");
    const MatrixXd L = dense_.matrixL();
    logdet_ = 2.0 * L.diagonal().array().log().sum();
    return;
  }
  ldlt_.compute(A);
  if (ldlt_.info() != Eigen::Success) throw NumericalError("mode system factorization failed");
  logdet_ = ldlt_.vectorD().array().log().sum();
}

VectorXd ModeSystem::solve(const VectorXd& rhs) const {
  switch (kind_) {
    case SolverKind::block: {
      const auto& zl = *zl_;
      VectorXd out(q_);
      std::vector<double> x(K_);
      for (std::size_t r = 0; r < zl.block_index.size(); ++r) {
        const auto& idx = zl.block_index[r];
        for (int j = 0; j < K_; ++j) x[j] = rhs[idx[j]];
        const double* L = &chol_[r * K_ * K_];
        forward(L, K_, x.data());
        backward(L, K_, x.data());
        for (int j = 0; j < K_; ++j) out[idx[j]] = x[j];
      }
      return out;
    }
    case SolverKind::dense: return dense_.solve(rhs);
    default: return ldlt_.solve(rhs);
  }
}

VectorXd ModeSystem::leverages(const ZLambda& zl) const {
  VectorXd h(zl.n);
  if (kind_ == SolverKind::block) {
    std::vector<double> x(K_);
    for (int i = 0; i < zl.n; ++i) {
      for (int j = 0; j < K_; ++j) x[j] = zl.rows(i, j);
      forward(&chol_[static_cast<std::size_t>(zl.level[i]) * K_ * K_], K_, x.data());
      double s = 0.0;
      for (double v : x) s += v * v;
      h[i] = s;
    }
    return h;
  }
  for (int i = 0; i < zl.n; ++i) {
    VectorXd e = VectorXd::Zero(zl.n);
    e[i] = 1.0;
    const VectorXd m = zl.transpose_times(e);
    h[i] = m.dot(solve(m));
  }
  return h;
}

double s_value(const Problem& prob, const ZLambda& zl, const VectorXd& xbeta, double phi,
               const VectorXd& u) {
  return evaluate_state(prob, zl, xbeta, phi, u).s;
}

VectorXd s_grad(const Problem& prob, const ZLambda& zl, const VectorXd& xbeta, double phi,
                const VectorXd& u) {
  const ModeState st = evaluate_state(prob, zl, xbeta, phi, u);
  return gradient_at(prob, zl, st, phi, u);
}

PirlsResult solve_mode(const Problem& prob, const ZLambda& zl, const VectorXd& xbeta, double phi,
                       const VectorXd& u_start, const PirlsConfig& cfg) {
  const int q = zl.q;
  VectorXd u = u_start.size() == q ? u_start : VectorXd::Zero(q);
  if (zl.is_zero()) u.setZero();
  ModeState st = evaluate_state(prob, zl, xbeta, phi, u);
  VectorXd grad = gradient_at(prob, zl, st, phi, u);
  ModeSystem sys;
  PirlsResult res;
  auto scaled = [&](const VectorXd& g, const VectorXd& uu) {
    const double unorm = uu.size() ? uu.cwiseAbs().maxCoeff() : 0.0;
    return (g.size() ? g.cwiseAbs().maxCoeff() : 0.0) / (1.0 + unorm);
  };
  bool converged = scaled(grad, u) <= cfg.grad_tol;
  int it = 0;
  while (!converged && it < cfg.max_iter) {
    sys.factorize(zl, weights_at(prob, st, phi), cfg.solver);
    const VectorXd step = -sys.solve(grad);
    double alpha = 1.0;
    VectorXd u_new = u + step;
    ModeState st_new = evaluate_state(prob, zl, xbeta, phi, u_new);
    for (int h = 0; h < cfg.max_halvings && !(st_new.s <= st.s + 1e-12 * std::abs(st.s)); ++h) {
      alpha *= 0.5;
      u_new = u + alpha * step;
      st_new = evaluate_state(prob, zl, xbeta, phi, u_new);
    }
    ++it;
    const double eta_norm = st.eta.norm();
    const double rel_eta = (st_new.eta - st.eta).norm() / (eta_norm > 0.0 ? eta_norm : 1.0);
    u = std::move(u_new);
    st = std::move(st_new);
    grad = gradient_at(prob, zl, st, phi, u);
    const double g = scaled(grad, u);
    converged = g <= cfg.grad_tol || (rel_eta <= cfg.eta_tol && g <= cfg.cert_tol);
    if (!std::isfinite(st.s)) throw NumericalError("PIRLS produced a non-finite objective");
  }
  const VectorXd w = weights_at(prob, st, phi);
  if (zl.is_zero()) {
    res.logdet = 0.0;
  } else {
    sys.factorize(zl, w, cfg.solver);
    res.logdet = sys.logdet();
  }
  res.u_tilde = std::move(u);
  res.W = w;
  res.mu = std::move(st.mu);
  res.eta = std::move(st.eta);
  res.iterations = it;
  res.converged = converged;
  res.s_value = st.s;
  res.grad_inf = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
  if (!converged)
    throw PirlsConvergenceError("PIRLS did not converge after " + std::to_string(it) +
                                    " iterations (|S'|_inf = " + std::to_string(res.grad_inf) + ")",
                                res);
  return res;
}

PirlsResult solve_mode(const Problem& prob, const ParamState& psi, const VectorXd& u_start,
                       const PirlsConfig& cfg) {
  const ZLambda zl = prob.re.zlambda(std::span<const double>(psi.theta.data(), psi.theta.size()));
  const VectorXd xbeta = prob.data.X * psi.beta;
  return solve_mode(prob, zl, xbeta, psi.phi, u_start, cfg);
}

}  // namespace glmmlasso
