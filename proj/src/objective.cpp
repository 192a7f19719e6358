#include "glmmlasso/objective.hpp"

#include <cmath>

#include "glmmlasso/error.hpp"
#include "kernels.hpp"

namespace glmmlasso {

double l1_penalty(const VectorXd& beta, const std::vector<bool>& mask, double lambda) {
  if (lambda == 0.0) return 0.0;
  double s = 0.0;
  for (Eigen::Index k = 0; k < beta.size(); ++k)
    if (mask[k]) s += std::abs(beta[k]);
  return lambda * s;
}

ObjectiveValue objective_from_mode(const Problem& prob, const PirlsResult& mode, const VectorXd& beta,
                                   double phi, double lambda) {
  ObjectiveValue v;
  const auto kind = prob.family.kind;
  const auto& y = prob.data.y;
  for (Eigen::Index i = 0; i < y.size(); ++i) v.neg2_cond_loglik += detail::neg2_term(kind, y[i], mode.mu[i], phi);
  v.logdet = mode.logdet;
  v.u_norm2 = mode.u_tilde.squaredNorm();
  v.f = v.neg2_cond_loglik + v.logdet + v.u_norm2;
  v.penalty = l1_penalty(beta, prob.penalty_mask, lambda);
  v.q_la = v.f + v.penalty;
  if (!std::isfinite(v.q_la)) throw NumericalError("non-finite Laplace objective");
  return v;
}

LaplaceEvaluation q_la(const Problem& prob, const ParamState& psi, double lambda, const VectorXd& u_warm,
                       const PirlsConfig& cfg) {
  if (lambda < 0.0) throw InvalidInput("lambda must be nonnegative");
  LaplaceEvaluation out;
  out.mode = solve_mode(prob, psi, u_warm, cfg);
  out.value = objective_from_mode(prob, out.mode, psi.beta, psi.phi, lambda);
  return out;
}

namespace {

double deviance_gradient(int k, const Problem& prob, const VectorXd& mu, double phi) {
  const auto& x = prob.data.X;
  double s = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) s += x(i, k) * (prob.data.y[i] - mu[i]);
  return -2.0 * s / phi;
}

double logdet_gradient(int k, const Problem& prob, const ZLambda& zl, const PirlsResult& mode, double phi,
                       const PirlsConfig& cfg) {
  if (zl.is_zero()) return 0.0;
  ModeSystem sys;
  sys.factorize(zl, mode.W, cfg.solver);
  const VectorXd h = sys.leverages(zl);
  const auto kind = prob.family.kind;
  double s = 0.0;
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    const double mu = mode.mu[i];
    // dW/deta for canonical links: v'(mu) v(mu) / phi
    const double dw = detail::dvar_of(kind, mu) * detail::var_of(kind, mu) / phi;
    s += prob.data.X(i, k) * dw * h[i];
  }
  return s;
}

}  // namespace

GradientTerms gradient_terms(const Problem& prob, const ZLambda& zl, const PirlsResult& mode, double phi,
                             const PirlsConfig& cfg) {
  const Eigen::Index n = prob.n();
  GradientTerms t;
  t.direct = VectorXd::Zero(n);
  t.exact = VectorXd::Zero(n);
  if (zl.is_zero() || prob.family.kind == FamilyKind::gaussian_identity) return t;
  ModeSystem sys;
  sys.factorize(zl, mode.W, cfg.solver);
  const VectorXd h = sys.leverages(zl);
  const auto kind = prob.family.kind;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = mode.mu[i];
    t.direct[i] = detail::dvar_of(kind, mu) * detail::var_of(kind, mu) / phi * h[i];
  }
  // d logdet / du = (Z Lambda)^T direct; push it through du~/dbeta
  const VectorXd r = sys.solve(zl.transpose_times(t.direct));
  const VectorXd zr = zl.times(r);
  t.exact = t.direct - mode.W.cwiseProduct(zr);
  return t;
}

double grad_beta_analytic(int k, const Problem& prob, const ParamState& psi, const PirlsResult& mode) {
  if (k < 0 || k >= prob.p()) throw InvalidInput("coordinate index out of range");
  const ZLambda zl = prob.re.zlambda(std::span<const double>(psi.theta.data(), psi.theta.size()));
  const auto t = gradient_terms(prob, zl, mode, psi.phi);
  return deviance_gradient(k, prob, mode.mu, psi.phi) + prob.data.X.col(k).dot(t.exact);
}

double grad_beta_fixed_u(int k, const Problem& prob, const ParamState& psi, const PirlsResult& mode,
                         bool logdet_in_grad) {
  if (k < 0 || k >= prob.p()) throw InvalidInput("coordinate index out of range");
  double g = deviance_gradient(k, prob, mode.mu, psi.phi);
  if (logdet_in_grad) {
    const ZLambda zl = prob.re.zlambda(std::span<const double>(psi.theta.data(), psi.theta.size()));
    g += logdet_gradient(k, prob, zl, mode, psi.phi, {});
  }
  return g;
}

double grad_beta_exact(int k, const Problem& prob, const ParamState& psi, const VectorXd& u_warm,
                       const PirlsConfig& cfg) {
  if (k < 0 || k >= prob.p()) throw InvalidInput("coordinate index out of range");
  LaplaceEvaluator ev(prob, cfg);
  ev.set_theta(psi.theta);
  const double h = 1e-5 * (1.0 + std::abs(psi.beta[k]));
  VectorXd xbeta = prob.data.X * psi.beta;
  VectorXd beta = psi.beta;
  beta[k] += h;
  const double f_plus = ev.evaluate(beta, xbeta + h * prob.data.X.col(k), psi.phi, 0.0, u_warm).value.f;
  beta[k] -= 2.0 * h;
  const double f_minus = ev.evaluate(beta, xbeta - h * prob.data.X.col(k), psi.phi, 0.0, u_warm).value.f;
  return (f_plus - f_minus) / (2.0 * h);
}

double hessian_diag(int k, const Problem& prob, const PirlsResult& mode, double c_min, double c_max) {
  if (k < 0 || k >= prob.p()) throw InvalidInput("coordinate index out of range");
  const double h = 2.0 * (prob.data.X.col(k).array().square() * mode.W.array()).sum();
  return std::clamp(h, c_min, c_max);
}

LaplaceEvaluator::LaplaceEvaluator(const Problem& prob, PirlsConfig cfg) : prob_(&prob), cfg_(cfg) {}

void LaplaceEvaluator::set_theta(const VectorXd& theta) {
  if (theta.size() != prob_->d()) throw InvalidInput("theta length mismatch");
  theta_ = theta;
  zl_ = prob_->re.zlambda(std::span<const double>(theta_.data(), theta_.size()));
}

LaplaceEvaluation LaplaceEvaluator::evaluate(const VectorXd& beta, const VectorXd& xbeta, double phi,
                                             double lambda, const VectorXd& u_warm) const {
  LaplaceEvaluation out;
  out.mode = solve_mode(*prob_, zl_, xbeta, phi, u_warm, cfg_);
  out.value = objective_from_mode(*prob_, out.mode, beta, phi, lambda);
  return out;
}

double LaplaceEvaluator::f_fixed_u(const VectorXd& xbeta, double phi, const VectorXd& zlu,
                                   double u_norm2) const {
  const auto kind = prob_->family.kind;
  const auto& y = prob_->data.y;
  const Eigen::Index n = y.size();
  VectorXd w(n);
  double dev = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = detail::mean_of(kind, xbeta[i] + zlu[i]);
    dev += detail::neg2_term(kind, y[i], mu, phi);
    w[i] = detail::var_of(kind, mu) / phi;
  }
  double logdet = 0.0;
  if (!zl_.is_zero()) {
    ModeSystem sys;
    sys.factorize(zl_, w, cfg_.solver);
    logdet = sys.logdet();
  }
  return dev + logdet + u_norm2;
}

double LaplaceEvaluator::grad_fixed_u(int k, const PirlsResult& mode, double phi, bool logdet_in_grad) const {
  double g = deviance_gradient(k, *prob_, mode.mu, phi);
  if (logdet_in_grad) g += logdet_gradient(k, *prob_, zl_, mode, phi, cfg_);
  return g;
}

GradientTerms LaplaceEvaluator::gradient_terms(const PirlsResult& mode, double phi) const {
  return glmmlasso::gradient_terms(*prob_, zl_, mode, phi, cfg_);
}

double LaplaceEvaluator::grad_deviance(int k, const PirlsResult& mode, double phi) const {
  return glmmlasso::deviance_gradient(k, *prob_, mode.mu, phi);
}

double LaplaceEvaluator::hessian(int k, const PirlsResult& mode, double c_min, double c_max) const {
  return hessian_diag(k, *prob_, mode, c_min, c_max);
}

}  // namespace glmmlasso
