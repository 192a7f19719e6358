#include "glmmlasso/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>

#include <boost/math/tools/minima.hpp>

#include "glmmlasso/error.hpp"
#include "glmmlasso/glm_lasso.hpp"

namespace glmmlasso {

std::string to_string(FitMode m) { return m == FitMode::exact ? "exact" : "approx"; }

FitMode fit_mode_from_name(const std::string& name) {
  if (name == "exact") return FitMode::exact;
  if (name == "approx" || name == "approximate") return FitMode::approximate;
  throw InvalidInput("unknown fit mode '" + name + "' (exact|approx)");
}

void OptimizerConfig::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("delta must lie in (0,1)");
  if (!(rho_armijo > 0.0 && rho_armijo < 1.0)) throw InvalidInput("rho_armijo must lie in (0,1)");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidInput("gamma must lie in [0,1)");
  if (!(c_min > 0.0 && c_min <= c_max)) throw InvalidInput("need 0 < c_min <= c_max");
  if (active_set_period < 1) throw InvalidInput("active_set_period must be >= 1");
  if (max_outer_iter < 1 || max_armijo_backtracks < 1) throw InvalidInput("iteration budgets must be >= 1");
  if (!(alpha_init > 0.0) || !(outer_tol > 0.0) || !(scalar_opt_tol > 0.0))
    throw InvalidInput("tolerances must be positive");
}

double descent_direction(double grad, double h, double lambda, double beta_k, bool penalized) {
  if (!penalized) return -grad / h;
  const double a = (lambda - grad) / h, b = -beta_k, c = (-lambda - grad) / h;
  // median of three; equal arguments return the common value
  return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

namespace {

bool kkt_ok(double g, double beta, double lambda, bool pen, double tol, double& viol) {
  if (!pen) viol = std::abs(g);
  else if (beta == 0.0) viol = std::max(0.0, std::abs(g) - lambda);
  else viol = std::abs(g + lambda * (beta > 0.0 ? 1.0 : -1.0));
  return viol <= tol;
}

std::vector<int> support_of(const VectorXd& beta) {
  std::vector<int> s;
  for (Eigen::Index k = 0; k < beta.size(); ++k)
    if (beta[k] != 0.0) s.push_back(static_cast<int>(k));
  return s;
}

}  // namespace

GlmmLassoSolver::GlmmLassoSolver(const Problem& prob, double lambda, OptimizerConfig cfg,
                                 const ParamState& start, const VectorXd& u_start)
    : prob_(prob), lambda_(lambda), cfg_(cfg), psi_(start), ev_(prob, cfg.pirls) {
  cfg_.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidInput("lambda must be finite and nonnegative");
  if (psi_.beta.size() != prob.p()) throw InvalidInput("start beta length mismatch");
  if (psi_.theta.size() != prob.d()) throw InvalidInput("start theta length mismatch");
  if (!(psi_.phi > 0.0)) throw InvalidInput("phi must be positive");
  if (prob.family.dispersion_known) psi_.phi = prob.family.phi_fixed;
  psi_.penalty_mask = prob.penalty_mask;
  xbeta_ = prob.data.X * psi_.beta;
  ev_.set_theta(psi_.theta);
  VectorXd u0 = u_start.size() == prob.q() ? u_start : VectorXd::Zero(prob.q());
  LaplaceEvaluation e;
  try {
    e = ev_.evaluate(psi_.beta, xbeta_, psi_.phi, lambda_, u0);
  } catch (const PirlsConvergenceError& err) {
    // start from the best iterate PIRLS reached
    e.mode = err.last;
    e.value = objective_from_mode(prob_, e.mode, psi_.beta, psi_.phi, lambda_);
  }
  ++solves_;
  commit(xbeta_, std::move(e));
}

void GlmmLassoSolver::commit(const VectorXd& xbeta, LaplaceEvaluation eval) {
  if (&xbeta != &xbeta_) xbeta_ = xbeta;
  mode_ = std::move(eval.mode);
  value_ = eval.value;
  q_ = value_.q_la;
  terms_valid_ = false;
}

// rounding slack for sufficient-decrease tests, kept below the 1e-10 step tolerance
double GlmmLassoSolver::noise() const { return std::min(1e-13 * std::max(1.0, std::abs(q_)), 5e-11); }

double GlmmLassoSolver::gradient(int k, bool exact) {
  if (!exact) return ev_.grad_fixed_u(k, mode_, psi_.phi, cfg_.logdet_in_grad);
  if (!cfg_.fd_exact_gradient) {
    if (!terms_valid_) {
      exact_terms_ = ev_.gradient_terms(mode_, psi_.phi).exact;
      terms_valid_ = true;
    }
    return ev_.grad_deviance(k, mode_, psi_.phi) + prob_.data.X.col(k).dot(exact_terms_);
  }
  const double h = 1e-5 * (1.0 + std::abs(psi_.beta[k]));
  const auto xk = prob_.data.X.col(k);
  const double fp = ev_.evaluate(psi_.beta, xbeta_ + h * xk, psi_.phi, 0.0, mode_.u_tilde).value.f;
  const double fm = ev_.evaluate(psi_.beta, xbeta_ - h * xk, psi_.phi, 0.0, mode_.u_tilde).value.f;
  solves_ += 2;
  return (fp - fm) / (2.0 * h);
}

ArmijoResult GlmmLassoSolver::armijo_search(int k, double d, double h, double grad, bool exact) {
  ArmijoResult res;
  res.new_beta_k = psi_.beta[k];
  res.new_q_la = q_;
  if (d == 0.0) return res;
  const bool pen = prob_.penalty_mask[k];
  const double bk = psi_.beta[k];
  const double delta = grad * d + cfg_.gamma * d * d * h + (pen ? lambda_ * (std::abs(bk + d) - std::abs(bk)) : 0.0);
  if (!(delta < 0.0)) return res;  // rounding-level direction

  const auto xk = prob_.data.X.col(k);
  const double pen_rest = value_.penalty - (pen ? lambda_ * std::abs(bk) : 0.0);
  // frozen-mode quantities for the approximate rule
  VectorXd zlu;
  double base = q_;
  if (!exact) {
    zlu = mode_.eta - xbeta_;
    base = ev_.f_fixed_u(xbeta_, psi_.phi, zlu, value_.u_norm2) + value_.penalty;
  }
  // re-solved checks of an approximate step that are allowed to fail
  int safeguard_left = 3;
  double alpha = cfg_.alpha_init;
  VectorXd xb(xbeta_.size());
  for (int t = 0; t < cfg_.max_armijo_backtracks; ++t, alpha *= cfg_.delta) {
    ++res.trials;
    const double nb = bk + alpha * d;
    xb = xbeta_ + (alpha * d) * xk;
    const double pen_new = pen_rest + (pen ? lambda_ * std::abs(nb) : 0.0);
    if (!exact) {
      const double qf = ev_.f_fixed_u(xb, psi_.phi, zlu, value_.u_norm2) + pen_new;
      // strict: a predicted decrease lost to rounding must not pass as a null step
      if (!(qf <= base + alpha * cfg_.rho_armijo * delta) || !(qf < base)) continue;
    }
    VectorXd beta = psi_.beta;
    beta[k] = nb;
    LaplaceEvaluation e;
    try {
      e = ev_.evaluate(beta, xb, psi_.phi, lambda_, mode_.u_tilde);
    } catch (const ConvergenceError&) {
      ++solves_;
      continue;
    } catch (const NumericalError&) {
      ++solves_;
      continue;
    }
    ++solves_;
    const double qn = e.value.q_la;
    const bool ok = exact ? qn <= q_ + alpha * cfg_.rho_armijo * delta + noise() : qn < q_;
    if (!ok) {
      if (!exact && --safeguard_left == 0) break;
      continue;
    }
    psi_.beta[k] = nb;
    commit(xb, std::move(e));
    res.accepted = true;
    res.alpha = alpha;
    res.new_beta_k = nb;
    res.new_q_la = q_;
    return res;
  }
  return res;
}

bool GlmmLassoSolver::update_coordinate(int k) {
  if (k < 0 || k >= prob_.p()) throw InvalidInput("coordinate index out of range");
  const bool pen = prob_.penalty_mask[k];
  const double h = ev_.hessian(k, mode_, cfg_.c_min, cfg_.c_max);
  const bool exact = cfg_.mode == FitMode::exact;
  double g = gradient(k, exact);
  double d = descent_direction(g, h, lambda_, psi_.beta[k], pen);
  if (d == 0.0) return false;
  auto res = armijo_search(k, d, h, g, exact);
  if (res.accepted) return true;
  if (!exact) {
    ++fallbacks_;
    g = gradient(k, true);
    d = descent_direction(g, h, lambda_, psi_.beta[k], pen);
    if (d == 0.0) return false;
    res = armijo_search(k, d, h, g, true);
    if (res.accepted) return true;
  }
  ++flagged_;
  return false;
}

LaplaceEvaluation GlmmLassoSolver::evaluate_theta(const VectorXd& theta, double phi) {
  LaplaceEvaluator ev(prob_, cfg_.pirls);
  ev.set_theta(theta);
  ++solves_;
  return ev.evaluate(psi_.beta, xbeta_, phi, lambda_, mode_.u_tilde);
}

bool GlmmLassoSolver::optimize_theta(int l) {
  if (l < 0 || l >= prob_.d()) throw InvalidInput("theta index out of range");
  const bool diag = prob_.cov.diagonal_params()[l];
  const double cur = psi_.theta[l];
  auto obj = [&](double t) {
    VectorXd th = psi_.theta;
    th[l] = t;
    try {
      return evaluate_theta(th, psi_.phi).value.q_la;
    } catch (const std::exception&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const int bits = std::max(8, static_cast<int>(-std::log2(cfg_.scalar_opt_tol)));
  double lo, hi;
  if (diag) {
    lo = 0.0;
    hi = std::min(cfg_.theta_max, 4.0 * std::abs(cur) + 1.0);
  } else {
    lo = cur - (4.0 * std::abs(cur) + 1.0);
    hi = cur + (4.0 * std::abs(cur) + 1.0);
  }
  double best_t = cur, best_q = q_;
  for (int expand = 0; expand < 8; ++expand) {
    std::uintmax_t it = 200;
    const auto [t, qv] = boost::math::tools::brent_find_minima(obj, lo, hi, bits, it);
    if (qv < best_q) {
      best_t = t;
      best_q = qv;
    }
    const double edge = 0.02 * (hi - lo);
    bool grew = false;
    if (t > hi - edge && hi < (diag ? cfg_.theta_max : std::numeric_limits<double>::max())) {
      const double w = hi - lo;
      hi = diag ? std::min(cfg_.theta_max, 4.0 * hi + 1.0) : hi + 3.0 * w;
      grew = true;
    }
    if (!diag && t < lo + edge) {
      lo -= 3.0 * (hi - lo);
      grew = true;
    }
    if (!grew) break;
  }
  if (diag) {
    const double q0 = obj(0.0);
    if (q0 < best_q) {
      best_t = 0.0;
      best_q = q0;
    }
  }
  if (!(best_q < q_) || best_t == cur) return false;
  VectorXd th = psi_.theta;
  th[l] = best_t;
  LaplaceEvaluation e;
  try {
    e = evaluate_theta(th, psi_.phi);
  } catch (const std::exception&) {
    return false;
  }
  if (!(e.value.q_la < q_ - noise())) return false;  // ignore rounding-level gains
  psi_.theta = th;
  ev_.set_theta(th);
  commit(xbeta_, std::move(e));
  return true;
}

bool GlmmLassoSolver::optimize_phi() {
  if (prob_.family.dispersion_known) return false;
  const double cur = std::log(psi_.phi);
  auto obj = [&](double lp) {
    try {
      return evaluate_theta(psi_.theta, std::exp(lp)).value.q_la;
    } catch (const std::exception&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const double top = std::log(cfg_.phi_max);
  double lo = cur - 5.0, hi = std::min(cur + 5.0, top);
  const int bits = std::max(8, static_cast<int>(-std::log2(cfg_.scalar_opt_tol)));
  double best = cur, best_q = q_;
  for (int expand = 0; expand < 6; ++expand) {
    std::uintmax_t it = 200;
    const auto [t, qv] = boost::math::tools::brent_find_minima(obj, lo, hi, bits, it);
    if (qv < best_q) {
      best = t;
      best_q = qv;
    }
    const double edge = 0.02 * (hi - lo);
    if (t < lo + edge) lo -= 10.0;
    else if (t > hi - edge && hi < top) hi = std::min(top, hi + 10.0);
    else break;
  }
  if (!(best_q < q_) || best == cur) return false;
  const double phi = std::exp(best);
  LaplaceEvaluation e;
  try {
    e = evaluate_theta(psi_.theta, phi);
  } catch (const std::exception&) {
    return false;
  }
  if (!(e.value.q_la < q_ - noise())) return false;  // ignore rounding-level gains
  psi_.phi = phi;
  commit(xbeta_, std::move(e));
  return true;
}

KktReport GlmmLassoSolver::check_kkt() {
  KktReport r;
  r.tolerance = 1e-3 * lambda_ + 1e-6;
  const bool exact = cfg_.mode == FitMode::exact;
  for (int k = 0; k < prob_.p(); ++k) {
    const bool pen = prob_.penalty_mask[k];
    double viol = 0.0;
    bool ok = kkt_ok(gradient(k, exact), psi_.beta[k], lambda_, pen, r.tolerance, viol);
    if (!ok && !exact) {
      double v2 = 0.0;
      ok = kkt_ok(gradient(k, true), psi_.beta[k], lambda_, pen, r.tolerance, v2);
      viol = std::min(viol, v2);
    }
    r.max_violation = std::max(r.max_violation, viol);
    if (!ok) {
      r.ok = false;
      r.failing.push_back(k);
    }
  }
  return r;
}

FitRecord GlmmLassoSolver::run() {
  const auto t0 = std::chrono::steady_clock::now();
  FitRecord rec;
  rec.lambda = lambda_;
  rec.mode = cfg_.mode;
  rec.trace.push_back(q_);
  const int p = prob_.p();
  bool force_full = true;
  for (int s = 1; s <= cfg_.max_outer_iter; ++s) {
    const bool full = force_full || (s - 1) % cfg_.active_set_period == 0;
    const auto before = support_of(psi_.beta);
    const double q_prev = q_;
    for (int k = 0; k < p; ++k)
      if (full || !prob_.penalty_mask[k] || psi_.beta[k] != 0.0) update_coordinate(k);
    for (int l = 0; l < prob_.d(); ++l) optimize_theta(l);
    optimize_phi();
    if (q_ > q_prev + 1e-10) ++rec.monotonicity_violations;
    rec.trace.push_back(q_);
    rec.outer_iterations = s;
    const bool small = std::abs(q_prev - q_) <= cfg_.outer_tol * std::max(1.0, std::abs(q_));
    const bool stable = support_of(psi_.beta) == before;
    if (small && stable) {
      if (full) {
        if (!cfg_.require_kkt) {
          rec.converged = true;
          break;
        }
        rec.kkt = check_kkt();
        if (rec.kkt.ok) {
          rec.converged = true;
          break;
        }
      }
      force_full = true;
    } else {
      force_full = false;
    }
  }
  if (!rec.converged || !cfg_.require_kkt) rec.kkt = check_kkt();
  rec.psi_hat = psi_;
  rec.u_tilde = mode_.u_tilde;
  rec.objective = value_;
  rec.q_la_final = q_;
  rec.active_set = support_of(psi_.beta);
  rec.flagged_coordinates = flagged_;
  rec.exact_fallbacks = fallbacks_;
  rec.pirls_solves = solves_;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

FitRecord fit(const Problem& prob, double lambda, const OptimizerConfig& cfg, const ParamState& start,
              const VectorXd& u_start) {
  GlmmLassoSolver solver(prob, lambda, cfg, start, u_start);
  return solver.run();
}

ParamState init_start(const Problem& prob, const OptimizerConfig& cfg) {
  ParamState psi = prob.initial_state();
  const auto& fam = prob.family;
  if (!fam.dispersion_known) {
    const auto& y = prob.data.y;
    const double m = y.mean();
    psi.phi = std::max(1e-8, (y.array() - m).square().sum() / std::max(1, prob.n() - 1));
  }
  const int n = prob.n();
  VectorXd beta;
  try {
    if (n >= 10) {
      beta = glm_lasso_cv(prob.data.X, prob.data.y, fam, psi.phi, prob.penalty_mask, 21, 5).fit.beta;
    } else {
      beta = glm_lasso(prob.data.X, prob.data.y, fam, psi.phi, prob.penalty_mask,
                       std::numeric_limits<double>::infinity())
                 .beta;
    }
  } catch (const InvalidInput&) {
    throw;
  } catch (const std::exception&) {
    beta.resize(0);
  }
  if (beta.size() != prob.p() || !beta.allFinite()) {
    beta = glm_lasso(prob.data.X, prob.data.y, fam, psi.phi, prob.penalty_mask,
                     std::numeric_limits<double>::infinity())
               .beta;
  }
  psi.beta = beta;
  // one pass of the theta and phi steps at the GLM coefficients
  GlmmLassoSolver solver(prob, 0.0, cfg, psi);
  for (int l = 0; l < prob.d(); ++l) solver.optimize_theta(l);
  solver.optimize_phi();
  ParamState out = solver.state();
  return out;
}

KktReport check_kkt(const Problem& prob, const FitRecord& rec, const OptimizerConfig& cfg) {
  GlmmLassoSolver solver(prob, rec.lambda, cfg, rec.psi_hat, rec.u_tilde);
  return solver.check_kkt();
}

}  // namespace glmmlasso
