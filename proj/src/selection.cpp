#include "glmmlasso/selection.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "glmmlasso/error.hpp"
#include "glmmlasso/glm_lasso.hpp"

namespace glmmlasso {

double information_criterion(double f, int df, int n, Criterion kind) {
  if (n < 1) throw InvalidInput("information criterion needs n >= 1");
  const double a = kind == Criterion::bic ? std::log(static_cast<double>(n)) : 2.0;
  return f + a * df;
}

int degrees_of_freedom(const FitRecord& rec, int d) { return static_cast<int>(rec.active_set.size()) + d; }

double information_criterion(const FitRecord& rec, int n, int d, Criterion kind) {
  return information_criterion(rec.objective.f, degrees_of_freedom(rec, d), n, kind);
}

namespace {

std::vector<int> unpenalized_columns(const Problem& prob) {
  std::vector<int> c;
  for (int k = 0; k < prob.p(); ++k)
    if (!prob.penalty_mask[k]) c.push_back(k);
  return c;
}

// Fit on a column subset at lambda = 0 and embed the result into full length.
FitRecord fit_subset(const Problem& prob, const OptimizerConfig& cfg, const std::vector<int>& cols,
                     const ParamState& from, const VectorXd& u) {
  FitRecord rec;
  if (cols.empty()) {
    // nothing to fit on the fixed side: theta/phi only
    ParamState st = from;
    st.beta.setZero();
    GlmmLassoSolver s0(prob, 0.0, cfg, st, u);
    return s0.run();
  }
  const Problem sub = prob.restrict_columns(cols);
  ParamState st;
  st.beta = from.beta(cols);
  st.theta = from.theta;
  st.phi = from.phi;
  st.penalty_mask = sub.penalty_mask;
  rec = fit(sub, 0.0, cfg, st, u);
  VectorXd full = VectorXd::Zero(prob.p());
  for (std::size_t j = 0; j < cols.size(); ++j) full[cols[j]] = rec.psi_hat.beta[j];
  rec.psi_hat.beta = full;
  rec.psi_hat.penalty_mask = prob.penalty_mask;
  std::vector<int> act;
  for (int j : rec.active_set) act.push_back(cols[j]);
  std::sort(act.begin(), act.end());
  rec.active_set = act;
  std::vector<int> fail;
  for (int j : rec.kkt.failing) fail.push_back(cols[j]);
  rec.kkt.failing = fail;
  return rec;
}

}  // namespace

FitRecord fit_null(const Problem& prob, const OptimizerConfig& cfg, const ParamState& start) {
  return fit_subset(prob, cfg, unpenalized_columns(prob), start, {});
}

double lambda_max(const Problem& prob, const OptimizerConfig& cfg, const FitRecord& null_fit) {
  GlmmLassoSolver s(prob, 0.0, cfg, null_fit.psi_hat, null_fit.u_tilde);
  double lmax = 0.0;
  for (int k = 0; k < prob.p(); ++k) {
    if (!prob.penalty_mask[k]) continue;
    lmax = std::max({lmax, std::abs(s.gradient(k, false)), std::abs(s.gradient(k, true))});
  }
  return lmax;
}

std::vector<double> lambda_grid(const Problem& prob, const OptimizerConfig& cfg, const PathConfig& pc) {
  const auto start = init_start(prob, cfg);
  const auto nf = fit_null(prob, cfg, start);
  const double lmax = lambda_max(prob, cfg, nf);
  if (lmax <= 0.0) return {0.0};
  return log_lambda_grid(lmax, pc.n_lambda, pc.min_ratio);
}

FitPath compute_path(const Problem& prob, const OptimizerConfig& cfg, const PathConfig& pc,
                     std::optional<ParamState> start) {
  if (pc.n_lambda < 1) throw InvalidInput("n_lambda must be >= 1");
  FitPath path;
  path.start = start ? *start : init_start(prob, cfg);
  path.null_fit = fit_null(prob, cfg, path.start);
  path.lambda_max = lambda_max(prob, cfg, path.null_fit);
  if (!pc.lambdas.empty()) {
    path.lambdas = pc.lambdas;
    for (std::size_t j = 1; j < path.lambdas.size(); ++j)
      if (!(path.lambdas[j] < path.lambdas[j - 1])) throw InvalidInput("lambda grid must be strictly decreasing");
  } else
    path.lambdas = path.lambda_max > 0.0 ? log_lambda_grid(path.lambda_max, pc.n_lambda, pc.min_ratio)
                                       : std::vector<double>{0.0};
  ParamState warm = path.null_fit.psi_hat;
  VectorXd u = path.null_fit.u_tilde;
  const int n = prob.n(), d = prob.d();
  for (double lam : path.lambdas) {
    FitRecord rec = pc.warm_start ? fit(prob, lam, cfg, warm, u) : fit(prob, lam, cfg, path.start);
    if (pc.warm_start) {
      warm = rec.psi_hat;
      u = rec.u_tilde;
    }
    path.df.push_back(degrees_of_freedom(rec, d));
    path.aic.push_back(information_criterion(rec, n, d, Criterion::aic));
    path.bic.push_back(information_criterion(rec, n, d, Criterion::bic));
    path.records.push_back(std::move(rec));
  }
  // first minimum wins ties: the sparser model
  path.best_bic = static_cast<int>(std::min_element(path.bic.begin(), path.bic.end()) - path.bic.begin());
  path.best_aic = static_cast<int>(std::min_element(path.aic.begin(), path.aic.end()) - path.aic.begin());
  return path;
}

FitRecord refit_on(const Problem& prob, const OptimizerConfig& cfg, const std::vector<int>& penalized_cols,
                   const FitRecord& from) {
  std::vector<int> cols = unpenalized_columns(prob);
  for (int k : penalized_cols) {
    if (k < 0 || k >= prob.p()) throw InvalidInput("refit column out of range");
    if (prob.penalty_mask[k]) cols.push_back(k);
  }
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  return fit_subset(prob, cfg, cols, from.psi_hat, from.u_tilde);
}

namespace {

std::vector<int> penalized_support(const Problem& prob, const FitRecord& rec) {
  std::vector<int> s;
  for (int k : rec.active_set)
    if (prob.penalty_mask[k]) s.push_back(k);
  return s;
}

}  // namespace

TwoStageResult select_hybrid(const Problem& prob, const OptimizerConfig& cfg, const FitPath& path) {
  if (path.records.empty()) throw InvalidInput("empty path");
  TwoStageResult r;
  r.kind = TwoStageKind::hybrid;
  r.stage1_index = path.best_bic;
  r.stage1 = path.records[path.best_bic];
  r.selected_set = penalized_support(prob, r.stage1);
  r.empty_fallback = r.selected_set.empty();
  r.stage2 = refit_on(prob, cfg, r.selected_set, r.stage1);
  r.stage2_bic = information_criterion(r.stage2, prob.n(), prob.d(), Criterion::bic);
  return r;
}

TwoStageResult select_thresholded(const Problem& prob, const OptimizerConfig& cfg, const FitPath& path,
                                  std::vector<double> thres_grid) {
  if (path.records.empty()) throw InvalidInput("empty path");
  TwoStageResult best;
  best.kind = TwoStageKind::thresholded;
  best.stage1_index = path.best_aic;
  best.stage1 = path.records[path.best_aic];
  const auto support = penalized_support(prob, best.stage1);
  const VectorXd& b = best.stage1.psi_hat.beta;
  if (thres_grid.empty()) {
    std::vector<double> mags;
    for (int k : support) mags.push_back(std::abs(b[k]));
    std::sort(mags.begin(), mags.end());
    mags.erase(std::unique(mags.begin(), mags.end()), mags.end());
    if (!mags.empty()) thres_grid.push_back(0.5 * mags.front());
    for (std::size_t j = 1; j < mags.size(); ++j) thres_grid.push_back(0.5 * (mags[j - 1] + mags[j]));
  }
  std::sort(thres_grid.begin(), thres_grid.end(), std::greater<>());
  for (double t : thres_grid)
    if (!(t > 0.0)) throw InvalidInput("thresholds must be positive");
  // Discrete responses give f >= 0, so a(n) df alone bounds the BIC from
  // below; sets only grow as the threshold drops, so the scan can stop early.
  const bool f_nonneg = prob.family.kind != FamilyKind::gaussian_identity;
  bool have = false;
  std::size_t last_size = 0;
  for (double t : thres_grid) {
    std::vector<int> sel;
    for (int k : support)
      if (std::abs(b[k]) > t) sel.push_back(k);
    if (sel.empty() || sel.size() == last_size) continue;
    last_size = sel.size();
    if (have && f_nonneg) {
      const int df = prob.d() + static_cast<int>(sel.size());
      if (information_criterion(0.0, df, prob.n(), Criterion::bic) >= best.stage2_bic) break;
    }
    FitRecord rec = refit_on(prob, cfg, sel, best.stage1);
    const double bic = information_criterion(rec, prob.n(), prob.d(), Criterion::bic);
    if (!have || bic < best.stage2_bic) {
      have = true;
      best.stage2 = std::move(rec);
      best.stage2_bic = bic;
      best.selected_set = sel;
      best.lambda_thres = t;
    }
  }
  if (!have) {
    best.empty_fallback = true;
    best.selected_set.clear();
    best.stage2 = refit_on(prob, cfg, {}, best.stage1);
    best.stage2_bic = information_criterion(best.stage2, prob.n(), prob.d(), Criterion::bic);
    best.lambda_thres = thres_grid.empty() ? 0.0 : thres_grid.back();
  }
  return best;
}

double out_of_sample_nll(const Problem& fitted, const ParamState& psi_hat, const Dataset& new_data) {
  if (new_data.p() != fitted.p()) throw InvalidInput("new data has a different number of columns");
  if (new_data.column_names != fitted.data.column_names) throw InvalidInput("new data column names differ");
  if (new_data.groups.size() != fitted.data.groups.size()) throw InvalidInput("new data grouping factors differ");
  const Problem test(new_data, fitted.cov, fitted.family, fitted.penalty_mask);
  ParamState psi = psi_hat;
  psi.penalty_mask = test.penalty_mask;
  return q_la(test, psi, 0.0, VectorXd::Zero(test.q())).value.f;
}

ModeComparison compare_paths(const FitPath& approx, const FitPath& exact) {
  if (approx.lambdas.size() != exact.lambdas.size()) throw InvalidInput("paths have different grids");
  ModeComparison m;
  m.lambdas = exact.lambdas;
  std::vector<double> ll, fx, it, tm;
  int matches = 0;
  for (std::size_t j = 0; j < exact.lambdas.size(); ++j) {
    const auto& a = approx.records[j];
    const auto& e = exact.records[j];
    const double rll = std::abs(a.objective.f - e.objective.f) / std::abs(e.objective.f);
    const double bn = e.psi_hat.beta.norm();
    const double rfix = bn > 0.0 ? (a.psi_hat.beta - e.psi_hat.beta).norm() / bn : 0.0;
    const double rit = static_cast<double>(a.outer_iterations) / std::max(1, e.outer_iterations);
    const double rtm = e.seconds > 0.0 ? a.seconds / e.seconds : 1.0;
    const bool match = a.active_set == e.active_set;
    m.rel_ll.push_back(rll);
    m.rel_fix.push_back(rfix);
    m.rel_iter.push_back(rit);
    m.rel_time.push_back(rtm);
    m.active_set_match.push_back(match);
    const bool inc = a.converged && e.converged;
    m.included.push_back(inc);
    if (!inc) {
      ++m.excluded;
      continue;
    }
    ll.push_back(rll);
    fx.push_back(rfix);
    it.push_back(rit);
    tm.push_back(rtm);
    matches += match;
  }
  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  };
  auto sd = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / (v.size() - 1));
  };
  m.mean_rel_ll = mean(ll);
  m.sd_rel_ll = sd(ll);
  m.mean_rel_fix = mean(fx);
  m.sd_rel_fix = sd(fx);
  m.mean_rel_iter = mean(it);
  m.mean_rel_time = mean(tm);
  m.active_set_rate = ll.empty() ? 0.0 : static_cast<double>(matches) / ll.size();
  return m;
}

ModeComparison compare_exact_approx(const Problem& prob, const OptimizerConfig& cfg, const PathConfig& pc) {
  OptimizerConfig ca = cfg, ce = cfg;
  ca.mode = FitMode::approximate;
  ce.mode = FitMode::exact;
  const ParamState start = init_start(prob, ce);
  const FitPath e = compute_path(prob, ce, pc, start);
  PathConfig same = pc;
  same.lambdas = e.lambdas;
  const FitPath a = compute_path(prob, ca, same, start);
  return compare_paths(a, e);
}

}  // namespace glmmlasso
