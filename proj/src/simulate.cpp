#include "glmmlasso/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include "glmmlasso/error.hpp"
#include "glmmlasso/glm_lasso.hpp"
#include "kernels.hpp"

namespace glmmlasso {

// ---------------------------------------------------------------- designs

int SimDesign::s0() const { return static_cast<int>(true_support().size()); }

std::vector<int> SimDesign::true_support() const {
  std::vector<int> s;
  for (Eigen::Index k = 0; k < beta0.size(); ++k)
    if (beta0[k] != 0.0) s.push_back(static_cast<int>(k));
  return s;
}

CovarianceTemplate SimDesign::cov_template() const {
  CovarianceTemplate c;
  CovStructure st = CovStructure::diagonal;
  if (re_columns.size() == 1) st = CovStructure::scalar_identity;
  if (corr_re) st = CovStructure::unstructured_lower;
  c.blocks.push_back({0, re_columns, st});
  return c;
}

void SimDesign::validate() const {
  family.validate();
  if (N < 1 || n_C < 1) throw InvalidInput("design needs N >= 1 and n_C >= 1");
  if (p < 1 || beta0.size() != p) throw InvalidInput("design beta0 must have length p");
  if (static_cast<int>(re_columns.size()) != theta2_true.size()) throw InvalidInput("one variance per random effect");
  if (re_columns.empty() || re_columns.size() > 2) throw InvalidInput("designs use one or two random effects");
  for (int c : re_columns)
    if (c != kInterceptColumn && (c < 1 || c >= p)) throw InvalidInput("random-effect column out of range");
  if ((theta2_true.array() < 0.0).any()) throw InvalidInput("variances must be nonnegative");
  if (corr_re && (re_columns.size() != 2 || std::abs(*corr_re) >= 1.0)) throw InvalidInput("bad random-effect correlation");
  if (!(std::abs(rho_x) < 1.0)) throw InvalidInput("rho_x must lie in (-1, 1)");
}

std::vector<std::string> SimDesign::names() {
  return {"logistic_L1", "logistic_L2", "logistic_H1", "logistic_H2", "logistic_H1_corr", "poisson_L1",
          "poisson_L2",  "poisson_H1",  "poisson_H2",  "poisson_H3",  "growing_p"};
}

namespace {

VectorXd leading(int p, std::initializer_list<double> head) {
  VectorXd b = VectorXd::Zero(p);
  int k = 0;
  for (double v : head) {
    if (k >= p) break;
    b[k++] = v;
  }
  return b;
}

}  // namespace

SimDesign SimDesign::named(const std::string& name, StudyScale scale) {
  const bool full = scale == StudyScale::full;
  SimDesign d;
  d.name = name;
  d.replicates = full ? 100 : 20;
  const std::string fam = name.substr(0, name.find('_'));
  const std::string tag = name.substr(name.find('_') + 1);
  if (name == "growing_p") {
    d.family = FamilySpec::bernoulli();
    d.N = 40;
    d.n_C = 10;
    d.p = 65;
    d.beta0 = leading(d.p, {0.0, 1.0, -1.0, 1.0, -1.0});
    d.re_columns = {kInterceptColumn};
    d.theta2_true = VectorXd::Constant(1, 1.0);
    d.replicates = full ? 50 : 10;
    return d;
  }
  if (fam == "logistic") {
    d.family = FamilySpec::bernoulli();
    d.re_columns = {kInterceptColumn, 1};
    d.theta2_true = VectorXd::Constant(2, 1.0);
    d.N = 40;
    d.n_C = 10;
    if (tag == "L1") d.p = 10;
    else if (tag == "L2") d.p = 50;
    else if (tag == "H1" || tag == "H1_corr") d.p = full ? 500 : 150;
    else if (tag == "H2") {
      d.N = 50;
      d.p = full ? 1500 : 300;
    } else
      throw InvalidInput("unknown design '" + name + "'");
    if (tag == "H1_corr") d.corr_re = 0.5;
    d.beta0 = leading(d.p, {0.1, 1.0, -1.0, 1.0, -1.0});
    return d;
  }
  if (fam == "poisson") {
    d.family = FamilySpec::poisson();
    d.re_columns = {kInterceptColumn};
    d.theta2_true = VectorXd::Constant(1, 1.0);
    d.N = 40;
    d.n_C = 10;
    double b1 = 1.0 / 20.0;
    if (tag == "L1" || tag == "L2") {
      d.N = 20;
      d.p = tag == "L1" ? 10 : 50;
    } else if (tag == "H1") d.p = full ? 500 : 150;
    else if (tag == "H2") d.p = full ? 1000 : 300;
    else if (tag == "H3") {
      d.N = 30;
      d.p = full ? 500 : 150;
      d.theta2_true[0] = 0.25;
      b1 = 2.0;
    } else
      throw InvalidInput("unknown design '" + name + "'");
    d.beta0 = leading(d.p, {b1, 0.5, -0.5, 0.5, -0.5});
    return d;
  }
  throw InvalidInput("unknown design '" + name + "'");
}

// ---------------------------------------------------------------- generators

MatrixXd gen_design_matrix(int N, int n_C, int p, double rho_x, Engine& eng) {
  if (p < 1) throw InvalidInput("p must be >= 1");
  const int n = N * n_C;
  MatrixXd X(n, p);
  boost::random::normal_distribution<double> nd;
  const double s = std::sqrt(1.0 - rho_x * rho_x);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    double prev = 0.0;
    for (int k = 1; k < p; ++k) {
      const double e = nd(eng);
      prev = k == 1 ? e : rho_x * prev + s * e;
      X(i, k) = prev;
    }
  }
  return X;
}

Generated gen_response(const SimDesign& design, const MatrixXd& X, Engine& eng) {
  design.validate();
  const int n = design.n(), K = static_cast<int>(design.re_columns.size());
  if (X.rows() != n || X.cols() != design.p) throw InvalidInput("X does not match the design");
  boost::random::normal_distribution<double> nd;
  MatrixXd S = MatrixXd::Zero(K, K);
  for (int j = 0; j < K; ++j) S(j, j) = design.theta2_true[j];
  if (design.corr_re) S(0, 1) = S(1, 0) = *design.corr_re * std::sqrt(S(0, 0) * S(1, 1));
  // factor that tolerates zero variances
  Eigen::LDLT<MatrixXd> ldlt(S);
  MatrixXd L = MatrixXd::Zero(K, K);
  {
    const MatrixXd Lm = ldlt.matrixL();
    const VectorXd dvec = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    L = ldlt.transpositionsP().transpose() * (Lm * dvec.asDiagonal());
  }
  Generated g;
  g.b.resize(design.N * K);
  for (int r = 0; r < design.N; ++r) {
    VectorXd z(K);
    for (int j = 0; j < K; ++j) z[j] = nd(eng);
    g.b.segment(r * K, K) = L * z;
  }
  Dataset& d = g.data;
  d.X = X;
  d.y.resize(n);
  d.column_names.clear();
  for (int k = 0; k < design.p; ++k) d.column_names.push_back(k == 0 ? "(Intercept)" : "x" + std::to_string(k));
  std::vector<int> grp(n);
  for (int i = 0; i < n; ++i) grp[i] = i / design.n_C;
  d.groups = {GroupingFactor::from_ints("group", grp)};
  for (int i = 0; i < n; ++i) {
    double eta = X.row(i).dot(design.beta0);
    const int r = grp[i];
    for (int j = 0; j < K; ++j) {
      const int c = design.re_columns[j];
      eta += g.b[r * K + j] * (c == kInterceptColumn ? 1.0 : X(i, c));
    }
    const double mu = design.family.link_inv(eta);
    switch (design.family.kind) {
      case FamilyKind::bernoulli_logit: {
        boost::random::bernoulli_distribution<double> bd(mu);
        d.y[i] = bd(eng) ? 1.0 : 0.0;
        break;
      }
      case FamilyKind::poisson_log: {
        boost::random::poisson_distribution<int, double> pd(mu);
        d.y[i] = pd(eng);
        break;
      }
      case FamilyKind::gaussian_identity:
        d.y[i] = mu + std::sqrt(design.family.phi_fixed) * nd(eng);
        break;
    }
  }
  return g;
}

Generated gen_replicate(const SimDesign& design, std::uint64_t seed, int replicate) {
  Engine eng = make_engine(seed, 2 * static_cast<std::uint64_t>(replicate));
  const MatrixXd X = gen_design_matrix(design.N, design.n_C, design.p, design.rho_x, eng);
  return gen_response(design, X, eng);
}

// ---------------------------------------------------------------- quadrature

void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw InvalidInput("need at least one node");
  MatrixXd J = MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(J);
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int j = 0; j < n; ++j) {
    double x = es.eigenvalues()[j];
    // Newton polish on H_n with the normalized recurrence
    double dp = 0.0;
    for (int it = 0; it < 10; ++it) {
      double p0 = std::pow(std::numbers::pi, -0.25), p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = x * std::sqrt(2.0 / k) * p1 - std::sqrt((k - 1.0) / k) * p2;
      }
      dp = std::sqrt(2.0 * n) * p1;
      const double step = p0 / dp;
      x -= step;
      if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(x))) break;
    }
    nodes[j] = x;
    weights[j] = 2.0 / (dp * dp);
  }
}

double gh_loglik(const Problem& prob, const ParamState& psi, int n_nodes) {
  if (prob.cov.blocks.size() != 1) throw UnsupportedModel("quadrature needs a single random-effects block");
  const int K = prob.cov.blocks[0].k();
  if (K > 2) throw UnsupportedModel("quadrature supports at most two random effects per level");
  const auto zl = prob.re.zlambda(std::span<const double>(psi.theta.data(), psi.theta.size()));
  const VectorXd xb = prob.data.X * psi.beta;
  const auto mode = solve_mode(prob, zl, xb, psi.phi, VectorXd::Zero(prob.q()));
  std::vector<double> x, w;
  gauss_hermite(n_nodes, x, w);
  const auto& grp = prob.data.groups[prob.cov.blocks[0].factor];
  const int R = grp.n_levels();
  std::vector<std::vector<int>> rows(R);
  for (int i = 0; i < prob.n(); ++i) rows[grp.level[i]].push_back(i);
  const MatrixXd ZL = MatrixXd(prob.re.z()) * MatrixXd(prob.re.lambda(std::span<const double>(psi.theta.data(), psi.theta.size())));
  const auto kind = prob.family.kind;
  const auto& y = prob.data.y;
  double total = 0.0;
  for (int r = 0; r < R; ++r) {
    const int off = r * K;
    const VectorXd uh = mode.u_tilde.segment(off, K);
    MatrixXd H = MatrixXd::Identity(K, K);
    for (int i : rows[r]) {
      const VectorXd m = ZL.block(i, off, 1, K).transpose();
      H += mode.W[i] * m * m.transpose();
    }
    const MatrixXd Linv = Eigen::LLT<MatrixXd>(H).matrixL().solve(MatrixXd::Identity(K, K));
    const MatrixXd A = Linv.transpose() * std::sqrt(2.0);  // u = uh + A z
    const double logdetA = std::log(std::abs(A.determinant()));
    auto g = [&](const VectorXd& u) {
      double s = -0.5 * u.squaredNorm() - 0.5 * K * std::log(2.0 * std::numbers::pi);
      for (int i : rows[r]) {
        const double eta = xb[i] + ZL.block(i, off, 1, K).row(0).dot(u);
        s -= 0.5 * detail::neg2_term(kind, y[i], detail::mean_of(kind, eta), psi.phi);
      }
      return s;
    };
    std::vector<double> terms;
    if (K == 1) {
      for (int a = 0; a < n_nodes; ++a) {
        VectorXd z(1);
        z << x[a];
        terms.push_back(std::log(w[a]) + x[a] * x[a] + g(uh + A * z));
      }
    } else {
      for (int a = 0; a < n_nodes; ++a)
        for (int c = 0; c < n_nodes; ++c) {
          VectorXd z(2);
          z << x[a], x[c];
          terms.push_back(std::log(w[a]) + std::log(w[c]) + z.squaredNorm() + g(uh + A * z));
        }
    }
    const double mx = *std::max_element(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += std::exp(t - mx);
    total += mx + std::log(s) + logdetA;
  }
  return total;
}

// ---------------------------------------------------------------- studies

void FitDiagnostics::add(const FitRecord& r) {
  ++fits;
  if (r.converged) {
    ++converged;
    if (!r.kkt.ok) ++kkt_failures;
  }
  monotonicity_violations += r.monotonicity_violations;
  for (std::size_t i = 1; i < r.trace.size(); ++i)
    max_trace_increase = std::max(max_trace_increase, r.trace[i] - r.trace[i - 1]);
}

void FitDiagnostics::merge(const FitDiagnostics& o) {
  fits += o.fits;
  converged += o.converged;
  kkt_failures += o.kkt_failures;
  monotonicity_violations += o.monotonicity_violations;
  max_trace_increase = std::max(max_trace_increase, o.max_trace_increase);
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double rescaled_mad(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  const double med = median(v);
  std::vector<double> dev;
  for (double x : v) dev.push_back(std::abs(x - med));
  return 1.4826 * median(dev);
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fmt2(double v) {
  if (std::isnan(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::vector<double> cov_params(const Problem& prob, const VectorXd& theta, bool with_corr) {
  const MatrixXd S = prob.cov.block_covariance(0, std::span<const double>(theta.data(), theta.size()));
  std::vector<double> out;
  for (Eigen::Index j = 0; j < S.rows(); ++j) out.push_back(S(j, j));
  if (with_corr) {
    const double den = std::sqrt(S(0, 0) * S(1, 1));
    out.push_back(den > 0.0 ? S(0, 1) / den : 0.0);
  }
  return out;
}

ReplicateRow make_row(int rep, const std::string& method, const SimDesign& design, const VectorXd& beta,
                      std::vector<double> theta2, double lambda) {
  ReplicateRow row;
  row.replicate = rep;
  row.method = method;
  const auto truth = design.true_support();
  for (Eigen::Index k = 0; k < beta.size(); ++k) {
    if (beta[k] == 0.0) continue;
    ++row.size_S;
    if (design.beta0[k] != 0.0) ++row.tp;
  }
  row.theta2 = std::move(theta2);
  for (int k = 0; k < std::min<int>(5, static_cast<int>(beta.size())); ++k) row.beta.push_back(beta[k]);
  row.se = (beta - design.beta0).squaredNorm();
  row.lambda = lambda;
  return row;
}

std::vector<std::string> summary_columns(const SimDesign& d) {
  std::vector<std::string> c{"size_S", "TP"};
  for (std::size_t j = 0; j < d.re_columns.size(); ++j) c.push_back("theta" + std::to_string(j + 1) + "^2");
  if (d.corr_re) c.push_back("rho");
  for (int k = 0; k < std::min(5, d.p); ++k) c.push_back("beta" + std::to_string(k + 1));
  c.push_back("SE");
  return c;
}

std::vector<double> row_values(const ReplicateRow& r, const SimDesign& d) {
  std::vector<double> v{static_cast<double>(r.size_S), static_cast<double>(r.tp)};
  const std::size_t nth = d.re_columns.size() + (d.corr_re ? 1 : 0);
  for (std::size_t j = 0; j < nth; ++j) v.push_back(j < r.theta2.size() ? r.theta2[j] : std::nan(""));
  for (int k = 0; k < std::min(5, d.p); ++k) v.push_back(k < static_cast<int>(r.beta.size()) ? r.beta[k] : 0.0);
  v.push_back(r.se);
  return v;
}

}  // namespace

StudyResult run_study(const SimDesign& design, const StudyConfig& cfg) {
  design.validate();
  for (const auto& m : cfg.methods)
    if (m != "glmmlasso" && m != "hybrid" && m != "thresholded" && m != "glm_lasso" && m != "oracle")
      throw InvalidInput("unknown method '" + m + "'");
  const int R = cfg.replicates;
  const int M = static_cast<int>(cfg.methods.size());
  std::vector<ReplicateRow> rows(static_cast<std::size_t>(R) * M);
  std::vector<FitDiagnostics> diag(R);
  const bool with_corr = design.corr_re.has_value();
  auto want = [&](const char* m) { return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end(); };

  parallel_for(R, cfg.workers, [&](int rep) {
    auto put = [&](const std::string& method, ReplicateRow row) {
      const int j = static_cast<int>(std::find(cfg.methods.begin(), cfg.methods.end(), method) - cfg.methods.begin());
      rows[static_cast<std::size_t>(rep) * M + j] = std::move(row);
    };
    auto fail = [&](const std::string& method, const std::string& what) {
      ReplicateRow row;
      row.replicate = rep;
      row.method = method;
      row.ok = false;
      row.error = what;
      put(method, row);
    };
    const auto gen = gen_replicate(design, cfg.seed, rep);
    std::optional<Problem> prob;
    try {
      prob.emplace(gen.data, design.cov_template(), design.family);
    } catch (const std::exception& e) {
      for (const auto& m : cfg.methods) fail(m, e.what());
      return;
    }
    const bool need_path = want("glmmlasso") || want("hybrid") || want("thresholded");
    if (need_path) {
      try {
        const FitPath path = compute_path(*prob, cfg.optimizer, cfg.path);
        diag[rep].add(path.null_fit);
        for (const auto& r : path.records) diag[rep].add(r);
        if (want("glmmlasso")) {
          const auto& r = path.records[path.best_bic];
          put("glmmlasso", make_row(rep, "glmmlasso", design, r.psi_hat.beta,
                                    cov_params(*prob, r.psi_hat.theta, with_corr), r.lambda));
        }
        if (want("hybrid")) {
          const auto h = select_hybrid(*prob, cfg.optimizer, path);
          diag[rep].add(h.stage2);
          put("hybrid", make_row(rep, "hybrid", design, h.stage2.psi_hat.beta,
                                 cov_params(*prob, h.stage2.psi_hat.theta, with_corr), h.stage1.lambda));
        }
        if (want("thresholded")) {
          const auto t = select_thresholded(*prob, cfg.optimizer, path);
          diag[rep].add(t.stage2);
          put("thresholded", make_row(rep, "thresholded", design, t.stage2.psi_hat.beta,
                                      cov_params(*prob, t.stage2.psi_hat.theta, with_corr), t.stage1.lambda));
        }
      } catch (const std::exception& e) {
        for (const char* m : {"glmmlasso", "hybrid", "thresholded"})
          if (want(m)) fail(m, e.what());
      }
    }
    if (want("glm_lasso")) {
      try {
        const auto& d = prob->data;
        const double phi = design.family.phi_fixed;
        const double lmax = glm_lambda_max(d.X, d.y, design.family, phi, prob->penalty_mask);
        const auto grid = log_lambda_grid(std::max(lmax, 1e-8), cfg.path.n_lambda, cfg.path.min_ratio);
        const auto gp = glm_lasso_path(d.X, d.y, design.family, phi, prob->penalty_mask, grid);
        int best = 0;
        double best_bic = 0.0;
        for (std::size_t j = 0; j < gp.fits.size(); ++j) {
          int nz = 0;
          for (Eigen::Index k = 0; k < gp.fits[j].beta.size(); ++k) nz += gp.fits[j].beta[k] != 0.0;
          const double bic = information_criterion(gp.fits[j].deviance, nz, prob->n(), Criterion::bic);
          if (j == 0 || bic < best_bic) {
            best_bic = bic;
            best = static_cast<int>(j);
          }
        }
        put("glm_lasso", make_row(rep, "glm_lasso", design, gp.fits[best].beta, {}, grid[best]));
      } catch (const std::exception& e) {
        fail("glm_lasso", e.what());
      }
    }
    if (want("oracle")) {
      try {
        ParamState start = prob->initial_state();
        FitRecord from;
        from.psi_hat = start;
        const auto rec = refit_on(*prob, cfg.optimizer, design.true_support(), from);
        diag[rep].add(rec);
        put("oracle", make_row(rep, "oracle", design, rec.psi_hat.beta,
                               cov_params(*prob, rec.psi_hat.theta, with_corr), 0.0));
      } catch (const std::exception& e) {
        fail("oracle", e.what());
      }
    }
  });

  StudyResult res;
  res.design = design;
  res.rows = std::move(rows);
  for (const auto& d : diag) res.diagnostics.merge(d);
  const auto cols = summary_columns(design);
  for (const auto& m : cfg.methods) {
    MethodSummary s;
    s.method = m;
    s.columns = cols;
    std::vector<std::vector<double>> vals(cols.size());
    for (const auto& r : res.rows) {
      if (r.method != m) continue;
      if (!r.ok) {
        ++s.n_failed;
        continue;
      }
      ++s.n_ok;
      const auto v = row_values(r, design);
      for (std::size_t c = 0; c < cols.size(); ++c)
        if (!std::isnan(v[c])) vals[c].push_back(v[c]);
    }
    for (const auto& v : vals) {
      s.median.push_back(median(v));
      s.mad.push_back(rescaled_mad(v));
    }
    res.summary.push_back(std::move(s));
  }
  return res;
}

std::string StudyResult::replicates_csv() const {
  std::ostringstream os;
  const auto cols = summary_columns(design);
  os << "design,replicate,method,ok,lambda";
  for (const auto& c : cols) os << ',' << c;
  os << '\n';
  for (const auto& r : rows) {
    os << design.name << ',' << r.replicate << ',' << r.method << ',' << (r.ok ? 1 : 0) << ',' << fmt(r.lambda);
    if (r.ok)
      for (double v : row_values(r, design)) os << ',' << fmt(v);
    else
      for (std::size_t c = 0; c < cols.size(); ++c) os << ",NA";
    os << '\n';
  }
  return os.str();
}

std::string StudyResult::summary_csv() const {
  std::ostringstream os;
  os << "design,method,statistic,n_ok,n_failed";
  if (!summary.empty())
    for (const auto& c : summary.front().columns) os << ',' << c;
  os << '\n';
  for (const auto& s : summary) {
    for (int which = 0; which < 2; ++which) {
      os << design.name << ',' << s.method << ',' << (which == 0 ? "median" : "mad") << ',' << s.n_ok << ','
         << s.n_failed;
      for (double v : which == 0 ? s.median : s.mad) os << ',' << fmt(v);
      os << '\n';
    }
  }
  return os.str();
}

std::string StudyResult::table_text() const {
  std::ostringstream os;
  os << "Design " << design.name << ": N=" << design.N << ", n_C=" << design.n_C << ", p=" << design.p
     << " (medians, rescaled MADs in parentheses)\n";
  if (summary.empty()) return os.str();
  const auto& cols = summary.front().columns;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-12s", "method");
  os << buf;
  for (const auto& c : cols) {
    std::snprintf(buf, sizeof buf, "%10s", c.c_str());
    os << buf;
  }
  os << "   ok/fail\n";
  for (const auto& s : summary) {
    std::snprintf(buf, sizeof buf, "%-12s", s.method.c_str());
    os << buf;
    for (double v : s.median) {
      std::snprintf(buf, sizeof buf, "%10s", fmt2(v).c_str());
      os << buf;
    }
    os << "   " << s.n_ok << '/' << s.n_failed << "\n";
    os << "            ";
    for (double v : s.mad) {
      std::snprintf(buf, sizeof buf, "%10s", ("(" + fmt2(v) + ")").c_str());
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

ComparisonStudy run_mode_comparison(const SimDesign& design, const StudyConfig& cfg) {
  design.validate();
  const int R = cfg.replicates;
  ComparisonStudy out;
  out.design = design;
  out.per_replicate.resize(R);
  std::vector<FitDiagnostics> diag(R);
  std::vector<char> ok(R, 1);
  parallel_for(R, cfg.workers, [&](int rep) {
    try {
      const auto gen = gen_replicate(design, cfg.seed, rep);
      const Problem prob(gen.data, design.cov_template(), design.family);
      OptimizerConfig ca = cfg.optimizer, ce = cfg.optimizer;
      ca.mode = FitMode::approximate;
      ce.mode = FitMode::exact;
      const ParamState start = init_start(prob, ce);
      const FitPath e = compute_path(prob, ce, cfg.path, start);
      PathConfig same = cfg.path;
      same.lambdas = e.lambdas;
      const FitPath a = compute_path(prob, ca, same, start);
      for (const auto* p : {&e, &a})
        for (const auto& r : p->records) diag[rep].add(r);
      out.per_replicate[rep] = compare_paths(a, e);
    } catch (const std::exception&) {
      ok[rep] = 0;
    }
  });
  std::vector<double> ll, fx, it, tm;
  long match = 0, total = 0;
  for (int r = 0; r < R; ++r) {
    out.diagnostics.merge(diag[r]);
    if (!ok[r]) {
      ++out.excluded;
      continue;
    }
    const auto& m = out.per_replicate[r];
    out.excluded += m.excluded;
    for (std::size_t j = 0; j < m.lambdas.size(); ++j) {
      if (!m.included[j]) continue;
      ll.push_back(m.rel_ll[j]);
      fx.push_back(m.rel_fix[j]);
      it.push_back(m.rel_iter[j]);
      tm.push_back(m.rel_time[j]);
      match += m.active_set_match[j];
      ++total;
    }
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? std::nan("") : s / v.size();
  };
  auto sd = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / (v.size() - 1));
  };
  out.mean_rel_ll = mean(ll);
  out.sd_rel_ll = sd(ll);
  out.mean_rel_fix = mean(fx);
  out.sd_rel_fix = sd(fx);
  out.mean_rel_iter = mean(it);
  out.mean_rel_time = mean(tm);
  out.active_set_rate = total ? static_cast<double>(match) / total : std::nan("");
  return out;
}

std::string ComparisonStudy::table_text(bool with_time) const {
  std::ostringstream os;
  os << "Exact vs approximate, design " << design.name << " (means, sd in parentheses)\n";
  os << "rel.iter " << fmt2(mean_rel_iter) << "  rel.ll " << fmt2(mean_rel_ll) << " (" << fmt2(sd_rel_ll)
     << ")  rel.fix " << fmt2(mean_rel_fix) << " (" << fmt2(sd_rel_fix) << ")  activeSet " << fmt2(active_set_rate)
     << "  excluded " << excluded;
  if (with_time) os << "  rel.time " << fmt2(mean_rel_time);
  os << '\n';
  return os.str();
}

std::string ComparisonStudy::csv(bool with_time) const {
  std::ostringstream os;
  os << "replicate,lambda,rel_iter,rel_ll,rel_fix,active_set_match,included";
  if (with_time) os << ",rel_time";
  os << '\n';
  for (std::size_t r = 0; r < per_replicate.size(); ++r) {
    const auto& m = per_replicate[r];
    for (std::size_t j = 0; j < m.lambdas.size(); ++j) {
      os << r << ',' << fmt(m.lambdas[j]) << ',' << fmt(m.rel_iter[j]) << ',' << fmt(m.rel_ll[j]) << ','
         << fmt(m.rel_fix[j]) << ',' << int(m.active_set_match[j]) << ',' << int(m.included[j]);
      if (with_time) os << ',' << fmt(m.rel_time[j]);
      os << '\n';
    }
  }
  os << "mean,," << fmt(mean_rel_iter) << ',' << fmt(mean_rel_ll) << ',' << fmt(mean_rel_fix) << ','
     << fmt(active_set_rate) << ',';
  if (with_time) os << ',' << fmt(mean_rel_time);
  os << '\n';
  return os.str();
}

GrowingPStudy run_growing_p(const std::vector<int>& ps, const StudyConfig& cfg) {
  if (ps.empty()) throw InvalidInput("growing-p study needs at least one p");
  const int pmax = *std::max_element(ps.begin(), ps.end());
  SimDesign base = SimDesign::named("growing_p");
  base.p = pmax;
  base.beta0 = VectorXd::Zero(pmax);
  base.beta0.head(std::min(5, pmax)) = VectorXd(VectorXd{{0.0, 1.0, -1.0, 1.0, -1.0}}).head(std::min(5, pmax));
  const int R = cfg.replicates;
  const std::vector<std::string> methods{"full_ml", "glmmlasso", "hybrid"};
  const int P = static_cast<int>(ps.size()), M = static_cast<int>(methods.size());
  std::vector<double> nll(static_cast<std::size_t>(R) * P * M, std::nan(""));
  std::vector<FitDiagnostics> diag(R);
  parallel_for(R, cfg.workers, [&](int rep) {
    Engine eng = make_engine(cfg.seed, 2 * static_cast<std::uint64_t>(rep));
    const MatrixXd Xtr = gen_design_matrix(base.N, base.n_C, pmax, base.rho_x, eng);
    const auto train = gen_response(base, Xtr, eng);
    // fresh groups and covariates for scoring
    Engine eng2 = make_engine(cfg.seed, 2 * static_cast<std::uint64_t>(rep) + 1);
    const MatrixXd Xte = gen_design_matrix(base.N, base.n_C, pmax, base.rho_x, eng2);
    const auto test = gen_response(base, Xte, eng2);
    for (int ip = 0; ip < P; ++ip) {
      std::vector<int> cols(ps[ip]);
      for (int k = 0; k < ps[ip]; ++k) cols[k] = k;
      const Dataset dtr = train.data.select_columns(cols), dte = test.data.select_columns(cols);
      auto slot = [&](int m) -> double& { return nll[(static_cast<std::size_t>(rep) * P + ip) * M + m]; };
      try {
        const Problem prob(dtr, base.cov_template(), base.family);
        const ParamState start = init_start(prob, cfg.optimizer);
        const auto ml = fit(prob, 0.0, cfg.optimizer, start);
        diag[rep].add(ml);
        slot(0) = out_of_sample_nll(prob, ml.psi_hat, dte);
        const FitPath path = compute_path(prob, cfg.optimizer, cfg.path, start);
        for (const auto& r : path.records) diag[rep].add(r);
        slot(1) = out_of_sample_nll(prob, path.records[path.best_bic].psi_hat, dte);
        const auto h = select_hybrid(prob, cfg.optimizer, path);
        diag[rep].add(h.stage2);
        slot(2) = out_of_sample_nll(prob, h.stage2.psi_hat, dte);
      } catch (const std::exception&) {
        // failed fits stay NaN and are excluded
      }
    }
  });
  GrowingPStudy out;
  out.ps = ps;
  for (const auto& d : diag) out.diagnostics.merge(d);
  for (int ip = 0; ip < P; ++ip)
    for (int m = 0; m < M; ++m) {
      std::vector<double> v;
      for (int rep = 0; rep < R; ++rep) {
        const double x = nll[(static_cast<std::size_t>(rep) * P + ip) * M + m];
        if (!std::isnan(x)) v.push_back(x);
      }
      GrowingPRow row;
      row.p = ps[ip];
      row.method = methods[m];
      row.median_nll = median(v);
      row.mad_nll = rescaled_mad(v);
      row.n_ok = static_cast<int>(v.size());
      out.rows.push_back(row);
    }
  return out;
}

double GrowingPStudy::median_of(int p, const std::string& method) const {
  for (const auto& r : rows)
    if (r.p == p && r.method == method) return r.median_nll;
  return std::nan("");
}

std::string GrowingPStudy::csv() const {
  std::ostringstream os;
  os << "p,method,median_nll,mad_nll,n_ok\n";
  for (const auto& r : rows) os << r.p << ',' << r.method << ',' << fmt(r.median_nll) << ',' << fmt(r.mad_nll) << ',' << r.n_ok << '\n';
  return os.str();
}

std::string GrowingPStudy::table_text() const {
  std::ostringstream os;
  os << "Out-of-sample -2 log L (medians, rescaled MADs in parentheses)\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "p=%-4d %-10s %10s (%s)  n=%d\n", r.p, r.method.c_str(), fmt2(r.median_nll).c_str(),
                  fmt2(r.mad_nll).c_str(), r.n_ok);
    os << buf;
  }
  return os.str();
}

}  // namespace glmmlasso
