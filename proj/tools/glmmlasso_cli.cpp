// Command-line front end: fit, path and two-stage runs, simulation studies,
// exact-vs-approximate comparisons and re-scoring of stored results.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "glmmlasso/error.hpp"
#include "glmmlasso/io.hpp"
#include "glmmlasso/results.hpp"
#include "glmmlasso/simulate.hpp"

namespace fs = std::filesystem;
using namespace glmmlasso;

namespace {

enum Exit { kOk = 0, kInput = 1, kNoConvergence = 2, kInternal = 3 };

struct ModelArgs {
  std::string data;
  std::string spec;
  std::string spec_text;
  std::string family;
  std::string format = "csv";
  bool no_standardize = false;
};

struct RunArgs {
  std::string mode = "exact";
  int n_lambda = 21;
  double min_ratio = 0.01;
  std::string out = "glmmlasso_out";
  int workers = 0;
  std::uint64_t seed = 1;
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream o(p, std::ios::binary);
  if (!o) throw InvalidInput("cannot write '" + p.string() + "'");
  o << text;
}

fs::path out_dir(const std::string& d) {
  fs::path p(d);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw InvalidInput("cannot create output directory '" + d + "': " + ec.message());
  return p;
}

LoadedModel load_model(const ModelArgs& a) {
  if (a.data.empty()) throw InvalidInput("--data is required");
  CsvTable table = read_csv_file(a.data);
  ModelSpec spec;
  if (a.format == "epilepsy") {
    table = epilepsy_table(table);
    spec = a.spec.empty() && a.spec_text.empty() ? epilepsy_spec()
                                                 : (a.spec.empty() ? parse_model_spec(a.spec_text)
                                                                   : read_model_spec_file(a.spec));
  } else if (a.format == "csv") {
    if (a.spec.empty() && a.spec_text.empty()) throw InvalidInput("--spec or --model is required");
    spec = a.spec.empty() ? parse_model_spec(a.spec_text) : read_model_spec_file(a.spec);
  } else {
    throw InvalidInput("unknown --format '" + a.format + "' (csv, epilepsy)");
  }
  if (!a.family.empty()) spec.family = a.family;
  if (a.no_standardize) spec.standardize = false;
  return build_model(table, spec);
}

OptimizerConfig optimizer_config(const RunArgs& r) {
  OptimizerConfig c;
  c.mode = fit_mode_from_name(r.mode);
  return c;
}

PathConfig path_config(const RunArgs& r) {
  PathConfig p;
  p.n_lambda = r.n_lambda;
  p.min_ratio = r.min_ratio;
  if (p.n_lambda < 1) throw InvalidInput("--n-lambda must be positive");
  if (!(p.min_ratio > 0.0 && p.min_ratio < 1.0)) throw InvalidInput("--min-ratio must be in (0, 1)");
  return p;
}

int workers_of(const RunArgs& r) {
  if (r.workers > 0) return r.workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

int cmd_fit(const ModelArgs& ma, const RunArgs& ra, const std::optional<double>& lambda, bool path,
            const std::string& two_stage) {
  const LoadedModel m = load_model(ma);
  const Problem prob(m.data, m.cov, m.family, m.penalty_mask);
  const OptimizerConfig cfg = optimizer_config(ra);
  const fs::path dir = out_dir(ra.out);
  if (!two_stage.empty() || path) {
    const FitPath fp = compute_path(prob, cfg, path_config(ra));
    bool all = true;
    for (const auto& r : fp.records) all = all && r.converged;
    if (!two_stage.empty()) {
      TwoStageResult ts;
      if (two_stage == "hybrid") ts = select_hybrid(prob, cfg, fp);
      else if (two_stage == "thresholded") ts = select_thresholded(prob, cfg, fp);
      else throw InvalidInput("--two-stage expects hybrid or thresholded");
      write_file(dir / "fit.json", two_stage_json(m, fp, ts));
      std::ostringstream txt;
      txt << two_stage << " two-stage fit; stage 1 at lambda " << fp.lambdas[ts.stage1_index] << ", selected "
          << ts.selected_set.size() << " penalized columns";
      if (ts.kind == TwoStageKind::thresholded) txt << ", threshold " << ts.lambda_thres;
      txt << "\n\nstage 1\n" << fit_table(m, ts.stage1) << "\nstage 2\n" << fit_table(m, ts.stage2);
      write_file(dir / "fit.txt", txt.str());
      std::cout << txt.str();
      all = all && ts.stage2.converged;
    } else {
      write_file(dir / "fit.json", path_json(m, fp));
      std::ostringstream txt;
      txt << "lambda path: " << fp.lambdas.size() << " values from " << fp.lambda_max << "\n";
      char buf[160];
      for (std::size_t j = 0; j < fp.records.size(); ++j) {
        const auto& r = fp.records[j];
        std::snprintf(buf, sizeof buf, "%3zu  lambda %10.5g  nnz %4zu  f %12.6f  AIC %11.4f  BIC %11.4f  %s%s%s\n", j,
                      fp.lambdas[j], r.active_set.size(), r.objective.f, fp.aic[j], fp.bic[j],
                      r.converged ? "" : "not converged ", static_cast<int>(j) == fp.best_bic ? "<BIC " : "",
                      static_cast<int>(j) == fp.best_aic ? "<AIC" : "");
        txt << buf;
      }
      txt << "\nBIC choice\n" << fit_table(m, fp.records[fp.best_bic]);
      write_file(dir / "fit.txt", txt.str());
      std::cout << txt.str();
    }
    return all ? kOk : kNoConvergence;
  }
  if (!lambda) throw InvalidInput("fit needs --lambda, --path or --two-stage");
  const FitRecord rec = fit(prob, *lambda, cfg, init_start(prob, cfg));
  write_file(dir / "fit.json", fit_json(m, rec));
  const std::string txt = fit_table(m, rec);
  write_file(dir / "fit.txt", txt);
  std::cout << txt;
  return rec.converged ? kOk : kNoConvergence;
}

int cmd_rescore(const ModelArgs& ma, const std::string& fit_path, double tol) {
  const LoadedModel m = load_model(ma);
  std::ifstream in(fit_path);
  if (!in) throw InvalidInput("cannot open '" + fit_path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const auto entries = rescore_json(ss.str(), m);
  if (entries.empty()) throw InvalidInput("no fit objects in '" + fit_path + "'");
  bool ok = true;
  for (const auto& e : entries) {
    const double diff = std::abs(e.stored - e.recomputed);
    const bool good = diff <= tol * std::max(1.0, std::abs(e.stored));
    ok = ok && good;
    std::printf("%-32s stored %.12f recomputed %.12f diff %.3g %s\n", e.where.c_str(), e.stored, e.recomputed, diff,
                good ? "ok" : "MISMATCH");
  }
  return ok ? kOk : kNoConvergence;
}

// key=value list, e.g. "family=poisson; N=20; n_C=10; p=30; beta0=0.05,0.5,-0.5; theta2=1; random=intercept"
SimDesign custom_design(const std::string& text) {
  SimDesign d;
  d.name = "custom";
  std::vector<double> beta;
  std::vector<double> theta2{1.0};
  std::vector<std::string> re{"intercept"};
  std::stringstream ss(text);
  std::string item;
  auto nums = [](const std::string& v) {
    std::vector<double> out;
    std::stringstream s(v);
    std::string x;
    while (std::getline(s, x, ',')) out.push_back(std::stod(x));
    return out;
  };
  try {
    while (std::getline(ss, item, ';')) {
      const auto eq = item.find('=');
      if (item.find_first_not_of(" \t\n") == std::string::npos) continue;
      if (eq == std::string::npos) throw InvalidInput("custom design: expected key=value, got '" + item + "'");
      auto key = item.substr(0, eq), val = item.substr(eq + 1);
      key.erase(0, key.find_first_not_of(" \t\n"));
      key.erase(key.find_last_not_of(" \t\n") + 1);
      val.erase(0, val.find_first_not_of(" \t\n"));
      val.erase(val.find_last_not_of(" \t\n") + 1);
      if (key == "family") d.family = family_from_name(val);
      else if (key == "N") d.N = std::stoi(val);
      else if (key == "n_C") d.n_C = std::stoi(val);
      else if (key == "p") d.p = std::stoi(val);
      else if (key == "rho_x") d.rho_x = std::stod(val);
      else if (key == "beta0") beta = nums(val);
      else if (key == "theta2") theta2 = nums(val);
      else if (key == "corr") d.corr_re = std::stod(val);
      else if (key == "random") {
        re.clear();
        std::stringstream s(val);
        std::string x;
        while (std::getline(s, x, ',')) re.push_back(x);
      } else throw InvalidInput("custom design: unknown key '" + key + "'");
    }
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const InvalidInput*>(&e)) throw;
    throw InvalidInput(std::string("custom design: bad number (") + e.what() + ")");
  }
  if (static_cast<int>(beta.size()) > d.p) throw InvalidInput("custom design: beta0 longer than p");
  d.beta0 = VectorXd::Zero(d.p);
  for (std::size_t k = 0; k < beta.size(); ++k) d.beta0[k] = beta[k];
  d.re_columns.clear();
  for (auto& r : re) {
    r.erase(0, r.find_first_not_of(" \t"));
    r.erase(r.find_last_not_of(" \t") + 1);
    if (r == "intercept") d.re_columns.push_back(kInterceptColumn);
    else if (r.size() > 1 && r[0] == 'x') d.re_columns.push_back(std::stoi(r.substr(1)));
    else throw InvalidInput("custom design: random effects are 'intercept' or xK");
  }
  d.theta2_true = Eigen::Map<const VectorXd>(theta2.data(), static_cast<Eigen::Index>(theta2.size()));
  d.validate();
  return d;
}

SimDesign design_of(const std::string& name, const std::string& custom, bool full) {
  if (name == "custom") return custom_design(custom);
  const auto names = SimDesign::names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    std::string list;
    for (const auto& n : names) list += " " + n;
    throw InvalidInput("unknown design '" + name + "'; valid:" + list + " custom");
  }
  return SimDesign::named(name, full ? StudyScale::full : StudyScale::desk);
}

int cmd_simulate(const std::string& name, const std::string& custom, bool full, int replicates,
                 const std::vector<std::string>& methods, const std::vector<int>& ps, const RunArgs& ra) {
  StudyConfig cfg;
  cfg.seed = ra.seed;
  cfg.workers = workers_of(ra);
  cfg.optimizer = optimizer_config(ra);
  cfg.path = path_config(ra);
  const fs::path dir = out_dir(ra.out);
  if (name == "growing_p") {
    cfg.replicates = replicates > 0 ? replicates : SimDesign::named("growing_p", full ? StudyScale::full : StudyScale::desk).replicates;
    const auto st = run_growing_p(ps.empty() ? std::vector<int>{5, 25, 45, 65} : ps, cfg);
    write_file(dir / "growing_p.csv", st.csv());
    write_file(dir / "growing_p.txt", st.table_text());
    std::cout << st.table_text();
    return kOk;
  }
  const SimDesign d = design_of(name, custom, full);
  cfg.replicates = replicates > 0 ? replicates : d.replicates;
  if (!methods.empty()) cfg.methods = methods;
  const auto st = run_study(d, cfg);
  write_file(dir / (d.name + "_replicates.csv"), st.replicates_csv());
  write_file(dir / (d.name + "_summary.csv"), st.summary_csv());
  write_file(dir / (d.name + "_table.txt"), st.table_text());
  std::cout << st.table_text();
  return kOk;
}

int cmd_compare(const std::string& name, const std::string& custom, bool full, int replicates, bool self,
                double max_rel_ll, bool with_time, const ModelArgs& ma, const RunArgs& ra) {
  StudyConfig cfg;
  cfg.seed = ra.seed;
  cfg.workers = workers_of(ra);
  cfg.path = path_config(ra);
  const fs::path dir = out_dir(ra.out);
  ModeComparison m;
  std::string csv, label;
  double mean_ll = 0.0;
  if (!ma.data.empty()) {
    const LoadedModel lm = load_model(ma);
    const Problem prob(lm.data, lm.cov, lm.family, lm.penalty_mask);
    OptimizerConfig oc;
    oc.mode = FitMode::exact;
    if (self) {
      const FitPath e = compute_path(prob, oc, cfg.path);
      m = compare_paths(e, e);
    } else {
      m = compare_exact_approx(prob, oc, cfg.path);
    }
    ComparisonStudy st;
    st.per_replicate = {m};
    st.mean_rel_ll = m.mean_rel_ll;
    st.sd_rel_ll = m.sd_rel_ll;
    st.mean_rel_fix = m.mean_rel_fix;
    st.sd_rel_fix = m.sd_rel_fix;
    st.mean_rel_iter = m.mean_rel_iter;
    st.mean_rel_time = m.mean_rel_time;
    st.active_set_rate = m.active_set_rate;
    st.excluded = m.excluded;
    st.design.name = ma.data;
    csv = st.csv(with_time);
    label = st.table_text(with_time);
    mean_ll = m.mean_rel_ll;
  } else {
    if (self) throw InvalidInput("--self needs --data");
    const SimDesign d = design_of(name, custom, full);
    cfg.replicates = replicates > 0 ? replicates : 10;
    const auto st = run_mode_comparison(d, cfg);
    csv = st.csv(with_time);
    label = st.table_text(with_time);
    mean_ll = st.mean_rel_ll;
  }
  write_file(dir / "compare.csv", csv);
  write_file(dir / "compare.txt", label);
  std::cout << label;
  if (!(mean_ll <= max_rel_ll)) {
    std::cerr << "mean rel.ll " << mean_ll << " exceeds " << max_rel_ll << "\n";
    return kNoConvergence;
  }
  return kOk;
}

void add_model_opts(CLI::App* c, ModelArgs& a) {
  c->add_option("--data", a.data, "CSV data file")->check(CLI::ExistingFile);
  c->add_option("--spec", a.spec, "model spec file")->check(CLI::ExistingFile);
  c->add_option("--model", a.spec_text, "model spec given inline");
  c->add_option("--family", a.family, "override the spec's family (gaussian, bernoulli, poisson)");
  c->add_option("--format", a.format, "data layout: csv or epilepsy")->check(CLI::IsMember({"csv", "epilepsy"}));
  c->add_flag("--no-standardize", a.no_standardize, "fit on the raw column scale");
}

void add_run_opts(CLI::App* c, RunArgs& r, bool sim) {
  c->add_option("--mode", r.mode, "optimizer: exact or approx")->check(CLI::IsMember({"exact", "approx", "approximate"}));
  c->add_option("--n-lambda", r.n_lambda, "path length");
  c->add_option("--min-ratio", r.min_ratio, "smallest lambda as a fraction of lambda_max");
  c->add_option("--out", r.out, "output directory");
  if (sim) {
    c->add_option("--seed", r.seed, "base seed");
    c->add_option("--workers", r.workers, "worker threads (default: all cores)")->envname("GLMMLASSO_WORKERS");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lasso-penalized generalized linear mixed models"};
  app.set_config("--config", "", "INI/TOML file with option values; flags override it");
  app.allow_config_extras(false);
  app.require_subcommand(1);

  ModelArgs ma;
  RunArgs ra;
  std::optional<double> lambda;
  bool path = false;
  std::string two_stage;
  auto* fitc = app.add_subcommand("fit", "fit one lambda, a path, or a two-stage estimator");
  add_model_opts(fitc, ma);
  add_run_opts(fitc, ra, false);
  fitc->add_option("--lambda", lambda, "penalty level")->check(CLI::NonNegativeNumber);
  fitc->add_flag("--path", path, "fit the whole lambda path and report AIC/BIC");
  fitc->add_option("--two-stage", two_stage, "hybrid or thresholded")->check(CLI::IsMember({"hybrid", "thresholded"}));

  std::string design, custom, fit_file;
  int replicates = 0;
  bool desk = false, full = false, self = false, with_time = false;
  std::vector<std::string> methods;
  std::vector<int> ps;
  double max_rel_ll = 5e-3, tol = 1e-10;
  auto* sim = app.add_subcommand("simulate", "simulation study on a named or custom design");
  sim->add_option("design", design, "design name, growing_p or custom")->required();
  sim->add_option("--custom", custom, "custom design as key=value pairs");
  sim->add_option("--replicates", replicates, "number of replicates");
  sim->add_option("--methods", methods, "subset of glmmlasso, hybrid, thresholded, glm_lasso, oracle");
  sim->add_option("--p-values", ps, "p grid for growing_p");
  sim->add_flag("--desk", desk, "reduced-scale design (default)");
  sim->add_flag("--full", full, "full-scale design");
  add_run_opts(sim, ra, true);

  auto* cmp = app.add_subcommand("compare", "exact vs approximate optimizer on a design or a dataset");
  cmp->add_option("design", design, "design name (omit with --data)");
  cmp->add_option("--custom", custom, "custom design as key=value pairs");
  cmp->add_option("--replicates", replicates, "number of replicates");
  cmp->add_flag("--desk", desk, "reduced-scale design (default)");
  cmp->add_flag("--full", full, "full-scale design");
  cmp->add_flag("--self", self, "compare exact with itself (sanity check)");
  cmp->add_flag("--with-time", with_time, "include timing ratios (not reproducible)");
  cmp->add_option("--max-rel-ll", max_rel_ll, "exit 2 when mean rel.ll exceeds this");
  add_model_opts(cmp, ma);
  add_run_opts(cmp, ra, true);

  auto* rs = app.add_subcommand("rescore", "re-evaluate Q_LA of a stored fit.json against the data");
  add_model_opts(rs, ma);
  rs->add_option("--fit", fit_file, "fit.json to check")->required()->check(CLI::ExistingFile);
  rs->add_option("--tol", tol, "relative tolerance");

  auto* ds = app.add_subcommand("designs", "list named simulation designs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInput;
  }
  try {
    if (desk && full) throw InvalidInput("--desk and --full are exclusive");
    if (fitc->parsed()) return cmd_fit(ma, ra, lambda, path, two_stage);
    if (sim->parsed()) return cmd_simulate(design, custom, full, replicates, methods, ps, ra);
    if (cmp->parsed()) {
      if (design.empty() && ma.data.empty()) throw InvalidInput("compare needs a design name or --data");
      return cmd_compare(design, custom, full, replicates, self, max_rel_ll, with_time, ma, ra);
    }
    if (rs->parsed()) return cmd_rescore(ma, fit_file, tol);
    if (ds->parsed()) {
      for (const auto& n : SimDesign::names()) std::cout << n << "\n";
      std::cout << "custom\n";
      return kOk;
    }
  } catch (const InvalidInput& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const UnsupportedModel& e) {
    std::cerr << "unsupported model: " << e.what() << "\n";
    return kInput;
  } catch (const ConvergenceError& e) {
    std::cerr << "no convergence: " << e.what() << "\n";
    return kNoConvergence;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNoConvergence;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
