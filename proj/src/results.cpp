#include "glmmlasso/results.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "glmmlasso/error.hpp"
#include "glmmlasso/objective.hpp"

namespace glmmlasso {

using nlohmann::json;

namespace {

json vec(const VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

VectorXd to_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json fit_object(const LoadedModel& m, const FitRecord& r) {
  const Dataset& d = m.data;
  const int n = d.n(), dd = m.cov.d();
  const VectorXd beta = m.standardization.to_original(r.psi_hat.beta, d.has_intercept);
  json j;
  j["lambda"] = r.lambda;
  j["mode"] = to_string(r.mode);
  j["beta"] = vec(beta);
  j["beta_fit"] = vec(r.psi_hat.beta);
  json nz = json::array();
  for (int k : r.active_set) nz.push_back({{"index", k}, {"name", d.column_names[k]}, {"value", beta[k]}});
  j["nonzero"] = nz;
  j["theta"] = vec(r.psi_hat.theta);
  json cov = json::array();
  const std::span<const double> th(r.psi_hat.theta.data(), r.psi_hat.theta.size());
  for (int b = 0; b < static_cast<int>(m.cov.blocks.size()); ++b) {
    const MatrixXd S = m.cov.block_covariance(b, th);
    json rows = json::array();
    for (int i = 0; i < S.rows(); ++i) rows.push_back(vec(S.row(i).transpose()));
    cov.push_back({{"group", d.groups[m.cov.blocks[b].factor].name}, {"covariance", rows}});
  }
  j["random_effects"] = cov;
  j["phi"] = r.psi_hat.phi;
  j["u_tilde"] = vec(r.u_tilde);
  j["objective"] = {{"q_la", r.objective.q_la},
                    {"f", r.objective.f},
                    {"neg2_cond_loglik", r.objective.neg2_cond_loglik},
                    {"logdet", r.objective.logdet},
                    {"u_norm2", r.objective.u_norm2},
                    {"penalty", r.objective.penalty}};
  const int df = degrees_of_freedom(r, dd);
  j["df"] = df;
  j["aic"] = information_criterion(r.objective.f, df, n, Criterion::aic);
  j["bic"] = information_criterion(r.objective.f, df, n, Criterion::bic);
  j["convergence"] = {{"converged", r.converged},
                      {"outer_iterations", r.outer_iterations},
                      {"kkt_ok", r.kkt.ok},
                      {"kkt_tolerance", r.kkt.tolerance},
                      {"kkt_max_violation", r.kkt.max_violation},
                      {"trace_start", r.trace.empty() ? r.q_la_final : r.trace.front()},
                      {"trace_final", r.q_la_final},
                      {"trace_length", r.trace.size()},
                      {"flagged_coordinates", r.flagged_coordinates},
                      {"exact_fallbacks", r.exact_fallbacks},
                      {"monotonicity_violations", r.monotonicity_violations},
                      {"pirls_solves", r.pirls_solves}};
  return j;
}

json header(const LoadedModel& m) {
  json j;
  j["format"] = "glmmlasso";
  j["version"] = 1;
  j["family"] = m.family.name();
  if (m.family.dispersion_known) j["phi_fixed"] = m.family.phi_fixed;
  j["n"] = m.data.n();
  j["p"] = m.data.p();
  j["columns"] = m.data.column_names;
  std::vector<bool> pen = m.penalty_mask;
  j["penalized"] = pen;
  json groups = json::array();
  for (const auto& g : m.data.groups) groups.push_back({{"name", g.name}, {"levels", g.labels}});
  j["groups"] = groups;
  j["standardization"] = {{"active", m.standardization.active},
                          {"center", m.standardization.active ? vec(m.standardization.center) : json::array()},
                          {"scale", m.standardization.active ? vec(m.standardization.scale) : json::array()}};
  return j;
}

void collect(const json& j, const std::string& where, const LoadedModel& m, const Problem& prob,
             std::vector<RescoreEntry>& out) {
  if (j.is_object()) {
    if (j.contains("beta_fit") && j.contains("objective")) {
      ParamState psi = prob.initial_state();
      psi.beta = to_vec(j.at("beta_fit"));
      psi.theta = to_vec(j.at("theta"));
      psi.phi = j.at("phi").get<double>();
      if (psi.beta.size() != prob.p() || psi.theta.size() != prob.d())
        throw InvalidInput(where + ": coefficient lengths do not match the model");
      VectorXd u = to_vec(j.at("u_tilde"));
      if (u.size() != prob.q()) u = VectorXd::Zero(prob.q());
      const double lambda = j.at("lambda").get<double>();
      const auto e = q_la(prob, psi, lambda, u);
      out.push_back({where, j.at("objective").at("q_la").get<double>(), e.value.q_la});
      return;
    }
    for (const auto& [k, v] : j.items()) collect(v, where + "/" + k, m, prob, out);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i)
      if (j[i].is_object() || j[i].is_array()) collect(j[i], where + "/" + std::to_string(i), m, prob, out);
  }
}

}  // namespace

std::string fit_json(const LoadedModel& model, const FitRecord& rec) {
  json j = header(model);
  j["fit"] = fit_object(model, rec);
  return j.dump(2);
}

std::string path_json(const LoadedModel& model, const FitPath& path) {
  json j = header(model);
  json recs = json::array();
  for (std::size_t i = 0; i < path.records.size(); ++i) {
    json r = fit_object(model, path.records[i]);
    r["bic_best"] = static_cast<int>(i) == path.best_bic;
    r["aic_best"] = static_cast<int>(i) == path.best_aic;
    recs.push_back(std::move(r));
  }
  j["path"] = {{"lambda_max", path.lambda_max},
               {"lambdas", path.lambdas},
               {"best_bic", path.best_bic},
               {"best_aic", path.best_aic},
               {"records", recs}};
  return j.dump(2);
}

std::string two_stage_json(const LoadedModel& model, const FitPath& path, const TwoStageResult& r) {
  json j = header(model);
  std::vector<std::string> names;
  for (int k : r.selected_set) names.push_back(model.data.column_names[k]);
  j["two_stage"] = {{"kind", r.kind == TwoStageKind::hybrid ? "hybrid" : "thresholded"},
                    {"stage1_index", r.stage1_index},
                    {"stage1_lambda", path.lambdas.at(r.stage1_index)},
                    {"selected", names},
                    {"selected_index", r.selected_set},
                    {"lambda_thres", r.lambda_thres},
                    {"empty_fallback", r.empty_fallback},
                    {"stage2_bic", r.stage2_bic},
                    {"stage1", fit_object(model, r.stage1)},
                    {"stage2", fit_object(model, r.stage2)}};
  return j.dump(2);
}

std::string fit_table(const LoadedModel& model, const FitRecord& rec) {
  std::ostringstream o;
  char buf[256];
  const VectorXd beta = model.standardization.to_original(rec.psi_hat.beta, model.data.has_intercept);
  std::snprintf(buf, sizeof buf, "family %s, n = %d, lambda = %.6g, mode %s\n", model.family.name().c_str(),
                model.data.n(), rec.lambda, to_string(rec.mode).c_str());
  o << buf;
  o << "fixed effects (original scale)\n";
  for (int k = 0; k < model.data.p(); ++k) {
    std::snprintf(buf, sizeof buf, "  %-24s %12.6g%s\n", model.data.column_names[k].c_str(), beta[k],
                  model.penalty_mask[k] ? "" : "  (unpenalized)");
    o << buf;
  }
  const std::span<const double> th(rec.psi_hat.theta.data(), rec.psi_hat.theta.size());
  o << "random effects\n";
  for (int b = 0; b < static_cast<int>(model.cov.blocks.size()); ++b) {
    const auto& blk = model.cov.blocks[b];
    const MatrixXd S = model.cov.block_covariance(b, th);
    for (int i = 0; i < blk.k(); ++i) {
      const int c = blk.columns[i];
      const std::string var = c == kInterceptColumn ? "(Intercept)" : model.data.column_names[c];
      std::snprintf(buf, sizeof buf, "  %-12s %-16s variance %10.6g\n", model.data.groups[blk.factor].name.c_str(),
                    var.c_str(), S(i, i));
      o << buf;
    }
  }
  if (!model.family.dispersion_known) {
    std::snprintf(buf, sizeof buf, "dispersion phi %.6g\n", rec.psi_hat.phi);
    o << buf;
  }
  const int df = degrees_of_freedom(rec, model.cov.d());
  std::snprintf(buf, sizeof buf, "Q_LA %.10g  f %.10g  df %d  AIC %.6g  BIC %.6g\n", rec.q_la_final, rec.objective.f,
                df, information_criterion(rec.objective.f, df, model.data.n(), Criterion::aic),
                information_criterion(rec.objective.f, df, model.data.n(), Criterion::bic));
  o << buf;
  std::snprintf(buf, sizeof buf, "converged %s after %d iterations, KKT %s (max violation %.3g)\n",
                rec.converged ? "yes" : "no", rec.outer_iterations, rec.kkt.ok ? "ok" : "failed",
                rec.kkt.max_violation);
  o << buf;
  return o.str();
}

std::vector<RescoreEntry> rescore_json(const std::string& json_text, const LoadedModel& model) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "glmmlasso") throw InvalidInput("not a glmmlasso result document");
  if (j.at("columns").get<std::vector<std::string>>() != model.data.column_names)
    throw InvalidInput("result columns do not match the model");
  const Problem prob(model.data, model.cov, model.family, model.penalty_mask);
  std::vector<RescoreEntry> out;
  try {
    collect(j, "", model, prob, out);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed result document: ") + e.what());
  }
  return out;
}

}  // namespace glmmlasso
