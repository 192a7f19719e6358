#pragma once

#include <string>
#include <vector>

#include "glmmlasso/io.hpp"
#include "glmmlasso/selection.hpp"

namespace glmmlasso {

/// JSON documents for single fits, paths and two-stage runs.
///
/// Every fit object carries beta on the original column scale ("beta") and on
/// the fitting scale ("beta_fit"), theta, phi, the mode u~, the objective
/// terms, df/AIC/BIC and a convergence summary.
std::string fit_json(const LoadedModel& model, const FitRecord& rec);
std::string path_json(const LoadedModel& model, const FitPath& path);
std::string two_stage_json(const LoadedModel& model, const FitPath& path, const TwoStageResult& r);

/// Fixed-width table of coefficients and variance components.
std::string fit_table(const LoadedModel& model, const FitRecord& rec);

struct RescoreEntry {
  std::string where;  // JSON pointer of the fit object
  double stored = 0.0;
  double recomputed = 0.0;
};

/// Re-evaluates Q^LA of every fit object in a document against the data.
std::vector<RescoreEntry> rescore_json(const std::string& json_text, const LoadedModel& model);

}  // namespace glmmlasso
