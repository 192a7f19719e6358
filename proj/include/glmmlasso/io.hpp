#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "glmmlasso/model.hpp"
#include "glmmlasso/selection.hpp"

namespace glmmlasso {

/// Header plus string cells, as read from a comma-separated file.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
  // Numeric column; non-finite or unparsable cells throw with a 1-based row number.
  std::vector<double> numeric(int col) const;
};

CsvTable read_csv(std::istream& in, const std::string& source = "<input>");
CsvTable read_csv_file(const std::string& path);

struct RandomTerm {
  std::vector<std::string> variables;  // "intercept" or a covariate name
  std::string group;
  CovStructure structure = CovStructure::diagonal;
};

/// Declarative model description:
///   response = y; groups = subject, obs; covariates = x1, x2;
///   random = intercept + x1 @ subject : unstructured, intercept @ obs;
///   family = bernoulli; unpenalized = x2; intercept = true; standardize = true
struct ModelSpec {
  std::string response;
  std::vector<std::string> groups;
  std::vector<std::string> covariates;  // empty: every other numeric column
  std::vector<RandomTerm> random;
  std::string family = "gaussian";
  std::optional<double> phi;            // fixes the gaussian dispersion
  std::vector<std::string> unpenalized;
  bool intercept = true;
  bool standardize = true;
};

ModelSpec parse_model_spec(const std::string& text);
ModelSpec read_model_spec_file(const std::string& path);
FamilySpec family_from_spec(const ModelSpec& spec);

/// Everything needed to build a Problem, on the fitting scale.
struct LoadedModel {
  Dataset data;  // standardized when requested
  CovarianceTemplate cov;
  FamilySpec family;
  std::vector<bool> penalty_mask;
  Standardization standardization;
};

LoadedModel build_model(const CsvTable& table, const ModelSpec& spec);

/// Epilepsy-style long table: one row per subject visit with columns
/// subject, visit (1..4), count, Base, Trt, Age. Adds lBase = log(Base/4),
/// lAge = log(Age), lBase_Trt, V4 and an obs factor per row.
CsvTable epilepsy_table(const CsvTable& raw);
/// Count model with subject and observation-level random intercepts.
ModelSpec epilepsy_spec();

}  // namespace glmmlasso
