#pragma once

#include <string>
#include <string_view>

namespace glmmlasso {

enum class FamilyKind { bernoulli_logit, poisson_log, gaussian_identity };

/// Exponential family with its canonical link.
///
/// Bernoulli and Poisson have a known dispersion fixed at 1. The Gaussian
/// family may run with a known (`dispersion_known = true`, `phi_fixed`) or an
/// estimated dispersion.
struct FamilySpec {
  FamilyKind kind = FamilyKind::bernoulli_logit;
  bool dispersion_known = true;
  double phi_fixed = 1.0;

  static FamilySpec bernoulli() { return {FamilyKind::bernoulli_logit, true, 1.0}; }
  static FamilySpec poisson() { return {FamilyKind::poisson_log, true, 1.0}; }
  static FamilySpec gaussian(bool dispersion_known = false, double phi = 1.0);

  // Throws InvalidInput when the invariants of the kind are violated.
  void validate() const;

  double link(double mu) const;
  double link_inv(double eta) const;
  double link_deriv(double mu) const;
  double variance(double mu) const;
  // d v / d mu, used by the log-determinant gradient correction.
  double variance_deriv(double mu) const;

  // -2 * [(y xi - b(xi)) / phi + c(y, phi)] for one observation.
  double neg2_loglik_term(double y, double mu, double phi) const;

  // Throws InvalidInput when y is not a valid response for the family.
  void check_response(double y) const;

  std::string name() const;
};

FamilySpec family_from_name(std::string_view name);

// Linear predictor clamp applied by link_inv for the logit and log links.
inline constexpr double kEtaClamp = 30.0;

}  // namespace glmmlasso
