#pragma once

// Unchecked per-observation family kernels used in the inner loops.
// Responses are validated once when a Problem is constructed.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "glmmlasso/family.hpp"

namespace glmmlasso::detail {

inline double mean_of(FamilyKind kind, double eta) {
  switch (kind) {
    case FamilyKind::bernoulli_logit:
      return 1.0 / (1.0 + std::exp(-std::clamp(eta, -kEtaClamp, kEtaClamp)));
    case FamilyKind::poisson_log: return std::exp(std::clamp(eta, -kEtaClamp, kEtaClamp));
    case FamilyKind::gaussian_identity: return eta;
  }
  return eta;
}

inline double var_of(FamilyKind kind, double mu) {
  switch (kind) {
    case FamilyKind::bernoulli_logit: return mu * (1.0 - mu);
    case FamilyKind::poisson_log: return mu;
    case FamilyKind::gaussian_identity: return 1.0;
  }
  return 1.0;
}

inline double dvar_of(FamilyKind kind, double mu) {
  switch (kind) {
    case FamilyKind::bernoulli_logit: return 1.0 - 2.0 * mu;
    case FamilyKind::poisson_log: return 1.0;
    case FamilyKind::gaussian_identity: return 0.0;
  }
  return 0.0;
}

inline double neg2_term(FamilyKind kind, double y, double mu, double phi) {
  switch (kind) {
    case FamilyKind::bernoulli_logit:
      return -2.0 * (y == 1.0 ? std::log(mu) : std::log1p(-mu));
    case FamilyKind::poisson_log:
      return -2.0 * ((y > 0.0 ? y * std::log(mu) : 0.0) - mu - std::lgamma(y + 1.0));
    case FamilyKind::gaussian_identity: {
      const double r = y - mu;
      return r * r / phi + std::log(2.0 * std::numbers::pi * phi);
    }
  }
  return 0.0;
}

}  // namespace glmmlasso::detail
