#include "glmmlasso/family.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "glmmlasso/error.hpp"

namespace glmmlasso {

namespace {

void require_mean_domain(const FamilySpec& fam, double mu) {
  bool ok = std::isfinite(mu);
  switch (fam.kind) {
    case FamilyKind::bernoulli_logit: ok = ok && mu > 0.0 && mu < 1.0; break;
    case FamilyKind::poisson_log: ok = ok && mu > 0.0; break;
    case FamilyKind::gaussian_identity: break;
  }
  if (!ok)
    throw InvalidInput(fam.name() + ": mean " + std::to_string(mu) +
                       " outside the open mean domain");
}

}  // namespace

FamilySpec FamilySpec::gaussian(bool dispersion_known, double phi) {
  return {FamilyKind::gaussian_identity, dispersion_known, phi};
}

void FamilySpec::validate() const {
  if (kind != FamilyKind::gaussian_identity && (!dispersion_known || phi_fixed != 1.0))
    throw InvalidInput(name() + ": dispersion must be known and equal to 1");
  if (!(phi_fixed > 0.0) || !std::isfinite(phi_fixed))
    throw InvalidInput("dispersion must be positive");
}

double FamilySpec::link(double mu) const {
  require_mean_domain(*this, mu);
  switch (kind) {
    case FamilyKind::bernoulli_logit: return std::log(mu / (1.0 - mu));
    case FamilyKind::poisson_log: return std::log(mu);
    case FamilyKind::gaussian_identity: return mu;
  }
  return mu;
}

double FamilySpec::link_inv(double eta) const {
  switch (kind) {
    case FamilyKind::bernoulli_logit: {
      const double e = std::clamp(eta, -kEtaClamp, kEtaClamp);
      return 1.0 / (1.0 + std::exp(-e));
    }
    case FamilyKind::poisson_log: return std::exp(std::clamp(eta, -kEtaClamp, kEtaClamp));
    case FamilyKind::gaussian_identity: return eta;
  }
  return eta;
}

double FamilySpec::link_deriv(double mu) const {
  require_mean_domain(*this, mu);
  switch (kind) {
    case FamilyKind::bernoulli_logit: return 1.0 / (mu * (1.0 - mu));
    case FamilyKind::poisson_log: return 1.0 / mu;
    case FamilyKind::gaussian_identity: return 1.0;
  }
  return 1.0;
}

double FamilySpec::variance(double mu) const {
  require_mean_domain(*this, mu);
  switch (kind) {
    case FamilyKind::bernoulli_logit: return mu * (1.0 - mu);
    case FamilyKind::poisson_log: return mu;
    case FamilyKind::gaussian_identity: return 1.0;
  }
  return 1.0;
}

double FamilySpec::variance_deriv(double mu) const {
  switch (kind) {
    case FamilyKind::bernoulli_logit: return 1.0 - 2.0 * mu;
    case FamilyKind::poisson_log: return 1.0;
    case FamilyKind::gaussian_identity: return 0.0;
  }
  return 0.0;
}

void FamilySpec::check_response(double y) const {
  bool ok = std::isfinite(y);
  switch (kind) {
    case FamilyKind::bernoulli_logit: ok = ok && (y == 0.0 || y == 1.0); break;
    case FamilyKind::poisson_log: ok = ok && y >= 0.0 && y == std::floor(y); break;
    case FamilyKind::gaussian_identity: break;
  }
  if (!ok) throw InvalidInput(name() + ": invalid response value " + std::to_string(y));
}

double FamilySpec::neg2_loglik_term(double y, double mu, double phi) const {
  check_response(y);
  require_mean_domain(*this, mu);
  switch (kind) {
    case FamilyKind::bernoulli_logit:
      return -2.0 * (y == 1.0 ? std::log(mu) : std::log1p(-mu));
    case FamilyKind::poisson_log: {
      const double ylogmu = y > 0.0 ? y * std::log(mu) : 0.0;
      return -2.0 * (ylogmu - mu - std::lgamma(y + 1.0));
    }
    case FamilyKind::gaussian_identity: {
      const double r = y - mu;
      return r * r / phi + std::log(2.0 * std::numbers::pi * phi);
    }
  }
  return 0.0;
}

std::string FamilySpec::name() const {
  switch (kind) {
    case FamilyKind::bernoulli_logit: return "bernoulli";
    case FamilyKind::poisson_log: return "poisson";
    case FamilyKind::gaussian_identity: return "gaussian";
  }
  return "unknown";
}

FamilySpec family_from_name(std::string_view name) {
  if (name == "bernoulli" || name == "binomial" || name == "logistic") return FamilySpec::bernoulli();
  if (name == "poisson") return FamilySpec::poisson();
  if (name == "gaussian") return FamilySpec::gaussian();
  throw InvalidInput("unknown family '" + std::string(name) +
                     "' (expected bernoulli, poisson or gaussian)");
}

}  // namespace glmmlasso
