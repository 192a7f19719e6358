#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include "glmmlasso/model.hpp"
#include "glmmlasso/rng.hpp"

namespace testutil {

using namespace glmmlasso;

// Intercept plus p-1 N(0,1) columns, n_groups groups of size m each.
inline Dataset random_dataset(int n_groups, int m, int p, std::uint64_t seed) {
  Engine eng = make_engine(seed, 7);
  boost::random::normal_distribution<double> nd;
  const int n = n_groups * m;
  Dataset d;
  d.X.resize(n, p);
  d.y = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) d.X(i, j) = nd(eng);
  }
  for (int j = 0; j < p; ++j) d.column_names.push_back(j == 0 ? "(Intercept)" : "x" + std::to_string(j));
  std::vector<int> g(n);
  for (int i = 0; i < n; ++i) g[i] = i / m;
  d.groups.push_back(GroupingFactor::from_ints("g", g));
  return d;
}

// Fill y from beta and a random intercept with sd tau.
inline void draw_response(Dataset& d, const FamilySpec& fam, const VectorXd& beta, double tau,
                          std::uint64_t seed) {
  Engine eng = make_engine(seed, 11);
  boost::random::normal_distribution<double> nd;
  const int N = d.groups[0].n_levels();
  std::vector<double> b(N);
  for (auto& v : b) v = tau * nd(eng);
  for (int i = 0; i < d.n(); ++i) {
    const double eta = d.X.row(i).dot(beta) + b[d.groups[0].level[i]];
    const double mu = fam.link_inv(eta);
    if (fam.kind == FamilyKind::bernoulli_logit) {
      boost::random::bernoulli_distribution<double> bd(mu);
      d.y[i] = bd(eng) ? 1.0 : 0.0;
    } else if (fam.kind == FamilyKind::poisson_log) {
      boost::random::poisson_distribution<int, double> pd(mu);
      d.y[i] = pd(eng);
    } else {
      d.y[i] = mu + nd(eng);
    }
  }
}

inline CovarianceTemplate random_intercept() {
  CovarianceTemplate c;
  c.blocks.push_back({0, {kInterceptColumn}, CovStructure::scalar_identity});
  return c;
}

inline double fd_central(auto&& f, double x, double h) { return (f(x + h) - f(x - h)) / (2.0 * h); }

}  // namespace testutil
