#pragma once

#include <fedshuffle/problem.hpp>
#include <fedshuffle/rng.hpp>

#include <vector>

// Hand-auditable fixtures shared by the unit and acceptance suites.

namespace fixtures {

// P0: one client, two components, identity features, targets (1, 1),
// lambda = 1. Closed forms: x* = (1/3, 1/3), L = L_max = 2, mu = 3/2.
inline fedshuffle::FederatedProblem make_p0() {
  fedshuffle::ClientData c;
  c.features = fedshuffle::Mat::Identity(2, 2);
  c.targets = fedshuffle::Vec::Ones(2);
  return fedshuffle::FederatedProblem({c}, 1.0);
}

// Random dense ridge problem with Gaussian rows and targets.
inline fedshuffle::FederatedProblem random_problem(fedshuffle::RngStream& rng, int clients,
                                                  int components, int dim, double lambda) {
  std::vector<fedshuffle::ClientData> cs;
  cs.reserve(clients);
  for (int m = 0; m < clients; ++m) {
    fedshuffle::ClientData c;
    c.features.resize(components, dim);
    c.targets.resize(components);
    for (int i = 0; i < components; ++i) {
      for (int j = 0; j < dim; ++j) c.features(i, j) = rng.next_normal();
      c.targets[i] = rng.next_normal();
    }
    cs.push_back(std::move(c));
  }
  return fedshuffle::FederatedProblem(std::move(cs), lambda);
}

inline fedshuffle::Vec random_vec(fedshuffle::RngStream& rng, int dim, double scale = 1.0) {
  fedshuffle::Vec v(dim);
  for (int j = 0; j < dim; ++j) v[j] = scale * rng.next_normal();
  return v;
}

}  // namespace fixtures
