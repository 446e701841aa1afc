#pragma once

#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "problem.hpp"
#include "rng.hpp"

// Local training passes: one epoch visits every component exactly once in
// permutation order. Kernels are shared by all outer loops so that algorithm
// equivalences hold bit-for-bit.

namespace fedshuffle {

enum class ShuffleMode { random_reshuffle, shuffle_once };

using Permutation = std::vector<int>;

/// Thrown when an iterate leaves the trust region (non-finite or any
/// coordinate beyond 1e100). Carries the client and the epoch-local step.
struct DivergenceError : std::runtime_error {
  int client;
  int step;
  DivergenceError(int client_, int step_)
      : std::runtime_error("divergence detected at client " + std::to_string(client_) +
                           ", epoch-local step " + std::to_string(step_)),
        client(client_),
        step(step_) {}
};

/// Uniform random permutation of {0..n-1} by Fisher-Yates.
inline Permutation sample_permutation(RngStream& rng, int n) {
  if (n < 1) throw std::invalid_argument("sample_permutation: n must be positive");
  Permutation perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int j = n - 1; j > 0; --j) {
    const int r = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(j) + 1));
    std::swap(perm[j], perm[r]);
  }
  return perm;
}

/// Requires perm to be a permutation of {0..n-1}.
inline void check_permutation(int n, const Permutation& perm) {
  if (static_cast<int>(perm.size()) != n)
    throw std::invalid_argument("epoch: permutation has wrong length");
  std::vector<char> seen(n, 0);
  for (const int v : perm) {
    if (v < 0 || v >= n || seen[v])
      throw std::invalid_argument("epoch: not a permutation of {0..n-1}");
    seen[v] = 1;
  }
}

namespace detail {

inline void validate_epoch_args(const FederatedProblem& p, int m, const Vec& x0,
                                const Permutation& perm, double gamma) {
  p.check_client(m);
  p.check_dim(x0);
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw std::invalid_argument("epoch: stepsize must be positive and finite");
  check_permutation(p.components_per_client(), perm);
}

inline void check_in_bounds(const Vec& x, int client, int step) {
  if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e100) throw DivergenceError(client, step);
}

}  // namespace detail

/// One epoch of sequential component-gradient steps:
/// x^{i+1} = x^i - gamma grad f_{m,perm[i]}(x^i).
inline Vec local_epoch_plain(const FederatedProblem& p, int m, const Vec& x0,
                             const Permutation& perm, double gamma) {
  detail::validate_epoch_args(p, m, x0, perm, gamma);
  Vec x = x0;
  Vec g(p.dim());
  for (int i = 0; i < p.components_per_client(); ++i) {
    component_grad(p, m, perm[i], x, g);
    x -= gamma * g;
    detail::check_in_bounds(x, m, i);
  }
  return x;
}

/// Variance-reduced epoch: steps use
/// g^i = grad f_{m,perm[i]}(x^i) - grad f_{m,perm[i]}(anchor) + (1/n) grad F_m(anchor),
/// so the correction terms sum to zero over the epoch and the anchor full
/// gradient is computed once.
inline Vec local_epoch_vr(const FederatedProblem& p, int m, const Vec& x0, const Vec& anchor,
                          const Permutation& perm, double gamma) {
  detail::validate_epoch_args(p, m, x0, perm, gamma);
  p.check_dim(anchor);
  const int n = p.components_per_client();
  const int d = p.dim();

  Mat anchor_grads(n, d);
  Vec g(d);
  for (int i = 0; i < n; ++i) {
    component_grad(p, m, i, anchor, g);
    anchor_grads.row(i) = g;
  }
  const Vec mean_anchor = anchor_grads.colwise().sum().transpose() / n;

  Vec x = x0;
  for (int i = 0; i < n; ++i) {
    const int c = perm[i];
    component_grad(p, m, c, x, g);
    x -= gamma * (g - anchor_grads.row(c).transpose() + mean_anchor);
    detail::check_in_bounds(x, m, i);
  }
  return x;
}

}  // namespace fedshuffle
