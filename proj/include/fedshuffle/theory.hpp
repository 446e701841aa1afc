#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "problem.hpp"
#include "shuffle.hpp"

// Every quantity appearing in the convergence statements: shuffled limit
// points, variances at the optimum, the shuffling radius (exact by
// enumeration and via its closed-form bounds), theorem neighborhoods,
// Lyapunov values, and parameter-validity checks.
//
// Scaling conventions, used consistently everywhere below:
//   F_m(x)   = sum_{j=1..n} f_{m,j}(x)            (a sum, not an average)
//   f(x)     = (1/(M n)) sum_m F_m(x)
//   mu       = rho_min(A^T A)/(M n) + lambda
//   L        = L_max = max_{m,i} ||a_{m,i}||^2 + lambda

namespace fedshuffle {

/// Scalar knobs of an outer-loop configuration, as the theory sees them.
struct MethodParams {
  double gamma;
  double alpha = 1.0;
  double eta = 1.0;
  double omega = 0.0;
};

/// Limit points of one local epoch started at the optimum:
/// x*^i = x* - gamma sum_{j<i} grad f_{pi_j}(x*). The full-epoch point
/// per client, x^n_{*,m} = x* - gamma grad F_m(x*), does not depend on the
/// permutation because the epoch visits every component once.
struct ShuffledLimit {
  Vec x_star;
  std::vector<Vec> per_client;  // x^n_{*,m}, one per client
  std::vector<Vec> per_step;    // x*^i for i = 1..n-1; populated when M = 1
};

/// Permutation-independent form; per_step is left empty.
inline ShuffledLimit shuffled_limits(const FederatedProblem& p, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("shuffled_limits: gamma must be positive");
  ShuffledLimit out;
  out.x_star = exact_solution(p);
  out.per_client.reserve(p.num_clients());
  for (int m = 0; m < p.num_clients(); ++m)
    out.per_client.push_back(out.x_star - gamma * local_full_grad(p, m, out.x_star));
  return out;
}

/// Literal prefix-sum form along the given per-client permutations.
/// The single-problem per-step points are meaningful for M = 1 only.
inline ShuffledLimit shuffled_limits(const FederatedProblem& p, double gamma,
                                     const std::vector<Permutation>& perms) {
  if (!(gamma > 0.0)) throw std::invalid_argument("shuffled_limits: gamma must be positive");
  if (static_cast<int>(perms.size()) != p.num_clients())
    throw std::invalid_argument("shuffled_limits: one permutation per client required");
  const int n = p.components_per_client();
  for (const auto& perm : perms) check_permutation(n, perm);

  ShuffledLimit out;
  out.x_star = exact_solution(p);
  Vec g(p.dim());
  for (int m = 0; m < p.num_clients(); ++m) {
    Vec prefix = Vec::Zero(p.dim());
    for (int i = 0; i < n; ++i) {
      component_grad(p, m, perms[m][i], out.x_star, g);
      prefix += g;
      if (p.num_clients() == 1 && i < n - 1) out.per_step.push_back(out.x_star - gamma * prefix);
    }
    out.per_client.push_back(out.x_star - gamma * prefix);
  }
  return out;
}

/// sigma_{m,*}^2 = (1/n) sum_j ||grad f_{mj}(x*) - (1/n) grad F_m(x*)||^2.
inline double local_variance_at_opt(const FederatedProblem& p, int m, const Vec& x_star) {
  p.check_client(m);
  const int n = p.components_per_client();
  const Vec mean = local_full_grad(p, m, x_star) / n;
  double acc = 0.0;
  Vec g(p.dim());
  for (int i = 0; i < n; ++i) {
    component_grad(p, m, i, x_star, g);
    acc += (g - mean).squaredNorm();
  }
  return acc / n;
}

inline double local_variance_at_opt(const FederatedProblem& p, int m) {
  return local_variance_at_opt(p, m, exact_solution(p));
}

/// sigma_*^2 over the pooled component list (all M n components against the
/// global average gradient).
inline double pooled_variance_at_opt(const FederatedProblem& p, const Vec& x_star) {
  const Vec gbar = global_grad(p, x_star);
  double acc = 0.0;
  Vec g(p.dim());
  for (int m = 0; m < p.num_clients(); ++m)
    for (int i = 0; i < p.components_per_client(); ++i) {
      component_grad(p, m, i, x_star, g);
      acc += (g - gbar).squaredNorm();
    }
  return acc / (static_cast<double>(p.num_clients()) * p.components_per_client());
}

/// sigma~_*^2 of the perturbation-reformulated problem anchored at y,
/// pooled over all components. Bounded by 4 L^2 ||y - x*||^2.
inline double reformulated_variance(const FederatedProblem& p, const Vec& y, const Vec& x_star) {
  p.check_dim(y);
  const Vec shift = global_grad(p, y) - global_grad(p, x_star);
  double acc = 0.0;
  Vec gs(p.dim()), gy(p.dim());
  for (int m = 0; m < p.num_clients(); ++m)
    for (int i = 0; i < p.components_per_client(); ++i) {
      component_grad(p, m, i, x_star, gs);
      component_grad(p, m, i, y, gy);
      acc += (gs - gy + shift).squaredNorm();
    }
  return acc / (static_cast<double>(p.num_clients()) * p.components_per_client());
}

constexpr int kRadiusEnumerationLimit = 720;  // n! cap, i.e. n <= 6

/// Exact shuffling radius of the lifted problem by enumerating all n!
/// permutations per client:
///   sigma_rad^2 = max_{i=1..n-1} (1/gamma^2) sum_m E_pi[ D_{f_{pi_i}}(x*^i, x*) ].
/// Bregman divergences of ridge components use the quadratic closed form
/// D(u,v) = 1/2 (a^T(u-v))^2 + lambda/2 ||u-v||^2, under which the gamma^2
/// factors cancel exactly, so the result is stepsize-free.
/// Returns nothing when n! exceeds the enumeration limit.
inline std::optional<double> shuffling_radius_exact(const FederatedProblem& p, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("shuffling_radius_exact: gamma must be positive");
  const int n = p.components_per_client();
  if (n == 1) return 0.0;  // max over an empty cut set
  double factorial = 1.0;
  for (int i = 2; i <= n; ++i) factorial *= i;
  if (factorial > kRadiusEnumerationLimit) return std::nullopt;

  const Vec x_star = exact_solution(p);
  const int d = p.dim();
  std::vector<double> cut_total(n, 0.0);
  Vec g(d);
  for (int m = 0; m < p.num_clients(); ++m) {
    Mat grads(n, d);
    for (int i = 0; i < n; ++i) {
      component_grad(p, m, i, x_star, g);
      grads.row(i) = g;
    }
    std::vector<double> acc(n, 0.0);
    Permutation perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    long long count = 0;
    Vec prefix(d);
    do {
      prefix.setZero();
      for (int i = 1; i < n; ++i) {
        prefix += grads.row(perm[i - 1]);
        const double lin = p.row(m, perm[i]).dot(prefix);
        acc[i] += 0.5 * lin * lin + 0.5 * p.lambda() * prefix.squaredNorm();
      }
      ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    for (int i = 1; i < n; ++i) cut_total[i] += acc[i] / static_cast<double>(count);
  }
  double radius = 0.0;
  for (int i = 1; i < n; ++i) radius = std::max(radius, cut_total[i]);
  return radius;
}

enum class RadiusBoundMode { single, lifted };

/// Closed-form upper bounds on the shuffling radius.
///   single: (L_max/2) N (N ||grad f(x*)||^2 + sigma_*^2/2) on the pooled
///           problem with N = M n components;
///   lifted: L sum_m (||grad F_m(x*)||^2 + (n/4) sigma_{m,*}^2).
inline double shuffling_radius_bound(const FederatedProblem& p, RadiusBoundMode mode) {
  const Vec x_star = exact_solution(p);
  const auto s = smoothness_constants(p);
  if (mode == RadiusBoundMode::single) {
    const double total = static_cast<double>(p.num_clients()) * p.components_per_client();
    const double grad_sq = global_grad(p, x_star).squaredNorm();
    return 0.5 * s.L_max * total * (total * grad_sq + 0.5 * pooled_variance_at_opt(p, x_star));
  }
  double acc = 0.0;
  const double n = p.components_per_client();
  for (int m = 0; m < p.num_clients(); ++m)
    acc += local_full_grad(p, m, x_star).squaredNorm() +
           0.25 * n * local_variance_at_opt(p, m, x_star);
  return s.L * acc;
}

/// Asymptotic (T -> infinity) remainder terms of the three convergence
/// statements. thm2 carries the (1 + 2 omega/M) factor on the radius term;
/// thm2_no_factor is the variant without it, as the final display prints.
struct TheoremNeighborhoods {
  double thm2;
  double thm2_no_factor;
  double thm3;
  double thm4;
};

inline TheoremNeighborhoods theorem_neighborhoods(const FederatedProblem& p,
                                                  const MethodParams& mp) {
  const auto s = smoothness_constants(p);
  const Vec x_star = exact_solution(p);
  const int M = p.num_clients();
  const double n = p.components_per_client();
  const double rho = 1.0 - mp.gamma * s.mu;

  double sum_delta = 0.0, sum_grad = 0.0, sum_limit = 0.0;
  for (int m = 0; m < M; ++m) {
    const Vec gm = local_full_grad(p, m, x_star);
    sum_grad += gm.squaredNorm();
    sum_delta += gm.squaredNorm() + 0.25 * n * local_variance_at_opt(p, m, x_star);
    sum_limit += (x_star - mp.gamma * gm).squaredNorm();
  }

  TheoremNeighborhoods out;
  const double comp_term = (2.0 * mp.omega / M) * (1.0 / (mp.gamma * s.mu)) * sum_limit / M;
  const double rad_term = (2.0 / s.mu) * mp.gamma * mp.gamma * s.L_max * sum_delta / M;
  out.thm2 = comp_term + (1.0 + 2.0 * mp.omega / M) * rad_term;
  out.thm2_no_factor = comp_term + rad_term;

  const double coeff =
      2.0 * (mp.alpha + mp.eta + 2.0 * mp.eta * mp.eta * mp.omega / M) * std::pow(mp.gamma, 3);
  const double denom3 = M * std::min(mp.alpha, mp.eta * (1.0 - std::pow(rho, n)));
  out.thm3 = coeff * s.L_max * sum_delta / denom3;
  const double denom4 = M * std::min(mp.alpha, mp.eta * (1.0 - std::pow(rho, 0.5 * n)));
  out.thm4 = coeff * s.L * sum_grad / denom4;
  return out;
}

/// Per-step remainder of the Lyapunov recursion (the additive term of the
/// one-epoch inequality), with the radius replaced by its lifted bound:
/// 2 (alpha + eta + 2 eta^2 omega/M) gamma^3 sigma_rad^2 sum_{j<n} rho^j.
inline double lyapunov_step_increment(const FederatedProblem& p, const MethodParams& mp) {
  const auto s = smoothness_constants(p);
  const int M = p.num_clients();
  const double rho = 1.0 - mp.gamma * s.mu;
  double geom = 0.0, pw = 1.0;
  for (int j = 0; j < p.components_per_client(); ++j) {
    geom += pw;
    pw *= rho;
  }
  const double coeff =
      2.0 * (mp.alpha + mp.eta + 2.0 * mp.eta * mp.eta * mp.omega / M) * std::pow(mp.gamma, 3);
  return coeff * shuffling_radius_bound(p, RadiusBoundMode::lifted) * geom;
}

/// Psi_t = ||x - x*||^2 + (4 eta^2 omega/(alpha M)) (1/M) sum_m ||h_m - x^n_{*,m}||^2.
/// With omega = 0 the shift term vanishes and this is the squared distance.
inline double lyapunov(const Vec& x, const std::vector<Vec>& h, const ShuffledLimit& limits,
                       double alpha, double eta, double omega, int M) {
  if (static_cast<int>(h.size()) != M || static_cast<int>(limits.per_client.size()) != M)
    throw std::invalid_argument("lyapunov: expected one shift and one limit per client");
  const double dist = (x - limits.x_star).squaredNorm();
  if (omega == 0.0) return dist;
  if (!(alpha > 0.0)) throw std::invalid_argument("lyapunov: alpha must be positive when omega > 0");
  double acc = 0.0;
  for (int m = 0; m < M; ++m) acc += (h[m] - limits.per_client[m]).squaredNorm();
  return dist + (4.0 * eta * eta * omega / (alpha * M)) * acc / M;
}

/// One named inequality with both sides evaluated.
struct ConditionCheck {
  const char* name;
  double lhs;
  double rhs;
  bool holds;
};

/// Validity flags for every stepsize/parameter condition, boundary
/// inclusive. The big-data flag conjoins all three hypotheses of the
/// epoch-contraction lemma, evaluated at delta^2 = 1/8 (the constant the
/// double-VR feasibility window uses); its headline lhs/rhs pair is the
/// component-count threshold.
struct ValidityReport {
  ConditionCheck thm2_gamma, thm2_omega;
  ConditionCheck thm3_gamma, thm3_alpha, thm3_eta;
  ConditionCheck thm4_gamma, thm4_alpha, thm4_eta, thm4_window;
  ConditionCheck lemma4_gamma, lemma4_n_big, lemma4_delta_window, lemma4_big_data;

  bool thm2_ok() const { return thm2_gamma.holds && thm2_omega.holds; }
  bool thm3_ok() const { return thm3_gamma.holds && thm3_alpha.holds && thm3_eta.holds; }
  bool thm4_ok() const {
    return thm4_gamma.holds && thm4_alpha.holds && thm4_eta.holds && thm4_window.holds;
  }

  std::vector<const ConditionCheck*> all() const {
    return {&thm2_gamma, &thm2_omega,  &thm3_gamma,        &thm3_alpha,
            &thm3_eta,   &thm4_gamma,  &thm4_alpha,        &thm4_eta,
            &thm4_window, &lemma4_gamma, &lemma4_n_big,     &lemma4_delta_window,
            &lemma4_big_data};
  }
};

inline ValidityReport validate_parameters(const FederatedProblem& p, const MethodParams& mp) {
  const auto s = smoothness_constants(p);
  const int M = p.num_clients();
  const double n = p.components_per_client();
  const double rho = 1.0 - mp.gamma * s.mu;
  const double rho_half_n = std::pow(rho, 0.5 * n);
  const double rho_n = std::pow(rho, n);

  auto le = [](const char* name, double lhs, double rhs) {
    return ConditionCheck{name, lhs, rhs, lhs <= rhs};
  };

  ValidityReport v;
  v.thm2_gamma = le("thm2.gamma_le_inv_L", mp.gamma, 1.0 / s.L);
  v.thm2_omega =
      le("thm2.omega_small", mp.omega, 0.5 * M * (1.0 - rho_half_n) / rho_half_n);

  v.thm3_gamma = le("thm3.gamma_le_inv_L", mp.gamma, 1.0 / s.L);
  v.thm3_alpha = le("thm3.alpha_le_inv_omega_plus_1", mp.alpha, 1.0 / (mp.omega + 1.0));
  const double eta3_cap =
      mp.omega > 0.0 ? std::min(1.0, M * (1.0 - rho_n) / (12.0 * mp.omega * rho_n)) : 1.0;
  v.thm3_eta = le("thm3.eta_le_min", mp.eta, eta3_cap);

  v.thm4_gamma =
      le("thm4.gamma_le_small", mp.gamma, (1.0 / (8.0 * s.L)) * std::sqrt(s.mu / (n * s.L)));
  v.thm4_alpha = le("thm4.alpha_le_inv_omega_plus_1", mp.alpha, 1.0 / (mp.omega + 1.0));
  const double eta4_cap =
      mp.omega > 0.0
          ? std::min(1.0, M * (1.0 - rho_half_n) / (12.0 * mp.omega * rho_half_n))
          : 1.0;
  v.thm4_eta = le("thm4.eta_le_min", mp.eta, eta4_cap);
  v.thm4_window = le("thm4.window", 0.125, rho_half_n * (1.0 - rho_half_n));

  const double delta_sq = 0.125;
  const double delta = std::sqrt(delta_sq);
  v.lemma4_gamma = le("lemma4.gamma_le_small", mp.gamma,
                      (delta / s.L) * std::sqrt(s.mu / (2.0 * n * s.L)));
  const double n_threshold = std::log(1.0 / (1.0 - delta_sq)) / std::log(1.0 / rho);
  v.lemma4_n_big = ConditionCheck{"lemma4.n_big", n, n_threshold, n > n_threshold};
  v.lemma4_delta_window = le("lemma4.delta_window", delta_sq, rho_half_n * (1.0 - rho_half_n));
  v.lemma4_big_data =
      ConditionCheck{"lemma4.big_data", n, n_threshold,
                     v.lemma4_gamma.holds && v.lemma4_n_big.holds && v.lemma4_delta_window.holds};
  return v;
}

/// Everything the analysis produces for one (problem, parameters) pair.
struct TheoryReport {
  Vec x_star;
  std::vector<double> sigma_star_m;  // sigma_{m,*}^2 per client
  std::vector<double> grad_norms;    // ||grad F_m(x*)||^2 per client
  double sigma_star_pooled;          // sigma_*^2 of the pooled component list
  double sigma_rad_bound;            // lifted bound (what the theorems consume)
  double sigma_rad_bound_single;     // pooled-view bound
  std::optional<double> sigma_rad_exact;
  double thm2_neighborhood;
  double thm2_neighborhood_no_factor;
  double thm3_neighborhood;
  double thm4_neighborhood;
  double delta_avg;        // (1/M) sum_m (||grad F_m(x*)|| + sqrt(n) sigma_{m,*})
  double delta_prime_avg;  // (1/M) sum_m ||grad F_m(x*)||
  SmoothnessConstants constants;
  ValidityReport validity;
  MethodParams params;
};

inline TheoryReport make_theory_report(const FederatedProblem& p, const MethodParams& mp) {
  TheoryReport r;
  r.params = mp;
  r.constants = smoothness_constants(p);
  r.x_star = exact_solution(p);
  const int M = p.num_clients();
  const double n = p.components_per_client();
  r.delta_avg = 0.0;
  r.delta_prime_avg = 0.0;
  for (int m = 0; m < M; ++m) {
    const double g2 = local_full_grad(p, m, r.x_star).squaredNorm();
    const double var = local_variance_at_opt(p, m, r.x_star);
    r.grad_norms.push_back(g2);
    r.sigma_star_m.push_back(var);
    r.delta_avg += std::sqrt(g2) + std::sqrt(n) * std::sqrt(var);
    r.delta_prime_avg += std::sqrt(g2);
  }
  r.delta_avg /= M;
  r.delta_prime_avg /= M;
  r.sigma_star_pooled = pooled_variance_at_opt(p, r.x_star);
  r.sigma_rad_bound = shuffling_radius_bound(p, RadiusBoundMode::lifted);
  r.sigma_rad_bound_single = shuffling_radius_bound(p, RadiusBoundMode::single);
  r.sigma_rad_exact = shuffling_radius_exact(p, mp.gamma);
  const auto nb = theorem_neighborhoods(p, mp);
  r.thm2_neighborhood = nb.thm2;
  r.thm2_neighborhood_no_factor = nb.thm2_no_factor;
  r.thm3_neighborhood = nb.thm3;
  r.thm4_neighborhood = nb.thm4;
  r.validity = validate_parameters(p, mp);
  return r;
}

}  // namespace fedshuffle
