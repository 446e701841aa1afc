#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Finite-sum ridge regression distributed over M clients with n components
// each. The global objective is the average over all M*n components
//
//   f_{m,i}(x) = 1/2 (a_{m,i}^T x - y_{m,i})^2 + lambda/2 ||x||^2 .
//
// All oracles are deterministic; client/component indices are 0-based.

namespace fedshuffle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One client's local dataset: n feature rows and n targets.
struct ClientData {
  Mat features;  // n x d, row i is a_{m,i}
  Vec targets;   // n
};

/// Validated federated ridge problem. Every client holds the same number of
/// components and the same feature dimension.
class FederatedProblem {
 public:
  FederatedProblem(std::vector<ClientData> clients, double lambda)
      : clients_(std::move(clients)), lambda_(lambda) {
    if (clients_.empty()) throw std::invalid_argument("problem: needs at least one client");
    if (!(lambda_ >= 0.0)) throw std::invalid_argument("problem: lambda must be >= 0");
    const auto n = clients_[0].features.rows();
    const auto d = clients_[0].features.cols();
    if (n < 1 || d < 1) throw std::invalid_argument("problem: empty client data");
    for (const auto& c : clients_) {
      if (c.features.rows() != n || c.features.cols() != d)
        throw std::invalid_argument("problem: clients must share n and d");
      if (c.targets.size() != n)
        throw std::invalid_argument("problem: targets/features size mismatch");
      if (!c.features.allFinite() || !c.targets.allFinite())
        throw std::invalid_argument("problem: data must be finite");
    }
  }

  int num_clients() const { return static_cast<int>(clients_.size()); }
  int components_per_client() const { return static_cast<int>(clients_[0].features.rows()); }
  int dim() const { return static_cast<int>(clients_[0].features.cols()); }
  double lambda() const { return lambda_; }

  const ClientData& client(int m) const {
    check_client(m);
    return clients_[m];
  }

  /// Feature row a_{m,i}.
  auto row(int m, int i) const {
    check_component(m, i);
    return clients_[m].features.row(i);
  }

  double target(int m, int i) const {
    check_component(m, i);
    return clients_[m].targets[i];
  }

  void check_client(int m) const {
    if (m < 0 || m >= num_clients()) throw std::out_of_range("problem: client index " + std::to_string(m));
  }

  void check_component(int m, int i) const {
    check_client(m);
    if (i < 0 || i >= components_per_client())
      throw std::out_of_range("problem: component index " + std::to_string(i));
  }

  void check_dim(const Vec& x) const {
    if (x.size() != dim()) throw std::invalid_argument("problem: vector has wrong dimension");
  }

 private:
  std::vector<ClientData> clients_;
  double lambda_;
};

/// Smoothness/convexity constants of the global objective. L is pinned to
/// L_max (the worst component smoothness), which is what every stepsize rule
/// here consumes. mu divides the Gram spectrum by the total component count
/// M*n; mu_per_client divides by n only and is reported for comparison.
struct SmoothnessConstants {
  double L;
  double L_max;
  double mu;
  double mu_per_client;
  double kappa;  // L / mu
};

inline double component_value(const FederatedProblem& p, int m, int i, const Vec& x) {
  p.check_component(m, i);
  p.check_dim(x);
  const double r = p.row(m, i).dot(x) - p.target(m, i);
  return 0.5 * r * r + 0.5 * p.lambda() * x.squaredNorm();
}

/// grad f_{m,i}(x) = a (a^T x - y) + lambda x, written into `out`.
inline void component_grad(const FederatedProblem& p, int m, int i, const Vec& x, Vec& out) {
  p.check_component(m, i);
  p.check_dim(x);
  const auto a = p.row(m, i);
  const double r = a.dot(x) - p.target(m, i);
  out = p.lambda() * x + r * a.transpose();
}

inline Vec component_grad(const FederatedProblem& p, int m, int i, const Vec& x) {
  Vec g(x.size());
  component_grad(p, m, i, x, g);
  return g;
}

/// grad F_m(x) = sum_i grad f_{m,i}(x) (a sum, not an average).
inline Vec local_full_grad(const FederatedProblem& p, int m, const Vec& x) {
  p.check_client(m);
  p.check_dim(x);
  const auto& c = p.client(m);
  const Vec residual = c.features * x - c.targets;
  const double n = static_cast<double>(p.components_per_client());
  return c.features.transpose() * residual + n * p.lambda() * x;
}

/// grad f(x) = 1/(M n) sum_m grad F_m(x).
inline Vec global_grad(const FederatedProblem& p, const Vec& x) {
  p.check_dim(x);
  Vec g = Vec::Zero(p.dim());
  for (int m = 0; m < p.num_clients(); ++m) g += local_full_grad(p, m, x);
  return g / (static_cast<double>(p.num_clients()) * p.components_per_client());
}

/// f(x), the average of all component values.
inline double objective_value(const FederatedProblem& p, const Vec& x) {
  p.check_dim(x);
  double acc = 0.0;
  for (int m = 0; m < p.num_clients(); ++m) {
    const auto& c = p.client(m);
    acc += 0.5 * (c.features * x - c.targets).squaredNorm();
  }
  const double total = static_cast<double>(p.num_clients()) * p.components_per_client();
  return acc / total + 0.5 * p.lambda() * x.squaredNorm();
}

namespace detail {

// Gram = sum over all components of a a^T; rhs = sum of y * a.
inline std::pair<Eigen::MatrixXd, Vec> gram_and_rhs(const FederatedProblem& p) {
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p.dim(), p.dim());
  Vec rhs = Vec::Zero(p.dim());
  for (int m = 0; m < p.num_clients(); ++m) {
    const auto& c = p.client(m);
    gram.noalias() += c.features.transpose() * c.features;
    rhs.noalias() += c.features.transpose() * c.targets;
  }
  return {gram, rhs};
}

}  // namespace detail

/// Unique minimizer of f, from the normal equations
/// (A^T A /(Mn) + lambda I) x = A^T y /(Mn).
inline Vec exact_solution(const FederatedProblem& p) {
  const double total = static_cast<double>(p.num_clients()) * p.components_per_client();
  auto [gram, rhs] = detail::gram_and_rhs(p);
  Eigen::MatrixXd lhs = gram / total;
  lhs.diagonal().array() += p.lambda();
  const Vec x = Eigen::LDLT<Eigen::MatrixXd>(lhs).solve(rhs / total);
  const double resid = (lhs * x - rhs / total).norm();
  if (!x.allFinite() || resid > 1e-8 * (1.0 + rhs.norm() / total))
    throw std::runtime_error("exact_solution: regularized Gram is not positive definite");
  return x;
}

inline SmoothnessConstants smoothness_constants(const FederatedProblem& p) {
  double max_row = 0.0;
  for (int m = 0; m < p.num_clients(); ++m) {
    const auto& c = p.client(m);
    for (int i = 0; i < p.components_per_client(); ++i)
      max_row = std::max(max_row, c.features.row(i).squaredNorm());
  }
  auto [gram, rhs] = detail::gram_and_rhs(p);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("smoothness_constants: eigensolve failed");
  const double rho_min = std::max(0.0, es.eigenvalues().minCoeff());

  SmoothnessConstants s;
  s.L_max = max_row + p.lambda();
  s.L = s.L_max;
  const double total = static_cast<double>(p.num_clients()) * p.components_per_client();
  s.mu = rho_min / total + p.lambda();
  s.mu_per_client = rho_min / p.components_per_client() + p.lambda();
  s.kappa = s.L / s.mu;
  return s;
}

}  // namespace fedshuffle
