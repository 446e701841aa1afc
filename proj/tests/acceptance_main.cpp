// Acceptance gate: twelve end-to-end checks with pinned tolerances. Each
// prints exactly one PASS/FAIL line; the exit code is nonzero if any fail.
// Usage: fedshuffle_acceptance <cli-binary> <libsvm-fixture-dir> [scratch-dir]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fedshuffle/algorithms.hpp>
#include <fedshuffle/compressor.hpp>
#include <fedshuffle/data_io.hpp>
#include <fedshuffle/problem.hpp>
#include <fedshuffle/rng.hpp>
#include <fedshuffle/shuffle.hpp>
#include <fedshuffle/theory.hpp>

namespace fs = std::filesystem;
using namespace fedshuffle;

namespace {

struct Outcome {
  bool ok = true;
  std::string note;
};

std::string strf(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return std::string(buf);
}

Vec gaussian_vec(RngStream& rng, int d, double scale = 1.0) {
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = scale * rng.next_normal();
  return v;
}

struct MeanSe {
  double mean;
  double se;
};

MeanSe mean_se(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "<unreadable:" + path + ">";
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// 1. RandK moments by exhaustive subset enumeration, plus draw consistency.
Outcome criterion_randk_moments() {
  Outcome out;
  const int d = 6;
  auto rng = substream(901, 0, 0, StreamPurpose::data);
  double worst = 0.0;
  for (int k = 1; k <= d; ++k) {
    std::vector<unsigned> subsets;
    for (unsigned mask = 0; mask < (1u << d); ++mask)
      if (__builtin_popcount(mask) == k) subsets.push_back(mask);
    const double scale = static_cast<double>(d) / k;
    for (int rep = 0; rep < 20; ++rep) {
      const Vec x = gaussian_vec(rng, d);
      Vec mean = Vec::Zero(d);
      double second = 0.0;
      for (unsigned mask : subsets) {
        Vec c = Vec::Zero(d);
        for (int i = 0; i < d; ++i)
          if (mask & (1u << i)) c[i] = scale * x[i];
        mean += c;
        second += c.squaredNorm();
      }
      mean /= static_cast<double>(subsets.size());
      second /= static_cast<double>(subsets.size());
      const double rel_mean = (mean - x).norm() / x.norm();
      const double rel_second =
          std::abs(second - scale * x.squaredNorm()) / (scale * x.squaredNorm());
      worst = std::max({worst, rel_mean, rel_second});
    }
    // Library draws must live on the enumerated support: exactly k kept
    // coordinates, each scaled by d/k bit for bit.
    auto crng = substream(902, static_cast<std::uint64_t>(k), 0, StreamPurpose::compression);
    const auto comp = Compressor::rand_k(k, d);
    const Vec probe = gaussian_vec(rng, d);
    for (int rep = 0; rep < 500 && out.ok; ++rep) {
      const Vec c = comp.compress(probe, crng);
      int nz = 0;
      for (int i = 0; i < d; ++i) {
        if (c[i] == 0.0) continue;
        ++nz;
        if (c[i] != scale * probe[i]) {
          out.ok = false;
          out.note = strf("k=%d draw breaks the d/k scaling", k);
        }
      }
      if (nz != k) {
        out.ok = false;
        out.note = strf("k=%d draw kept %d coordinates", k, nz);
      }
    }
  }
  if (worst > 1e-12) {
    out.ok = false;
    out.note = strf("moment identity off by %.3e relative", worst);
  }
  if (out.ok) out.note = strf("max relative moment error %.2e over k=1..6", worst);
  return out;
}

// 2. Component gradients against central finite differences.
Outcome criterion_gradient_fd() {
  Outcome out;
  const auto p = generate_synthetic(912, 4, 10, 8, 0.3, 0.7, 0.25);
  auto rng = substream(913, 0, 0, StreamPurpose::data);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int m = static_cast<int>(rng.next_below(4));
    const int i = static_cast<int>(rng.next_below(10));
    const Vec x = gaussian_vec(rng, 8);
    const Vec g = component_grad(p, m, i, x);
    const double h = 1e-6 * (1.0 + x.norm());
    Vec fd(8);
    for (int j = 0; j < 8; ++j) {
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      fd[j] = (component_value(p, m, i, xp) - component_value(p, m, i, xm)) / (2.0 * h);
    }
    worst = std::max(worst, (fd - g).norm() / (1.0 + g.norm()));
  }
  out.ok = worst <= 1e-5;
  out.note = strf("max relative gradient error %.2e", worst);
  return out;
}

// 3. The average of the per-client epoch limit points recovers the optimum.
Outcome criterion_limit_average() {
  Outcome out;
  auto rng = substream(920, 0, 0, StreamPurpose::data);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int M = 1 + static_cast<int>(rng.next_below(5));
    const int n = 1 + static_cast<int>(rng.next_below(8));
    const int d = 2 + static_cast<int>(rng.next_below(5));
    const double lambda = 0.05 + rng.next_double();
    const double gamma = 0.01 + 0.5 * rng.next_double();
    const auto p = generate_synthetic(930 + rep, M, n, d, 0.4, 0.8, lambda);
    std::vector<Permutation> perms(M);
    for (int m = 0; m < M; ++m) {
      auto prng = substream(940 + rep, 0, static_cast<std::uint64_t>(m),
                            StreamPurpose::permutation);
      perms[m] = sample_permutation(prng, n);
    }
    const auto lim = shuffled_limits(p, gamma, perms);
    Vec avg = Vec::Zero(d);
    for (const Vec& v : lim.per_client) avg += v;
    avg /= static_cast<double>(M);
    worst = std::max(worst, (avg - lim.x_star).norm() / (1.0 + lim.x_star.norm()));
  }
  out.ok = worst <= 1e-9;
  out.note = strf("max relative identity error %.2e over 20 draws", worst);
  return out;
}

// 4. Exact shuffling radius never exceeds the closed-form bound; strictly
// smaller on at least one heterogeneous fixture.
Outcome criterion_radius_bound() {
  Outcome out;
  double worst_ratio = 0.0;
  bool strict = false;
  for (int j = 0; j < 10; ++j) {
    const int M = 1 + (j % 4);
    const int n = 2 + (j % 5);
    const int d = 2 + (j % 4);
    const double het = (j == 0) ? 0.0 : 0.5 + 0.3 * (j % 3);
    const auto p = generate_synthetic(950 + static_cast<std::uint64_t>(j), M, n, d, 0.5, het,
                                      0.2 + 0.1 * j);
    const auto exact = shuffling_radius_exact(p, 0.1);
    if (!exact) {
      out.ok = false;
      out.note = strf("fixture %d refused exact enumeration", j);
      return out;
    }
    const double bound = shuffling_radius_bound(p, RadiusBoundMode::lifted);
    if (*exact > bound * (1.0 + 1e-12)) {
      out.ok = false;
      out.note = strf("fixture %d: exact %.6e above bound %.6e", j, *exact, bound);
      return out;
    }
    if (bound > 0.0) worst_ratio = std::max(worst_ratio, *exact / bound);
    if (M >= 2 && het > 0.0 && *exact < bound * (1.0 - 1e-9)) strict = true;
  }
  if (!strict) {
    out.ok = false;
    out.note = "no heterogeneous fixture came in strictly below the bound";
    return out;
  }
  out.note = strf("max exact/bound ratio %.3f, strict gap observed", worst_ratio);
  return out;
}

// 5. Variance reduction with alpha = eta = 1 and no compression collapses to
// the plain method bit for bit; with one client the plain method is
// single-machine random reshuffling.
Outcome criterion_collapse() {
  Outcome out;
  const auto p = generate_synthetic(905, 3, 6, 4, 0.3, 0.6, 0.7);
  const auto id4 = Compressor::identity(4);
  RunConfig a;
  a.algorithm = Algorithm::fed_crr;
  a.gamma = 0.05;
  a.epochs = 50;
  a.seed = 77;
  RunConfig b = a;
  b.algorithm = Algorithm::fed_crr_vr;
  b.alpha = 1.0;
  b.eta = 1.0;
  const Trace ta = run_federated(p, id4, a);
  const Trace tb = run_federated(p, id4, b);
  if (ta.records.size() != tb.records.size() || ta.perm_hashes != tb.perm_hashes) {
    out.ok = false;
    out.note = "trace shapes differ between plain and collapsed runs";
    return out;
  }
  for (std::size_t t = 0; t < ta.records.size(); ++t) {
    const auto& ra = ta.records[t];
    const auto& rb = tb.records[t];
    if (ra.epoch != rb.epoch || ra.cum_bits != rb.cum_bits || ra.sq_dist != rb.sq_dist ||
        ra.f_gap != rb.f_gap) {
      out.ok = false;
      out.note = strf("collapse differs at epoch %zu", t);
      return out;
    }
  }

  const auto q = generate_synthetic(906, 1, 8, 3, 0.5, 0.0, 0.4);
  RunConfig c;
  c.algorithm = Algorithm::fed_crr;
  c.gamma = 0.07;
  c.epochs = 50;
  c.seed = 31;
  const Trace tc = run_federated(q, Compressor::identity(3), c);
  const auto lim = shuffled_limits(q, c.gamma);
  const double f_star = objective_value(q, lim.x_star);
  Vec x = Vec::Zero(3);
  Vec g(3);
  for (int t = 0; t <= 50; ++t) {
    const auto& r = tc.records[static_cast<std::size_t>(t)];
    if (r.sq_dist != (x - lim.x_star).squaredNorm() ||
        r.f_gap != objective_value(q, x) - f_star) {
      out.ok = false;
      out.note = strf("single-machine replay differs at epoch %d", t);
      return out;
    }
    if (t == 50) break;
    auto prng = substream(31, static_cast<std::uint64_t>(t), 0, StreamPurpose::permutation);
    const Permutation perm = sample_permutation(prng, 8);
    if (tc.perm_hashes[static_cast<std::size_t>(t)][0] != hash_permutation(perm)) {
      out.ok = false;
      out.note = strf("permutation stream differs at epoch %d", t);
      return out;
    }
    for (int i = 0; i < 8; ++i) {
      component_grad(q, 0, perm[i], x, g);
      x -= c.gamma * g;
    }
  }
  out.note = "both collapses bitwise over 50 epochs";
  return out;
}

struct PlateauData {
  std::vector<double> plain_final;
};

// 6. Compressed runs settle into the predicted neighborhood: the tail mean
// sits under the bound within Monte Carlo error and is a genuine plateau.
Outcome criterion_plateau(const FederatedProblem& p, const Compressor& comp, double gamma,
                          PlateauData& shared) {
  Outcome out;
  const int T = 400, S = 200, tail_from = 351;
  std::vector<double> tails;
  tails.reserve(S);
  shared.plain_final.clear();
  for (int s = 0; s < S; ++s) {
    RunConfig cfg;
    cfg.algorithm = Algorithm::fed_crr;
    cfg.gamma = gamma;
    cfg.epochs = T;
    cfg.seed = 4000 + static_cast<std::uint64_t>(s);
    const Trace tr = run_federated(p, comp, cfg);
    if (tr.terminated_early) {
      out.ok = false;
      out.note = strf("diverged at seed %d: %s", s, tr.reason.c_str());
      return out;
    }
    double tail = 0.0;
    for (int t = tail_from; t <= T; ++t) tail += tr.records[static_cast<std::size_t>(t)].sq_dist;
    tails.push_back(tail / (T - tail_from + 1));
    shared.plain_final.push_back(tr.records[static_cast<std::size_t>(T)].sq_dist);
  }
  const auto ms = mean_se(tails);
  const double bound =
      theorem_neighborhoods(p, MethodParams{gamma, 1.0, 1.0, comp.omega()}).thm2;
  const bool under = ms.mean <= bound + 4.0 * ms.se;
  const bool genuine = ms.mean >= 1e-3 * bound;
  out.ok = under && genuine;
  out.note = strf("tail mean %.3e (se %.1e) vs neighborhood %.3e%s", ms.mean, ms.se, bound,
                  out.ok ? "" : under ? "; plateau suspiciously low" : "; bound exceeded");
  return out;
}

// 7. At matched communication, variance reduction ends closer to the optimum
// with 95 percent confidence (paired over seeds).
Outcome criterion_vr_beats_plain(const FederatedProblem& p, const Compressor& comp, double gamma,
                                 const PlateauData& shared) {
  Outcome out;
  const int T = 400, S = 200;
  if (shared.plain_final.size() != static_cast<std::size_t>(S)) {
    out.ok = false;
    out.note = "plain-run finals missing (criterion 6 did not complete)";
    return out;
  }
  const double omega = comp.omega();
  const double alpha = 1.0 / (omega + 1.0);
  const auto v = validate_parameters(p, MethodParams{gamma, alpha, 1.0, omega});
  const double eta = std::min(1.0, v.thm3_eta.rhs);
  std::vector<double> diff(S);
  double vr_mean = 0.0;
  for (int s = 0; s < S; ++s) {
    RunConfig cfg;
    cfg.algorithm = Algorithm::fed_crr_vr;
    cfg.gamma = gamma;
    cfg.alpha = alpha;
    cfg.eta = eta;
    cfg.epochs = T;
    cfg.seed = 4000 + static_cast<std::uint64_t>(s);
    const Trace tr = run_federated(p, comp, cfg);
    if (tr.terminated_early) {
      out.ok = false;
      out.note = strf("variance-reduced run diverged at seed %d", s);
      return out;
    }
    const double fin = tr.records[static_cast<std::size_t>(T)].sq_dist;
    vr_mean += fin / S;
    diff[static_cast<std::size_t>(s)] = shared.plain_final[static_cast<std::size_t>(s)] - fin;
  }
  const auto ms = mean_se(diff);
  const double z = ms.mean / ms.se;
  out.ok = ms.mean > 0.0 && z >= 1.645;
  out.note = strf("paired improvement %.3e, z = %.1f, vr mean %.3e", ms.mean, z, vr_mean);
  return out;
}

// 8. With every Theorem-4 flag satisfied on a homogeneous problem, the doubly
// variance-reduced method converges linearly to tolerance.
Outcome criterion_linear_convergence() {
  Outcome out;
  const auto p = generate_synthetic(808, 4, 100, 5, 0.0, 0.0, 20.0);
  const auto comp = Compressor::rand_k(2, 5);
  const double omega = comp.omega();
  const auto s = smoothness_constants(p);
  const double alpha = 1.0 / (omega + 1.0);
  const double gamma =
      validate_parameters(p, MethodParams{1e-6, alpha, 0.5, omega}).thm4_gamma.rhs;
  const double eta =
      std::min(1.0, validate_parameters(p, MethodParams{gamma, alpha, 0.5, omega}).thm4_eta.rhs);
  const auto v = validate_parameters(p, MethodParams{gamma, alpha, eta, omega});
  if (!v.thm4_ok()) {
    out.ok = false;
    out.note = strf("flags: gamma %d alpha %d eta %d window %d", v.thm4_gamma.holds,
                    v.thm4_alpha.holds, v.thm4_eta.holds, v.thm4_window.holds);
    return out;
  }
  const double n = p.components_per_client();
  const double rho_half = std::pow(1.0 - gamma * s.mu, 0.5 * n);
  const double rate = 1.0 - 0.5 * std::min(alpha, eta * (1.0 - rho_half));
  const Vec x_star = exact_solution(p);
  const double psi0 =
      x_star.squaredNorm() * (1.0 + 4.0 * eta * eta * omega / (alpha * p.num_clients()));
  const int T =
      static_cast<int>(std::ceil(1.5 * std::log(psi0 / 1e-12) / (-std::log(rate))));

  RunConfig cfg;
  cfg.algorithm = Algorithm::fed_crr_vr2;
  cfg.gamma = gamma;
  cfg.alpha = alpha;
  cfg.eta = eta;
  cfg.epochs = T;
  cfg.seed = 99;
  const Trace tr = run_federated(p, comp, cfg);
  if (tr.terminated_early) {
    out.ok = false;
    out.note = "run diverged";
    return out;
  }
  const double fin = tr.records.back().sq_dist;

  const double start = tr.records[0].sq_dist;
  int t_begin = -1, t_end = -1;
  for (int t = 0; t <= T; ++t)
    if (tr.records[static_cast<std::size_t>(t)].sq_dist <= 0.5 * start) {
      t_begin = t;
      break;
    }
  for (int t = T; t >= 0; --t)
    if (tr.records[static_cast<std::size_t>(t)].sq_dist > 1e-11) {
      t_end = t;
      break;
    }
  if (t_begin < 0 || t_end - t_begin < 20) {
    out.ok = false;
    out.note = strf("no usable decay segment (start %.2e, final %.2e)", start, fin);
    return out;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  const int np = t_end - t_begin + 1;
  for (int t = t_begin; t <= t_end; ++t) {
    const double y = std::log(tr.records[static_cast<std::size_t>(t)].sq_dist);
    sx += t;
    sy += y;
    sxx += static_cast<double>(t) * t;
    sxy += t * y;
    syy += y * y;
  }
  const double cov = sxy - sx * sy / np;
  const double vx = sxx - sx * sx / np;
  const double vy = syy - sy * sy / np;
  const double slope = cov / vx;
  const double r2 = cov * cov / (vx * vy);
  out.ok = fin <= 1e-12 && r2 >= 0.99 && slope < 0.0;
  out.note = strf("final %.1e after %d epochs, R^2 %.4f over [%d, %d]", fin, T, r2, t_begin,
                  t_end);
  return out;
}

// 9. One-step Lyapunov contraction with measured expectations, five epochs.
Outcome criterion_lyapunov_recursion(const FederatedProblem& p, const Compressor& comp,
                                     double gamma) {
  Outcome out;
  const double omega = comp.omega();
  const double alpha = 1.0 / (omega + 1.0);
  const double eta =
      std::min(1.0, validate_parameters(p, MethodParams{gamma, alpha, 1.0, omega}).thm3_eta.rhs);
  const MethodParams mp{gamma, alpha, eta, omega};
  const auto v = validate_parameters(p, mp);
  if (!v.thm3_ok()) {
    out.ok = false;
    out.note = strf("flags: gamma %d alpha %d eta %d", v.thm3_gamma.holds, v.thm3_alpha.holds,
                    v.thm3_eta.holds);
    return out;
  }
  const auto s = smoothness_constants(p);
  const double n = p.components_per_client();
  const double rho_n = std::pow(1.0 - gamma * s.mu, n);
  const double rate = 1.0 - 0.5 * std::min(alpha, eta * (1.0 - rho_n));
  const double inc = lyapunov_step_increment(p, mp);
  const int S = 1000, T = 5;
  std::vector<std::vector<double>> psi(T + 1, std::vector<double>(S));
  for (int sd = 0; sd < S; ++sd) {
    RunConfig cfg;
    cfg.algorithm = Algorithm::fed_crr_vr;
    cfg.gamma = gamma;
    cfg.alpha = alpha;
    cfg.eta = eta;
    cfg.epochs = T;
    cfg.seed = 90000 + static_cast<std::uint64_t>(sd);
    const Trace tr = run_federated(p, comp, cfg);
    if (tr.terminated_early) {
      out.ok = false;
      out.note = strf("diverged at seed %d", sd);
      return out;
    }
    for (int t = 0; t <= T; ++t)
      psi[static_cast<std::size_t>(t)][static_cast<std::size_t>(sd)] =
          *tr.records[static_cast<std::size_t>(t)].lyapunov;
  }
  double worst_margin = -1e300;
  for (int t = 0; t < T; ++t) {
    const auto a = mean_se(psi[static_cast<std::size_t>(t)]);
    const auto b = mean_se(psi[static_cast<std::size_t>(t) + 1]);
    const double rhs = rate * a.mean + inc;
    const double slack = 4.0 * std::sqrt(b.se * b.se + rate * rate * a.se * a.se);
    const double margin = (b.mean - rhs) / slack;  // must stay below 1
    worst_margin = std::max(worst_margin, margin);
    if (b.mean > rhs + slack) {
      out.ok = false;
      out.note = strf("epoch %d: mean %.6e above %.6e + slack %.1e", t + 1, b.mean, rhs, slack);
      return out;
    }
  }
  out.note = strf("factor %.4f, worst slack ratio %.2f", rate, worst_margin);
  return out;
}

// 10. Reformulated variance under 4 L^2 squared distance, zero violations.
Outcome criterion_reformulated_variance() {
  Outcome out;
  int violations = 0;
  auto rng = substream(777, 0, 0, StreamPurpose::data);
  for (int rep = 0; rep < 1000; ++rep) {
    const int M = 1 + static_cast<int>(rng.next_below(4));
    const int n = 1 + static_cast<int>(rng.next_below(6));
    const int d = 2 + static_cast<int>(rng.next_below(4));
    const double lambda = 0.05 + rng.next_double();
    const auto p = generate_synthetic(1000 + static_cast<std::uint64_t>(rep), M, n, d, 0.5,
                                      1.5 * rng.next_double(), lambda);
    const Vec x_star = exact_solution(p);
    const double L = smoothness_constants(p).L_max;
    const double scale = std::exp(-3.0 + 6.0 * rng.next_double());
    const Vec y = x_star + gaussian_vec(rng, d, scale);
    const double lhs = reformulated_variance(p, y, x_star);
    const double rhs = 4.0 * L * L * (y - x_star).squaredNorm();
    if (lhs > rhs) ++violations;
  }
  out.ok = violations == 0;
  out.note = strf("%d violations in 1000 draws", violations);
  return out;
}

// 11. Golden parser fixtures, then ten thousand byte-mutation rounds.
Outcome criterion_golden_and_fuzz(const std::string& dir) {
  Outcome out;
  {
    const auto ds = load_libsvm_file(dir + "/valid_mixed.txt");
    Mat X(4, 3);
    X << 2, 0, -0.5, 0.5, -0.25, 0, 0, 0, 0, 0, 4, 0;
    Vec y(4);
    y << 1.5, 1, 3.5, 0;
    if (ds.features.rows() != 4 || ds.features.cols() != 3 ||
        !(ds.features.array() == X.array()).all() || !(ds.targets.array() == y.array()).all()) {
      out.ok = false;
      out.note = "valid_mixed.txt parsed to the wrong dataset";
      return out;
    }
  }
  {
    const auto ds = load_libsvm_file(dir + "/valid_precision.txt");
    Mat X(3, 2);
    X << 0.30000000000000004, 1e-300, 123456789.12345679, 0, 0, 100;
    Vec y(3);
    y << 0.1, -0.1, 2;
    if (ds.features.rows() != 3 || ds.features.cols() != 2 ||
        !(ds.features.array() == X.array()).all() || !(ds.targets.array() == y.array()).all()) {
      out.ok = false;
      out.note = "valid_precision.txt lost digits";
      return out;
    }
  }
  struct Expected {
    const char* file;
    int line;
    int col;
    const char* fragment;
    std::optional<int> dim_override;
  };
  const Expected table[] = {
      {"err_target_malformed.txt", 1, 1, "malformed target value", {}},
      {"err_target_nonfinite.txt", 1, 1, "nonfinite target value", {}},
      {"err_missing_colon.txt", 1, 3, "missing ':' separator", {}},
      {"err_index_malformed.txt", 1, 3, "malformed component index", {}},
      {"err_index_zero.txt", 2, 3, "feature index must be at least 1", {}},
      {"err_index_order.txt", 1, 11, "strictly increasing", {}},
      {"err_index_cap.txt", 1, 3, "exceeds the supported maximum", {}},
      {"err_index_declared.txt", 1, 3, "exceeds the declared dimension 3", 3},
      {"err_value_malformed.txt", 1, 5, "malformed feature value", {}},
      {"err_value_nonfinite.txt", 1, 5, "nonfinite feature value", {}},
  };
  for (const auto& e : table) {
    bool raised = false;
    try {
      load_libsvm_file(dir + "/" + e.file, e.dim_override);
    } catch (const ParseError& pe) {
      raised = true;
      if (pe.line() != e.line || pe.col() != e.col ||
          std::strstr(pe.what(), e.fragment) == nullptr) {
        out.ok = false;
        out.note = strf("%s: got \"%s\"", e.file, pe.what());
        return out;
      }
    }
    if (!raised) {
      out.ok = false;
      out.note = strf("%s parsed without an error", e.file);
      return out;
    }
  }

  std::ostringstream base_os;
  serialize_libsvm(base_os, generate_synthetic_raw(1111, 8, 5, 0.4));
  const std::string base = base_os.str();
  auto rng = substream(779, 0, 0, StreamPurpose::data);
  int failures = 0;
  std::string first;
  for (int it = 0; it < 10000; ++it) {
    std::string s = base;
    const int edits = 1 + static_cast<int>(rng.next_below(4));
    for (int e = 0; e < edits && !s.empty(); ++e) {
      const auto pos = static_cast<std::string::size_type>(rng.next_below(s.size()));
      const auto op = rng.next_below(100);
      const char b = static_cast<char>(rng.next_below(256));
      if (op < 70)
        s[pos] = b;
      else if (op < 85)
        s.insert(s.begin() + static_cast<std::ptrdiff_t>(pos), b);
      else
        s.erase(s.begin() + static_cast<std::ptrdiff_t>(pos));
    }
    try {
      std::istringstream iss(s);
      const auto ds = parse_libsvm(iss);
      if (!ds.features.allFinite() || ds.features.rows() != ds.targets.size()) {
        ++failures;
        if (first.empty()) first = "parsed dataset breaks invariants";
      }
    } catch (const ParseError&) {
      // rejected inputs are the expected outcome
    } catch (const std::exception& ex) {
      ++failures;
      if (first.empty()) first = ex.what();
    }
  }
  out.ok = failures == 0;
  out.note = failures == 0
                 ? "12 fixtures exact, 10000 mutation rounds clean"
                 : strf("%d fuzz failures, first: %s", failures, first.c_str());
  return out;
}

// 12. The command line tool is deterministic: reruns and thread-count changes
// produce byte-identical outputs; bad configs and divergence use fixed codes.
Outcome criterion_cli_determinism(const std::string& cli, const std::string& scratch) {
  Outcome out;
  std::error_code ec;
  fs::remove_all(scratch, ec);
  fs::create_directories(scratch);
  auto shell = [](const std::string& cmd) {
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  };
  auto write_text = [](const std::string& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
  };

  const std::string cfg_path = scratch + "/run.json";
  write_text(cfg_path, std::string("{\n") +
                           "  \"problem\": {\"type\": \"synthetic\", \"clients\": 6, "
                           "\"components\": 5, \"dim\": 4,\n"
                           "              \"noise\": 0.3, \"heterogeneity\": 0.8, "
                           "\"lambda\": 0.5, \"seed\": 3},\n"
                           "  \"run\": {\"algorithm\": \"fed_crr_vr\", \"gamma\": 0.02, "
                           "\"alpha\": 0.25, \"eta\": 0.9,\n"
                           "          \"epochs\": 25, \"compressor\": {\"kind\": \"rand_k\", "
                           "\"k\": 2}, \"seed\": 7},\n"
                           "  \"repeats\": 2,\n  \"threads\": 1,\n  \"output_prefix\": \"" +
                           scratch + "/a1\"\n}\n");
  const int r1 = shell(cli + " run --config " + cfg_path + " --quiet");
  const int r2 =
      shell(cli + " run --config " + cfg_path + " --output-prefix " + scratch + "/a2 --quiet");
  const int r3 = shell(cli + " run --config " + cfg_path + " --output-prefix " + scratch +
                       "/a3 --threads 4 --quiet");
  if (r1 != 0 || r2 != 0 || r3 != 0) {
    out.ok = false;
    out.note = strf("run exits: %d, %d, %d", r1, r2, r3);
    return out;
  }
  const std::string t1 = read_bytes(scratch + "/a1_trace.csv");
  if (t1 != read_bytes(scratch + "/a2_trace.csv")) {
    out.ok = false;
    out.note = "rerun changed the trace bytes";
    return out;
  }
  if (t1 != read_bytes(scratch + "/a3_trace.csv")) {
    out.ok = false;
    out.note = "thread count changed the trace bytes";
    return out;
  }
  if (read_bytes(scratch + "/a1_theory.json") != read_bytes(scratch + "/a2_theory.json")) {
    out.ok = false;
    out.note = "rerun changed the theory bytes";
    return out;
  }

  const std::string bad_path = scratch + "/bad.json";
  write_text(bad_path, "{\"problem\": {\"type\": \"synthetic\", \"clients\": 2, "
                       "\"components\": 2, \"dim\": 2}, \"runs\": {}}\n");
  const int rb = shell(cli + " run --config " + bad_path + " --quiet 2>/dev/null");
  if (rb != 2) {
    out.ok = false;
    out.note = strf("bad config exited %d, expected 2", rb);
    return out;
  }

  const std::string div_path = scratch + "/div.json";
  write_text(div_path, std::string("{\n") +
                           "  \"problem\": {\"type\": \"synthetic\", \"clients\": 2, "
                           "\"components\": 3, \"dim\": 2, \"lambda\": 0.5, \"seed\": 1},\n"
                           "  \"run\": {\"algorithm\": \"fed_crr\", \"gamma\": 1e60, "
                           "\"epochs\": 5, \"seed\": 2},\n"
                           "  \"output_prefix\": \"" +
                           scratch + "/a4\"\n}\n");
  const int rd = shell(cli + " run --config " + div_path + " --quiet 2>/dev/null");
  if (rd != 3) {
    out.ok = false;
    out.note = strf("divergent config exited %d, expected 3", rd);
    return out;
  }
  out.note = "byte-identical across rerun and threads; exit codes 0/2/3";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: %s <cli-binary> <libsvm-fixture-dir> [scratch-dir]\n", argv[0]);
    return 2;
  }
  const std::string cli = argv[1];
  const std::string data_dir = argv[2];
  const std::string scratch = argc > 3 ? argv[3] : "acceptance_scratch";

  const RawDataset raw = generate_synthetic_raw(20240817, 200, 10, 0.5);
  const PartitionResult part = partition(raw, 10, PartitionScheme::sorted_by_target, 0, 5.0);
  const FederatedProblem& p1 = part.problem;
  const Compressor k2 = Compressor::rand_k(2, 10);
  const double gamma1 = 0.5 / smoothness_constants(p1).L_max;
  PlateauData shared;

  struct Check {
    int id;
    const char* what;
    std::optional<double> cap_seconds;
    std::function<Outcome()> fn;
  };
  const std::vector<Check> checks = {
      {1, "RandK moments by exhaustive subset enumeration", 1.0,
       [] { return criterion_randk_moments(); }},
      {2, "component gradients against central differences", 1.0,
       [] { return criterion_gradient_fd(); }},
      {3, "epoch limit points average to the optimum", {}, [] { return criterion_limit_average(); }},
      {4, "exact shuffling radius under the closed-form bound", 30.0,
       [] { return criterion_radius_bound(); }},
      {5, "variance-reduced runs collapse to the plain method", {},
       [] { return criterion_collapse(); }},
      {6, "compressed plateau inside the predicted neighborhood", 120.0,
       [&] { return criterion_plateau(p1, k2, gamma1, shared); }},
      {7, "variance reduction wins at matched communication", {},
       [&] { return criterion_vr_beats_plain(p1, k2, gamma1, shared); }},
      {8, "linear convergence under the full Theorem-4 flag set", 120.0,
       [] { return criterion_linear_convergence(); }},
      {9, "one-step Lyapunov contraction with measured expectations", {},
       [&] { return criterion_lyapunov_recursion(p1, k2, gamma1); }},
      {10, "reformulated variance under the 4 L^2 distance bound", {},
       [] { return criterion_reformulated_variance(); }},
      {11, "golden parser fixtures and byte-mutation fuzzing", {},
       [&] { return criterion_golden_and_fuzz(data_dir); }},
      {12, "command line determinism and exit codes", {},
       [&] { return criterion_cli_determinism(cli, scratch); }},
  };

  int failures = 0;
  for (const auto& c : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out.ok = false;
      out.note = strf("unhandled exception: %s", e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.cap_seconds && secs > *c.cap_seconds) {
      out.ok = false;
      out.note += strf("; runtime %.1fs exceeds the %.0fs cap", secs, *c.cap_seconds);
    }
    std::printf("%s  criterion %2d  %-52s  %6.2fs  %s\n", out.ok ? "PASS" : "FAIL", c.id, c.what,
                secs, out.note.c_str());
    std::fflush(stdout);
    if (!out.ok) ++failures;
  }
  if (failures == 0)
    std::printf("all 12 criteria passed\n");
  else
    std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
