#pragma once

#include <cstdint>
#include <exception>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "compressor.hpp"
#include "problem.hpp"
#include "rng.hpp"
#include "shuffle.hpp"
#include "theory.hpp"

// Federated outer loops: clients run one reshuffled epoch locally, compress
// what they send back, and the server averages. Three communication schemes
// share one code path:
//
//   fed_rr      no compression at all (identity enforced)
//   fed_crr     compress the local epoch output directly
//   fed_crr_vr  compress the difference to a learned shift h_m (DIANA style)
//   fed_crr_vr2 as fed_crr_vr, with variance-reduced local steps anchored
//               at the current server iterate
//
// Every run is a pure function of (problem, compressor, config): client
// streams are keyed by (seed, epoch, client, purpose) and the server reduces
// client messages in index order, so the thread count never changes a bit of
// the output.

namespace fedshuffle {

enum class Algorithm { fed_rr, fed_crr, fed_crr_vr, fed_crr_vr2 };

inline const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::fed_rr: return "fed_rr";
    case Algorithm::fed_crr: return "fed_crr";
    case Algorithm::fed_crr_vr: return "fed_crr_vr";
    case Algorithm::fed_crr_vr2: return "fed_crr_vr2";
  }
  return "unknown";
}

inline std::optional<Algorithm> algorithm_from_name(std::string_view name) {
  if (name == "fed_rr") return Algorithm::fed_rr;
  if (name == "fed_crr") return Algorithm::fed_crr;
  if (name == "fed_crr_vr") return Algorithm::fed_crr_vr;
  if (name == "fed_crr_vr2") return Algorithm::fed_crr_vr2;
  return std::nullopt;
}

inline bool uses_variance_reduction(Algorithm a) {
  return a == Algorithm::fed_crr_vr || a == Algorithm::fed_crr_vr2;
}

struct RunConfig {
  Algorithm algorithm = Algorithm::fed_crr;
  ShuffleMode shuffle = ShuffleMode::random_reshuffle;
  double gamma = 0.1;
  double alpha = 1.0;  // shift learning rate, variance-reduced schemes only
  double eta = 1.0;    // server mixing weight, variance-reduced schemes only
  int epochs = 100;
  std::uint64_t seed = 0;
  int threads = 1;
  std::optional<Vec> x0;  // defaults to the origin
};

struct EpochRecord {
  int epoch = 0;
  std::uint64_t cum_bits = 0;  // uplink only, summed over clients and epochs
  double sq_dist = 0.0;
  double f_gap = 0.0;
  std::optional<double> lyapunov;  // filled for variance-reduced runs
};

struct Trace {
  std::vector<EpochRecord> records;        // epochs 0..T, truncated on failure
  std::vector<std::vector<std::uint64_t>> perm_hashes;  // [epoch][client]
  bool terminated_early = false;
  std::string reason;
};

/// Order-independent fingerprint would defeat the point: this hash is
/// sensitive to the order of entries so reshuffling shows up in the trace.
inline std::uint64_t hash_permutation(const Permutation& perm) {
  std::uint64_t h = 0x9E3779B97F4A7C15ull ^ static_cast<std::uint64_t>(perm.size());
  for (int v : perm) h = detail::mix64(h + static_cast<std::uint64_t>(v) + 0x2545F4914F6CDD1Dull);
  return h;
}

namespace detail {

/// Runs fn(m) for m in [0, clients) on up to `threads` workers. Each worker
/// owns a contiguous block in increasing order, so the lowest-indexed failure
/// is rethrown no matter how many workers run; a serial run fails identically.
template <typename F>
void parallel_for_clients(int clients, int threads, F&& fn) {
  const int workers = std::max(1, std::min(threads, clients));
  if (workers == 1) {
    for (int m = 0; m < clients; ++m) fn(m);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const int base = clients / workers;
  const int extra = clients % workers;
  int start = 0;
  for (int tid = 0; tid < workers; ++tid) {
    const int lo = start;
    const int hi = lo + base + (tid < extra ? 1 : 0);
    start = hi;
    pool.emplace_back([&fn, &errors, lo, hi, tid] {
      try {
        for (int m = lo; m < hi; ++m) fn(m);
      } catch (...) {
        errors[tid] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline void validate_run_config(const FederatedProblem& p, const Compressor& comp,
                                const RunConfig& cfg) {
  if (!(cfg.gamma > 0.0) || !std::isfinite(cfg.gamma))
    throw std::invalid_argument("run: stepsize must be positive and finite");
  if (!(cfg.alpha > 0.0) || cfg.alpha > 1.0)
    throw std::invalid_argument("run: alpha must lie in (0, 1]");
  if (!(cfg.eta > 0.0) || cfg.eta > 1.0)
    throw std::invalid_argument("run: eta must lie in (0, 1]");
  if (cfg.epochs < 0) throw std::invalid_argument("run: epoch count must be nonnegative");
  if (cfg.threads < 1) throw std::invalid_argument("run: thread count must be positive");
  if (comp.dim() != p.dim())
    throw std::invalid_argument("run: compressor dimension " + std::to_string(comp.dim()) +
                                " does not match problem dimension " + std::to_string(p.dim()));
  if (cfg.algorithm == Algorithm::fed_rr && comp.kind() != CompressorKind::identity)
    throw std::invalid_argument("run: fed_rr does not compress; use the identity compressor");
  if (cfg.x0 && cfg.x0->size() != p.dim())
    throw std::invalid_argument("run: x0 dimension does not match the problem");
}

}  // namespace detail

inline Trace run_federated(const FederatedProblem& p, const Compressor& comp,
                           const RunConfig& cfg) {
  detail::validate_run_config(p, comp, cfg);
  const int M = p.num_clients();
  const int n = p.components_per_client();
  const int d = p.dim();
  const bool vr = uses_variance_reduction(cfg.algorithm);
  const double omega = comp.omega();

  Vec x = cfg.x0 ? *cfg.x0 : Vec::Zero(d);
  std::vector<Vec> h;
  if (vr) h.assign(M, Vec::Zero(d));

  const auto limits = shuffled_limits(p, cfg.gamma);
  const double f_star = objective_value(p, limits.x_star);
  const std::uint64_t bits_per_epoch =
      static_cast<std::uint64_t>(M) * static_cast<std::uint64_t>(comp.uplink_bits());

  Trace trace;
  trace.records.reserve(cfg.epochs + 1);
  auto record = [&](int t) {
    EpochRecord r;
    r.epoch = t;
    r.cum_bits = static_cast<std::uint64_t>(t) * bits_per_epoch;
    r.sq_dist = (x - limits.x_star).squaredNorm();
    r.f_gap = objective_value(p, x) - f_star;
    if (vr) r.lyapunov = lyapunov(x, h, limits, cfg.alpha, cfg.eta, omega, M);
    trace.records.push_back(std::move(r));
  };
  record(0);

  std::vector<Vec> message(M);
  std::vector<std::uint64_t> hashes(M);
  for (int t = 0; t < cfg.epochs; ++t) {
    auto client_work = [&](int m) {
      const std::uint64_t perm_epoch =
          cfg.shuffle == ShuffleMode::shuffle_once ? 0 : static_cast<std::uint64_t>(t);
      auto prng = substream(cfg.seed, perm_epoch, m, StreamPurpose::permutation);
      const Permutation perm = sample_permutation(prng, n);
      hashes[m] = hash_permutation(perm);
      const Vec xn = cfg.algorithm == Algorithm::fed_crr_vr2
                         ? local_epoch_vr(p, m, x, x, perm, cfg.gamma)
                         : local_epoch_plain(p, m, x, perm, cfg.gamma);
      auto crng = substream(cfg.seed, t, m, StreamPurpose::compression);
      if (vr) {
        const Vec v = xn - h[m];
        const Vec q = comp.compress(v, crng);
        // Algebraically h_m + q; written so the identity compressor collapses
        // the correction to exact zero and the message to xn, bit for bit.
        message[m] = xn - (v - q);
        h[m] += cfg.alpha * q;
      } else {
        message[m] = comp.compress(xn, crng);
      }
    };
    try {
      detail::parallel_for_clients(M, cfg.threads, client_work);
    } catch (const DivergenceError& e) {
      trace.terminated_early = true;
      trace.reason = e.what();
      return trace;
    }
    Vec sum = Vec::Zero(d);
    for (int m = 0; m < M; ++m) sum += message[m];
    const Vec avg = sum / M;
    // eta = 1 must reproduce the plain average bit for bit.
    if (!vr || cfg.eta == 1.0)
      x = avg;
    else
      x = (1.0 - cfg.eta) * x + cfg.eta * avg;
    trace.perm_hashes.push_back(hashes);
    record(t + 1);
  }
  return trace;
}

}  // namespace fedshuffle
