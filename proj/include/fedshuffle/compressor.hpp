#pragma once

#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "problem.hpp"
#include "rng.hpp"

// Unbiased (omega-quantized) compression operators for uplink messages:
// E[C(x)] = x and E||C(x)||^2 <= (omega+1) ||x||^2.

namespace fedshuffle {

enum class CompressorKind { identity, rand_k };

/// A compressor bound to a fixed input dimension. Parameters are validated
/// here, at construction, never at compression time.
class Compressor {
 public:
  static Compressor identity(int dim) { return Compressor(CompressorKind::identity, dim, dim); }

  /// RandK: keep a uniformly random k-subset of coordinates, scaled by d/k.
  static Compressor rand_k(int k, int dim) { return Compressor(CompressorKind::rand_k, k, dim); }

  CompressorKind kind() const { return kind_; }
  int k() const { return k_; }
  int dim() const { return dim_; }

  /// Variance parameter: 0 for identity, d/k - 1 for RandK.
  double omega() const {
    return kind_ == CompressorKind::identity ? 0.0 : static_cast<double>(dim_) / k_ - 1.0;
  }

  /// Uplink cost of one compressed message: 64 bits per dense coordinate;
  /// RandK sends k values plus k 32-bit indices.
  long long uplink_bits() const {
    return kind_ == CompressorKind::identity ? 64ll * dim_ : static_cast<long long>(k_) * (64 + 32);
  }

  Vec compress(const Vec& x, RngStream& rng) const {
    if (x.size() != dim_) throw std::invalid_argument("compressor: vector has wrong dimension");
    if (kind_ == CompressorKind::identity) return x;
    // Partial Fisher-Yates: the first k pool entries are a uniform k-subset.
    Vec out = Vec::Zero(dim_);
    std::vector<int> pool(dim_);
    std::iota(pool.begin(), pool.end(), 0);
    const double scale = static_cast<double>(dim_) / k_;
    for (int j = 0; j < k_; ++j) {
      const int r = j + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(dim_ - j)));
      std::swap(pool[j], pool[r]);
      out[pool[j]] = scale * x[pool[j]];
    }
    return out;
  }

 private:
  Compressor(CompressorKind kind, int k, int dim) : kind_(kind), k_(k), dim_(dim) {
    if (dim < 1) throw std::invalid_argument("compressor: dimension must be positive");
    if (kind == CompressorKind::rand_k && (k < 1 || k > dim))
      throw std::invalid_argument("compressor: RandK needs 1 <= k <= d, got k=" + std::to_string(k) +
                                  " d=" + std::to_string(dim));
  }

  CompressorKind kind_;
  int k_;
  int dim_;
};

}  // namespace fedshuffle
