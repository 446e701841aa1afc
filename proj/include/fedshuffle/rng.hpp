#pragma once

#include <cmath>
#include <cstdint>

// Counter-based deterministic randomness. Every consumer derives its own
// stream from (seed, epoch, client, purpose), so results do not depend on
// scheduling order and are reproducible bit-for-bit across platforms.
// Standard-library distributions are deliberately avoided: their outputs
// are implementation-defined.

namespace fedshuffle {

enum class StreamPurpose : std::uint64_t {
  permutation = 1,
  compression = 2,
  data = 3,
};

namespace detail {

// SplitMix64 finalizer; also used to hash stream coordinates together.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace detail

class RngStream {
 public:
  explicit RngStream(std::uint64_t state) : state_(state) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return detail::mix64(state_);
  }

  // Uniform on [0, 1), 53 bits of precision.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on {0, ..., n-1}, unbiased via rejection. Requires n >= 1.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t threshold = (0ull - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller; consumes two words per draw.
  double next_normal() {
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::uint64_t state_;
};

// Stream for (seed, epoch t, client m, purpose). Distinct coordinates give
// statistically independent streams; identical coordinates give identical
// streams regardless of thread schedule.
inline RngStream substream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t client,
                           StreamPurpose purpose) {
  std::uint64_t h = detail::mix64(seed ^ 0xA0761D6478BD642Full);
  h = detail::mix64(h ^ (epoch * 0xE7037ED1A0B428DBull));
  h = detail::mix64(h ^ (client * 0x8EBC6AF09C88C6E3ull));
  h = detail::mix64(h ^ (static_cast<std::uint64_t>(purpose) * 0x589965CC75374CC3ull));
  return RngStream(h);
}

}  // namespace fedshuffle
