#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

#include "xrinit/common.hpp"

namespace xrinit {

namespace detail {

// splitmix64 finalizer; full-avalanche mix of a 64-bit word.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Counter-based random stream. A key identifies a stream; draws are pure
/// functions of (key, counter), so results are independent of call order
/// and safe to evaluate concurrently. Child streams are derived with sub().
class RandomKey {
 public:
  explicit RandomKey(std::uint64_t seed) : k_(detail::mix64(seed ^ 0x5bd1e995u)) {}

  RandomKey sub(std::uint64_t tag) const {
    RandomKey child(0);
    child.k_ = detail::mix64(k_ ^ detail::mix64(tag + 0x632be59bd9b4e019ull));
    return child;
  }

  /// Folds the bit pattern of a double into the key (used to make draws a
  /// pure function of floating-point inputs such as poses).
  RandomKey sub_double(double x) const { return sub(std::bit_cast<std::uint64_t>(x)); }

  std::uint64_t bits(std::uint64_t ctr) const { return detail::mix64(k_ ^ (ctr * 0xd6e8feb86659fd93ull)); }

  /// Uniform in [0, 1).
  double u01(std::uint64_t ctr) const {
    return static_cast<double>(bits(ctr) >> 11) * 0x1.0p-53;
  }

  double uniform(std::uint64_t ctr, double lo, double hi) const {
    return lo + (hi - lo) * u01(ctr);
  }

  /// Unbiased-enough integer in [0, n) via 128-bit multiply-shift.
  std::uint64_t below(std::uint64_t ctr, std::uint64_t n) const {
    using u128 = unsigned __int128;
    return static_cast<std::uint64_t>((static_cast<u128>(bits(ctr)) * n) >> 64);
  }

  /// Standard normal via Box-Muller; consumes two decorrelated sub-draws.
  double normal(std::uint64_t ctr) const {
    // u1 in (0,1] so the log never sees zero.
    double u1 = static_cast<double>((bits(ctr * 2 + 0) >> 11) + 1) * 0x1.0p-53;
    double u2 = u01(ctr * 2 + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  /// Poisson draw: Knuth product method for small lambda, rounded normal
  /// approximation above 30 (adequate for image-noise purposes).
  std::int64_t poisson(std::uint64_t ctr, double lambda) const {
    if (lambda <= 0.0) return 0;
    if (lambda < 30.0) {
      const double limit = std::exp(-lambda);
      double prod = 1.0;
      std::int64_t k = 0;
      RandomKey stream = sub(ctr);
      while (true) {
        prod *= stream.u01(static_cast<std::uint64_t>(k));
        if (prod <= limit) return k;
        ++k;
      }
    }
    const double z = normal(ctr);
    const double v = lambda + std::sqrt(lambda) * z;
    return v > 0.0 ? static_cast<std::int64_t>(std::llround(v)) : 0;
  }

  std::uint64_t raw() const { return k_; }

 private:
  std::uint64_t k_;
};

}  // namespace xrinit
