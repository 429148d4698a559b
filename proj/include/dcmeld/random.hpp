#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>

namespace dcmeld {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based random stream. The n-th output is a pure function of
/// (key, n), so streams derived from (seed, stage, iteration, particle)
/// give the same numbers regardless of which thread consumes them.
///
/// Satisfies UniformRandomBitGenerator, so it plugs into <random>
/// distributions as well as the helpers below.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit constexpr RandomStream(std::uint64_t key = 0) noexcept : key_(key) {}

  /// Derive a key from a seed and a path of identifiers.
  static constexpr RandomStream derive(std::uint64_t seed,
                                       std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t k = detail::splitmix64(seed ^ 0xD6E8FEB86659FD93ULL);
    for (std::uint64_t p : path) k = detail::splitmix64(k ^ detail::splitmix64(p + 0x632BE59BD9B4E019ULL));
    return RandomStream(k);
  }

  /// Child stream for a sub-task.
  constexpr RandomStream child(std::uint64_t id) const noexcept {
    return RandomStream(detail::splitmix64(key_ ^ detail::splitmix64(id ^ 0xA0761D6478BD642FULL)));
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    return detail::splitmix64(key_ + 0x9E3779B97F4A7C15ULL * ++counter_);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal by Box-Muller; one pair of uniforms per draw keeps the
  /// stream position independent of caching.
  double normal() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t position() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Well-known stream purposes, kept distinct so stage-level draws never
/// collide with per-particle draws.
enum class StreamPurpose : std::uint64_t {
  init = 1,
  move = 2,
  resample = 3,
  merge = 4,
  mcmc = 5,
  simulate = 6,
};

}  // namespace dcmeld
