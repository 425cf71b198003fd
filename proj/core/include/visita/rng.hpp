#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace visita {

/// Counter-based generator: the i-th draw is a pure function of (seed, i),
/// so streams are reproducible across runs and platforms. Distributions are
/// implemented here rather than through <random>, whose distribution
/// algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; consumes two draws per call.
  double normal() noexcept;
  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n) noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Independent generator derived from this one's seed and a stream id.
  Rng derive(std::uint64_t stream) const noexcept;

  template <class T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = below(i);
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace visita
