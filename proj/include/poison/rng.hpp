#pragma once

#include <cstdint>
#include <vector>

namespace poison {

/// Counter-based generator: output i is splitmix64(seed, i). Identical streams on
/// every platform, and any stream can be forked deterministically by key.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()();

  /// Uniform double in [0, 1).
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);
  /// Standard normal draw (Box-Muller, no caching so the stream position is predictable).
  double normal();
  /// Independent generator derived from this one's seed and a key.
  CounterRng fork(std::uint64_t key) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace poison
