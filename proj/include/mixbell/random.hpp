#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mixbell {

/// Finalizer from the SplitMix64 generator. Used to turn (seed, stream id)
/// pairs into well-mixed child seeds so that every sampling site owns an
/// independent, reproducible stream.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for a named stream. Children of distinct streams are
/// independent for practical purposes; the derivation is pure so the same
/// (master, stream) pair always yields the same child.
inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream));
}

inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
  return split_seed(split_seed(master, a), b);
}

inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b,
                                std::uint64_t c) {
  return split_seed(split_seed(master, a, b), c);
}

inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b,
                                std::uint64_t c, std::uint64_t d) {
  return split_seed(split_seed(master, a, b, c), d);
}

/// Deterministic random source. Wraps std::mt19937_64 but converts to
/// doubles and discrete draws itself, so results do not depend on
/// implementation-defined distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t bits() { return engine_(); }

  /// Index draw by inverse CDF over `n` probabilities starting at `probs`.
  /// Falls back to the last index if rounding leaves the draw above the
  /// accumulated mass.
  int categorical(const double* probs, int n) {
    const double u = uniform();
    double cum = 0.0;
    for (int i = 0; i < n; ++i) {
      cum += probs[i];
      if (u < cum) return i;
    }
    return n - 1;
  }

  int categorical(const std::vector<double>& probs) {
    return categorical(probs.data(), static_cast<int>(probs.size()));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mixbell
