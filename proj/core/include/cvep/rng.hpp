#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace cvep {

/// splitmix64 finalizer; used to derive independent seed streams from a
/// master seed plus tags. Nothing here depends on library-defined
/// distributions, so sequences are reproducible across standard libraries.
std::uint64_t splitmix64(std::uint64_t x);

/// Derives a child seed from (seed, tag). Chain calls for more dimensions.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

/// Deterministic random stream: mt19937_64 engine with self-contained
/// uniform, Gaussian (Box-Muller) and Fisher-Yates shuffle implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal deviate via Box-Muller.
  double gaussian();

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t integer(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(integer(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cvep
