#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace bitforge {

/// Seeded generator with platform-independent derived distributions.
/// std::mt19937_64's raw stream is fully specified by the standard; the
/// standard distributions are not, so the conversions live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Mixes a base seed with a stream label so independent consumers get
/// unrelated generators.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream, std::uint64_t index = 0);

/// FNV-1a, 64-bit.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                      std::uint64_t state = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64(std::string_view text, std::uint64_t state = 0xcbf29ce484222325ull);

}  // namespace bitforge
