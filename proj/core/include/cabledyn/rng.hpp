#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cabledyn {

/// Deterministic random stream. Distributions are hand-rolled on top of
/// mt19937_64 so that sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_value_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Rejection-free modulo bias is negligible for n << 2^64; keep it simple
    // and deterministic.
    return n == 0 ? 0 : engine_() % n;
  }

  /// Standard normal via Box-Muller, one cached value.
  double normal();

  /// Derive an independent child stream from a label and index.
  Rng fork(std::string_view label, std::uint64_t index = 0) const;

  std::uint64_t seed() const { return seed_value_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_value_ = 0;
  bool have_cached_ = false;
  double cached_ = 0.0;

  friend std::uint64_t mix_seed(std::uint64_t, std::string_view, std::uint64_t);
};

/// Stable hash used to derive child seeds (fnv1a over label + splitmix64).
std::uint64_t mix_seed(std::uint64_t base, std::string_view label,
                       std::uint64_t index);

}  // namespace cabledyn
