#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace mflal {

/// Seeded random stream. Wraps std::mt19937_64 and performs every
/// transform (uniform, normal, integer) itself so that draws are
/// reproducible across standard library implementations. The engine state
/// round-trips through `state()` / `set_state()`.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller; no cached second variate.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);

  std::string state() const;
  void set_state(const std::string& text);

  /// Derives an independent child stream.
  Rng split();

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; used to key independent streams by integers.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);

}  // namespace mflal
