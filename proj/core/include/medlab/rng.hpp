#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace medlab {

// Seeded generator with hand-rolled distributions. std::mt19937_64 is
// bit-exact everywhere, but the standard distributions are
// implementation-defined, so we draw uniforms/normals ourselves to keep
// runs byte-identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; caches the second draw of each pair.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  // Integer in [0, n). Modulo bias is ~n/2^64, irrelevant at our scales.
  uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  // Index drawn from a probability vector. Entries with probability zero
  // are never selected; returns the last positive entry if rounding pushes
  // the draw past the accumulated total.
  size_t categorical(std::span<const double> probs);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64-style combiner for deriving independent streams from
// (seed, stream_id) pairs.
uint64_t mix_seed(uint64_t seed, uint64_t stream);

// FNV-1a 64-bit, used for instance fingerprints and config hashes.
uint64_t fnv1a64(std::string_view bytes);

}  // namespace medlab
