#include "medlab/rng.hpp"

#include <cmath>

namespace medlab {

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Box-Muller on (0,1] x [0,1) uniforms.
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

size_t Rng::categorical(std::span<const double> probs) {
  double total = 0.0;
  for (double p : probs) total += p;
  const double u = uniform() * total;
  double cum = 0.0;
  size_t last_positive = 0;
  bool seen_positive = false;
  for (size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) {
      last_positive = i;
      seen_positive = true;
    }
    cum += probs[i];
    if (u < cum && probs[i] > 0.0) return i;
  }
  return seen_positive ? last_positive : probs.size() - 1;
}

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace medlab
