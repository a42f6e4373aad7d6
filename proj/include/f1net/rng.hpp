#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace f1net {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic RNG stream. Child streams are derived by mixing the creating
// seed with an index, so results are invariant to worker count: every
// parallel task owns the stream derived from its own index.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : seed_(seed), eng_(seed) {}

  static uint64_t mix(uint64_t master, uint64_t index) {
    uint64_t s = master ^ (0xd1342543de82ef95ull * (index + 1));
    uint64_t a = splitmix64(s);
    uint64_t b = splitmix64(s);
    return a ^ (b << 1);
  }

  // child stream; independent of how much of this stream has been consumed
  RngStream derive(uint64_t index) const { return RngStream(mix(seed_, index)); }

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() { return eng_(); }

  // uniform on (0,1); never returns an endpoint
  double uniform01() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller; two uniforms per call, no cached spare, so the stream state
  // after n calls does not depend on call sites.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  size_t uniform_index(size_t n) {
    return static_cast<size_t>(next_u64() % (n == 0 ? 1 : n));
  }

 private:
  uint64_t seed_;
  std::mt19937_64 eng_;
};

}  // namespace f1net
