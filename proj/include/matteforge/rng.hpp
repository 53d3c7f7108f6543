#pragma once

#include <cmath>
#include <cstdint>

namespace mf {

// Deterministic splitmix64 stream. The full state is one u64, which keeps
// checkpoint/resume and manifest provenance trivial and platform-independent
// (std:: distributions are not guaranteed bit-stable across libraries).
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    uint64_t span = uint64_t(hi - lo) + 1;
    return lo + int(next_u64() % span);
  }

  // Box-Muller without the cached spare, so the state stays a single u64.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

  // Independent child stream, e.g. one per dataset sample.
  Rng fork(uint64_t key) {
    Rng r(state_ ^ (key * 0xD1342543DE82EF95ULL + 0x2545F4914F6CDD1DULL));
    r.next_u64();
    return r;
  }

 private:
  uint64_t state_;
};

}  // namespace mf
