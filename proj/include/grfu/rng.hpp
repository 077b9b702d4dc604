#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace grfu {

inline uint64_t mix64(uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

/// Sequential seeded stream (SplitMix64). Uniform draws avoid
/// std::uniform_real_distribution so the sequence is identical on every
/// platform and toolchain.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }  // [0,1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double gaussian() {
    const double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;  // (0,1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  uint64_t state_;
};

/// Order-independent stream: the draw at a key tuple does not depend on how
/// many other draws happened before it.
inline uint64_t key_hash(std::initializer_list<uint64_t> parts) {
  uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (uint64_t p : parts) h = mix64(h + 0x9e3779b97f4a7c15ULL + p * 0xff51afd7ed558ccdULL);
  return h;
}

inline double keyed_uniform(uint64_t key) {
  return static_cast<double>(mix64(key ^ 0xd1b54a32d192ed03ULL) >> 11) * 0x1.0p-53;
}

inline double keyed_gaussian(uint64_t key) {
  const double u1 =
      static_cast<double>((mix64(key ^ 0x8cb92ba72f3d8dd7ULL) >> 11) + 1) * 0x1.0p-53;
  const double u2 = static_cast<double>(mix64(key ^ 0x3c6ef372fe94f82aULL) >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace grfu
