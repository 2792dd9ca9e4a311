#pragma once

#include <cstdint>
#include <random>

namespace mempoet {

// Deterministic random source. mt19937_64 is fully specified by the standard
// and the double/int mappings below avoid std::*_distribution, whose output
// is implementation-defined, so streams are identical on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double next_double() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // [0, n)
  int next_below(int n) { return static_cast<int>(eng_() % static_cast<uint64_t>(n)); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[static_cast<size_t>(next_below(i + 1))]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace mempoet
