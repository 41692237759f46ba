#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace untl {

// Self-contained xoshiro256** generator. Standard-library distributions are
// implementation-defined, so everything that must reproduce bit-exactly
// (corpus generation, init, shuffles) goes through this.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  double uniform();                       // [0, 1), 53-bit resolution
  double uniform(double lo, double hi);   // [lo, hi)
  double normal();                        // standard normal, Box-Muller
  int uniform_int(int n);                 // [0, n), requires n > 0

  // Derived generator for an independent sub-stream.
  Rng fork(uint64_t stream);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

// FNV-1a, used for reproducibility fingerprints.
uint64_t fnv1a(const void* bytes, size_t len, uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace untl
