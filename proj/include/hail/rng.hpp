#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace hail {

/// Mixes a 64-bit value (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

/// Derives an independent stream seed from a base seed and a list of keys.
/// Used so that per-(item, worker) draws do not depend on evaluation order.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys);

/// FNV-1a over the bytes of a string.
std::uint64_t hash_string(std::string_view s);

// Thin wrapper over mt19937_64 with distribution code that does not depend
// on the standard library's implementation-defined distributions, so streams
// are reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();
  // Index drawn proportional to non-negative weights.
  std::size_t categorical(const std::vector<double>& weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hail
