#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace zsda {

// Seeded random stream. The engine is std::mt19937_64, whose output sequence is fixed
// by the standard; the conversions to uniform/normal/integer draws are done here rather
// than through <random> distributions (those are implementation-defined), so a seed
// reproduces the same draws on every platform.
//
// Normal draws use the Box-Muller transform; both values of each generated pair are
// consumed, the second one cached for the next call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// n i.i.d. standard normal draws.
std::vector<double> gaussian(Rng& rng, std::size_t n);

// Deterministic child seed for independent sub-streams (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace zsda
