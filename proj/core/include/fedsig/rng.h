#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fedsig {

// splitmix64 finalizer; mixes a seed with stream identifiers so that
// derived seeds are a pure function of their inputs.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a = 0,
                       std::uint64_t b = 0, std::uint64_t c = 0);

// Portable random source. The standard distributions are
// implementation-defined, so all draws are built directly from the
// 64-bit Mersenne Twister output to stay identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n), unbiased by rejection.
  std::uint64_t below(std::uint64_t n);
  std::int64_t between(std::int64_t lo, std::int64_t hi_inclusive);
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[below(i)]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace fedsig
