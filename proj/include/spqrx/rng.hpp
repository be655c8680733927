#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace spqrx {

// Seeded 64-bit generator used everywhere randomness enters the pipeline.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. Uniform variates are formed directly from the top 53 bits as
// (floor(x / 2^11) + 0.5) / 2^53, which lies strictly inside (0, 1); the
// standard distribution adaptors are avoided because their algorithms are
// implementation defined. Independent streams are obtained with
// derive_seed(seed, stream), a SplitMix64 hash of the pair.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer on [0, n) by rejection, free of modulo bias.
  std::uint64_t below(std::uint64_t n);

  // Fisher-Yates shuffle driven by below().
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ (stream * 0x9E3779B97F4A7C15ULL + 1));
}

}  // namespace spqrx
