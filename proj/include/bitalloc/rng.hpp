#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bitalloc {

// splitmix64; used to expand seeds and derive independent substreams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Seeded generator with explicit [0,1) mapping so that streams are
// reproducible bit-for-bit (std distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Substream for (seed, index); used for per-episode / per-iteration streams.
  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t s = seed + 0x9e3779b97f4a7c15ull * (index + 1);
    return Rng(splitmix64(s));
  }

  std::uint64_t next_u64() { return gen_(); }

  double uniform() {  // [0, 1)
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; two uniforms consumed per call, no cached spare.
  double gaussian(double mean = 0.0, double stddev = 1.0) {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * mag * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Fisher-Yates over [0, n); deterministic for a given stream position.
  template <typename IndexContainer>
  void shuffle(IndexContainer& idx) {
    for (std::size_t i = idx.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_u64() % i);
      std::swap(idx[i - 1], idx[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace bitalloc
