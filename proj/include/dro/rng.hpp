#ifndef DRO_RNG_HPP
#define DRO_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace dro {

// Counter-based seeded random stream. Substreams are derived from the parent
// key alone (not from generator state), so stream.child(i) is reproducible
// no matter how many draws the parent has made. This makes per-repetition
// and per-iteration streams safe to hand out to parallel workers.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : key_(seed), gen_(mix(seed, 0x6a09e667f3bcc909ULL)) {}

  // Independent substream identified by (parent key, index).
  RngStream child(std::uint64_t index) const { return RngStream(mix(key_, index)); }

  std::uint64_t key() const { return key_; }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Marsaglia polar; no cached spare, so the draw
  // sequence depends only on how many normals were requested.
  double normal() {
    for (;;) {
      const double u = 2.0 * uniform() - 1.0;
      const double v = 2.0 * uniform() - 1.0;
      const double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Geometric with success probability 1/2 on {1, 2, 3, ...}.
  int geometric_half() {
    int j = 1;
    while (!bernoulli(0.5)) ++j;
    return j;
  }

  // Index draw from cumulative probabilities (nondecreasing, back() ~= 1).
  int categorical(const std::vector<double>& cumulative) {
    const double u = uniform();
    int lo = 0, hi = static_cast<int>(cumulative.size()) - 1;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (u < cumulative[mid])
        hi = mid;
      else
        lo = mid + 1;
    }
    return lo;
  }

  static std::uint64_t mix(std::uint64_t key, std::uint64_t index) {
    // splitmix64 over the pair, applied twice to decorrelate nearby indices
    std::uint64_t z = key + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = splitmix(z);
    z = splitmix(z ^ key);
    return z;
  }

 private:
  static std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::mt19937_64 gen_;
};

}  // namespace dro

#endif  // DRO_RNG_HPP
