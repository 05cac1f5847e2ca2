#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace spinn {

// Deterministic counter-seeded random stream (splitmix64 core).
//
// Every logical consumer of randomness (an operating condition, an epoch
// shuffle, a layer initialisation) owns its own stream, derived from a master
// seed and a stream id.  Streams are independent of the order in which they
// are drawn from, so serial and parallel generation produce identical data.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream_id)
      : state_(mix(mix(seed) + 0x9E3779B97F4A7C15ULL * (stream_id + 1))) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Unbiased integer in [0, n) via rejection.
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the logarithm is finite.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream-id spaces.  The low 32 bits carry the entity index (operating
// condition id, epoch number, layer index); the high bits tag the purpose.
namespace stream {
constexpr std::uint64_t kind(std::uint64_t k, std::uint64_t index) {
  return (k << 32) | (index & 0xFFFFFFFFULL);
}
constexpr std::uint64_t kOcLoads = 1;        // per-OC load draws
constexpr std::uint64_t kLabeledTimes = 2;   // per-OC labeled sample times
constexpr std::uint64_t kCollocation = 3;    // per-OC collocation times
constexpr std::uint64_t kSplit = 4;          // per-OC train/validation shuffle
constexpr std::uint64_t kInit = 5;           // per-network parameter init
constexpr std::uint64_t kEpochLabeled = 6;   // per-epoch labeled shuffle
constexpr std::uint64_t kEpochColl = 7;      // per-epoch collocation shuffle
}  // namespace stream

// In-place Fisher-Yates shuffle driven by a stream.
template <typename T>
void shuffle(std::vector<T>& v, RandomStream& rs) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rs.uniform_below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace spinn
