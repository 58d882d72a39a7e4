#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace gpa3d {

// Deterministic counter-free PRNG (splitmix64 core). Results are identical
// across platforms for a given seed, which the reproducibility contracts of
// the training loop and the scene generator rely on. std::mt19937 plus the
// standard distributions would tie outputs to the libstdc++ version.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  // Standard normal via Box-Muller; one spare value cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Normal clamped to mean +/- n_sigma * sd.
  double normal_clamped(double mean, double sd, double n_sigma) {
    const double value = normal(mean, sd);
    const double lo = mean - n_sigma * sd;
    const double hi = mean + n_sigma * sd;
    return value < lo ? lo : (value > hi ? hi : value);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(items[i - 1], items[j]);
    }
  }

  // First k entries of a Fisher-Yates pass; order within the sample is random
  // but fully determined by the stream state.
  std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool,
                                                      std::size_t k) {
    if (k > pool.size()) k = pool.size();
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(uniform_int(
                                    0, static_cast<std::int64_t>(pool.size() - i) - 1));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Independent stream for (seed, purpose, index). Purposes use distinct
// constants so e.g. scene generation and background sampling never share a
// stream even for equal indices.
inline std::uint64_t mix_stream(std::uint64_t seed, std::uint64_t purpose,
                                std::uint64_t index) {
  std::uint64_t z = seed ^ (purpose * 0x9e3779b97f4a7c15ULL) ^
                    (index * 0xd1b54a32d192ed03ULL);
  z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdULL;
  z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
  return z ^ (z >> 33);
}

namespace stream {
constexpr std::uint64_t kSceneGen = 0x01;
constexpr std::uint64_t kParamInit = 0x02;
constexpr std::uint64_t kPrototypeInit = 0x03;
constexpr std::uint64_t kEpochShuffle = 0x04;
constexpr std::uint64_t kBackgroundSample = 0x05;
constexpr std::uint64_t kInstanceReplace = 0x06;
}  // namespace stream

inline Rng make_stream(std::uint64_t seed, std::uint64_t purpose,
                       std::uint64_t index = 0) {
  return Rng(mix_stream(seed, purpose, index));
}

}  // namespace gpa3d
